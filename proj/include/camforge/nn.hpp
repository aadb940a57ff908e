#pragma once

// Minimal sequential CNN: forward pass with every activation cached, and
// reverse accumulation of one scalar score down to any intermediate layer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "camforge/error.hpp"
#include "camforge/splitmix64.hpp"
#include "camforge/tensor.hpp"

namespace camforge::nn {

enum class LayerKind { conv2d, relu, maxpool, flatten, dense };

inline const char* to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::relu: return "relu";
        case LayerKind::maxpool: return "maxpool";
        case LayerKind::flatten: return "flatten";
        case LayerKind::dense: return "dense";
    }
    return "?";
}

inline LayerKind layer_kind_from_string(const std::string& name) {
    for (auto k : {LayerKind::conv2d, LayerKind::relu, LayerKind::maxpool, LayerKind::flatten,
                   LayerKind::dense})
        if (name == to_string(k)) return k;
    throw FormatError("unknown layer kind '" + name + "'");
}

/// One layer of a sequential model. Only the fields relevant to `kind` are
/// meaningful; the rest stay zero.
struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::size_t out_channels = 0, in_channels = 0;
    std::size_t kernel_h = 0, kernel_w = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t window = 0;
    std::size_t out_features = 0, in_features = 0;

    static LayerSpec conv2d(std::size_t out_c, std::size_t in_c, std::size_t kh, std::size_t kw,
                            std::size_t stride = 1, std::size_t padding = 0) {
        LayerSpec s;
        s.kind = LayerKind::conv2d;
        s.out_channels = out_c;
        s.in_channels = in_c;
        s.kernel_h = kh;
        s.kernel_w = kw;
        s.stride = stride;
        s.padding = padding;
        return s;
    }
    static LayerSpec relu() { return {}; }
    static LayerSpec maxpool(std::size_t window, std::size_t stride) {
        LayerSpec s;
        s.kind = LayerKind::maxpool;
        s.window = window;
        s.stride = stride;
        return s;
    }
    static LayerSpec flatten() {
        LayerSpec s;
        s.kind = LayerKind::flatten;
        return s;
    }
    static LayerSpec dense(std::size_t out_f, std::size_t in_f) {
        LayerSpec s;
        s.kind = LayerKind::dense;
        s.out_features = out_f;
        s.in_features = in_f;
        return s;
    }

    bool has_parameters() const {
        return kind == LayerKind::conv2d || kind == LayerKind::dense;
    }

    Shape weight_shape() const {
        if (kind == LayerKind::conv2d) return {out_channels, in_channels, kernel_h, kernel_w};
        if (kind == LayerKind::dense) return {out_features, in_features};
        return {};
    }

    Shape bias_shape() const {
        if (kind == LayerKind::conv2d) return {out_channels};
        if (kind == LayerKind::dense) return {out_features};
        return {};
    }

    std::size_t fan_in() const {
        if (kind == LayerKind::conv2d) return in_channels * kernel_h * kernel_w;
        if (kind == LayerKind::dense) return in_features;
        return 0;
    }

    /// Output shape for the given input shape; throws ShapeError when the
    /// layer cannot consume it.
    Shape output_shape(const Shape& in) const {
        switch (kind) {
            case LayerKind::conv2d: {
                if (in.size() != 3 || in[0] != in_channels)
                    throw ShapeError("conv2d expects [" + std::to_string(in_channels) +
                                     ",H,W] input, got " + shape_string(in));
                if (stride < 1 || kernel_h == 0 || kernel_w == 0 || out_channels == 0)
                    throw ShapeError("conv2d parameters invalid");
                if (in[1] + 2 * padding < kernel_h || in[2] + 2 * padding < kernel_w)
                    throw ShapeError("conv2d kernel larger than padded input");
                return {out_channels, (in[1] + 2 * padding - kernel_h) / stride + 1,
                        (in[2] + 2 * padding - kernel_w) / stride + 1};
            }
            case LayerKind::relu: return in;
            case LayerKind::maxpool: {
                if (in.size() != 3) throw ShapeError("maxpool expects rank-3 input");
                if (stride < 1 || window == 0 || in[1] < window || in[2] < window)
                    throw ShapeError("maxpool window/stride invalid for " + shape_string(in));
                return {in[0], (in[1] - window) / stride + 1, (in[2] - window) / stride + 1};
            }
            case LayerKind::flatten: return {shape_product(in)};
            case LayerKind::dense: {
                if (in.size() != 1 || in[0] != in_features)
                    throw ShapeError("dense expects [" + std::to_string(in_features) +
                                     "] input, got " + shape_string(in));
                if (out_features == 0) throw ShapeError("dense with zero outputs");
                return {out_features};
            }
        }
        throw ShapeError("unknown layer kind");
    }
};

template <typename T>
struct LayerWeights {
    Tensor<T> kernel;  // conv [outC,inC,kH,kW] or dense [outF,inF]; empty otherwise
    Tensor<T> bias;
};

template <typename T>
struct Model {
    Shape input_shape;
    std::vector<LayerSpec> layers;
    std::vector<LayerWeights<T>> weights;  // parallel to layers

    std::size_t layer_count() const { return layers.size(); }

    /// Output shape of every layer, checking that consecutive layers compose
    /// and that parameter tensors have the declared shapes.
    std::vector<Shape> validate() const {
        if (layers.empty()) throw ShapeError("model has no layers");
        if (weights.size() != layers.size())
            throw ShapeError("weights list does not parallel the layer list");
        std::vector<Shape> shapes;
        Shape cur = input_shape;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const auto& spec = layers[i];
            if (spec.has_parameters()) {
                if (weights[i].kernel.shape() != spec.weight_shape() ||
                    weights[i].bias.shape() != spec.bias_shape())
                    throw ShapeError("layer " + std::to_string(i) +
                                     " parameter shapes do not match its spec");
            } else if (!weights[i].kernel.empty() || !weights[i].bias.empty()) {
                throw ShapeError("layer " + std::to_string(i) + " has unexpected parameters");
            }
            cur = spec.output_shape(cur);
            shapes.push_back(cur);
        }
        if (cur.size() != 1) throw ShapeError("final layer must produce a score vector");
        return shapes;
    }

    std::size_t class_count() const { return validate().back()[0]; }

    template <typename U>
    Model<U> cast() const {
        Model<U> out;
        out.input_shape = input_shape;
        out.layers = layers;
        for (const auto& w : weights)
            out.weights.push_back({w.kernel.template cast<U>(), w.bias.template cast<U>()});
        return out;
    }

    friend bool operator==(const Model& a, const Model& b) {
        if (a.input_shape != b.input_shape || a.layers.size() != b.layers.size()) return false;
        for (std::size_t i = 0; i < a.layers.size(); ++i) {
            const auto &x = a.layers[i], &y = b.layers[i];
            if (x.kind != y.kind || x.out_channels != y.out_channels ||
                x.in_channels != y.in_channels || x.kernel_h != y.kernel_h ||
                x.kernel_w != y.kernel_w || x.stride != y.stride || x.padding != y.padding ||
                x.window != y.window || x.out_features != y.out_features ||
                x.in_features != y.in_features)
                return false;
            if (!(a.weights[i].kernel == b.weights[i].kernel) ||
                !(a.weights[i].bias == b.weights[i].bias))
                return false;
        }
        return true;
    }
};

/// Index of the image itself when a layer index is expected.
inline constexpr int kInputLayer = -1;

template <typename T>
struct ForwardTrace {
    Tensor<T> input;
    /// activations[i] is the output of layer i and the input of layer i + 1.
    /// Traces started mid-network leave the earlier entries empty.
    std::vector<Tensor<T>> activations;
    std::vector<T> pre_softmax;
    std::vector<T> post_softmax;

    const Tensor<T>& at(int layer) const {
        return layer == kInputLayer ? input : activations.at(static_cast<std::size_t>(layer));
    }
    std::size_t class_count() const { return pre_softmax.size(); }
};

enum class ScoreMode { pre_softmax, post_softmax };

inline const char* to_string(ScoreMode m) {
    return m == ScoreMode::pre_softmax ? "pre" : "post";
}

struct ScoreSpec {
    std::size_t class_index = 0;
    ScoreMode mode = ScoreMode::pre_softmax;
};

template <typename T>
std::vector<T> softmax(const std::vector<T>& scores) {
    const T top = *std::max_element(scores.begin(), scores.end());
    std::vector<T> out(scores.size());
    T total = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - top);
        total += out[i];
    }
    for (auto& v : out) v /= total;
    return out;
}

template <typename T>
std::size_t argmax(const std::vector<T>& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

namespace detail {

template <typename T>
Tensor<T> conv2d_forward(const LayerSpec& s, const LayerWeights<T>& w, const Tensor<T>& x,
                         const Shape& out_shape) {
    Tensor<T> y(out_shape);
    const std::size_t H = x.dim(1), W = x.dim(2);
    const std::size_t OH = out_shape[1], OW = out_shape[2];
    const auto pad = static_cast<std::ptrdiff_t>(s.padding);
    for (std::size_t co = 0; co < s.out_channels; ++co) {
        for (std::size_t oy = 0; oy < OH; ++oy) {
            for (std::size_t ox = 0; ox < OW; ++ox) {
                T acc = w.bias[co];
                for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
                    for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
                        const auto iy = static_cast<std::ptrdiff_t>(oy * s.stride + ky) - pad;
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                        for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
                            const auto ix = static_cast<std::ptrdiff_t>(ox * s.stride + kx) - pad;
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                            acc += w.kernel[((co * s.in_channels + ci) * s.kernel_h + ky) *
                                                s.kernel_w + kx] *
                                   x.at(ci, static_cast<std::size_t>(iy),
                                        static_cast<std::size_t>(ix));
                        }
                    }
                }
                y.at(co, oy, ox) = acc;
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> conv2d_backward(const LayerSpec& s, const LayerWeights<T>& w, const Shape& in_shape,
                          const Tensor<T>& dy) {
    Tensor<T> dx(in_shape);
    const std::size_t H = in_shape[1], W = in_shape[2];
    const std::size_t OH = dy.dim(1), OW = dy.dim(2);
    const auto pad = static_cast<std::ptrdiff_t>(s.padding);
    for (std::size_t co = 0; co < s.out_channels; ++co) {
        for (std::size_t oy = 0; oy < OH; ++oy) {
            for (std::size_t ox = 0; ox < OW; ++ox) {
                const T g = dy.at(co, oy, ox);
                if (g == T{0}) continue;
                for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
                    for (std::size_t ky = 0; ky < s.kernel_h; ++ky) {
                        const auto iy = static_cast<std::ptrdiff_t>(oy * s.stride + ky) - pad;
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                        for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
                            const auto ix = static_cast<std::ptrdiff_t>(ox * s.stride + kx) - pad;
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                            dx.at(ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) +=
                                w.kernel[((co * s.in_channels + ci) * s.kernel_h + ky) *
                                             s.kernel_w + kx] * g;
                        }
                    }
                }
            }
        }
    }
    return dx;
}

/// Flat input index of the window maximum; first maximal element in scan
/// order wins ties.
template <typename T>
std::size_t maxpool_argmax(const LayerSpec& s, const Tensor<T>& x, std::size_t c, std::size_t oy,
                           std::size_t ox) {
    std::size_t best = 0;
    T best_v = -std::numeric_limits<T>::infinity();
    bool first = true;
    for (std::size_t wy = 0; wy < s.window; ++wy) {
        for (std::size_t wx = 0; wx < s.window; ++wx) {
            const std::size_t iy = oy * s.stride + wy, ix = ox * s.stride + wx;
            const T v = x.at(c, iy, ix);
            if (first || v > best_v) {
                best_v = v;
                best = (c * x.dim(1) + iy) * x.dim(2) + ix;
                first = false;
            }
        }
    }
    return best;
}

template <typename T>
Tensor<T> maxpool_forward(const LayerSpec& s, const Tensor<T>& x, const Shape& out_shape) {
    Tensor<T> y(out_shape);
    for (std::size_t c = 0; c < out_shape[0]; ++c)
        for (std::size_t oy = 0; oy < out_shape[1]; ++oy)
            for (std::size_t ox = 0; ox < out_shape[2]; ++ox)
                y.at(c, oy, ox) = x[maxpool_argmax(s, x, c, oy, ox)];
    return y;
}

template <typename T>
Tensor<T> maxpool_backward(const LayerSpec& s, const Tensor<T>& x, const Tensor<T>& dy) {
    Tensor<T> dx(x.shape());
    for (std::size_t c = 0; c < dy.dim(0); ++c)
        for (std::size_t oy = 0; oy < dy.dim(1); ++oy)
            for (std::size_t ox = 0; ox < dy.dim(2); ++ox)
                dx[maxpool_argmax(s, x, c, oy, ox)] += dy.at(c, oy, ox);
    return dx;
}

template <typename T>
Tensor<T> dense_forward(const LayerSpec& s, const LayerWeights<T>& w, const Tensor<T>& x) {
    Tensor<T> y({s.out_features});
    for (std::size_t o = 0; o < s.out_features; ++o) {
        T acc = w.bias[o];
        for (std::size_t i = 0; i < s.in_features; ++i) acc += w.kernel[o * s.in_features + i] * x[i];
        y[o] = acc;
    }
    return y;
}

template <typename T>
Tensor<T> dense_backward(const LayerSpec& s, const LayerWeights<T>& w, const Tensor<T>& dy) {
    Tensor<T> dx({s.in_features});
    for (std::size_t o = 0; o < s.out_features; ++o) {
        const T g = dy[o];
        if (g == T{0}) continue;
        for (std::size_t i = 0; i < s.in_features; ++i) dx[i] += w.kernel[o * s.in_features + i] * g;
    }
    return dx;
}

template <typename T>
Tensor<T> layer_forward(const LayerSpec& s, const LayerWeights<T>& w, const Tensor<T>& x) {
    const Shape out_shape = s.output_shape(x.shape());
    switch (s.kind) {
        case LayerKind::conv2d: return conv2d_forward(s, w, x, out_shape);
        case LayerKind::relu: return relu(x);
        case LayerKind::maxpool: return maxpool_forward(s, x, out_shape);
        case LayerKind::flatten: return x.reshaped(out_shape);
        case LayerKind::dense: return dense_forward(s, w, x);
    }
    throw ShapeError("unknown layer kind");
}

/// Gradient w.r.t. the layer input `x` given the gradient `dy` w.r.t. its output.
template <typename T>
Tensor<T> layer_backward(const LayerSpec& s, const LayerWeights<T>& w, const Tensor<T>& x,
                         const Tensor<T>& dy) {
    switch (s.kind) {
        case LayerKind::conv2d: return conv2d_backward(s, w, x.shape(), dy);
        case LayerKind::relu: {
            Tensor<T> dx = dy;
            for (std::size_t i = 0; i < dx.size(); ++i)
                if (!(x[i] > T{0})) dx[i] = T{0};
            return dx;
        }
        case LayerKind::maxpool: return maxpool_backward(s, x, dy);
        case LayerKind::flatten: return dy.reshaped(x.shape());
        case LayerKind::dense: return dense_backward(s, w, dy);
    }
    throw ShapeError("unknown layer kind");
}

}  // namespace detail

/// Runs layers start+1 .. end on `activation`, which is taken to be the
/// output of layer `start` (or the image when start == kInputLayer).
template <typename T>
ForwardTrace<T> forward_from(const Model<T>& model, int start, const Tensor<T>& activation) {
    const auto shapes = model.validate();
    const int n = static_cast<int>(model.layer_count());
    if (start < kInputLayer || start >= n) throw ShapeError("layer index out of range");
    const Shape& expected =
        start == kInputLayer ? model.input_shape : shapes[static_cast<std::size_t>(start)];
    if (activation.shape() != expected)
        throw ShapeError("activation shape " + shape_string(activation.shape()) +
                         " does not match expected " + shape_string(expected));

    ForwardTrace<T> trace;
    trace.activations.resize(model.layer_count());
    if (start == kInputLayer)
        trace.input = activation;
    else
        trace.activations[static_cast<std::size_t>(start)] = activation;
    for (int i = start + 1; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        trace.activations[idx] =
            detail::layer_forward(model.layers[idx], model.weights[idx], trace.at(i - 1));
    }
    const auto& scores = trace.activations.back();
    trace.pre_softmax.assign(scores.data().begin(), scores.data().end());
    trace.post_softmax = softmax(trace.pre_softmax);
    return trace;
}

template <typename T>
ForwardTrace<T> forward(const Model<T>& model, const Tensor<T>& image) {
    if (image.shape() != model.input_shape)
        throw ShapeError("image shape " + shape_string(image.shape()) +
                         " does not match model input " + shape_string(model.input_shape));
    if (!image.all_finite()) throw InvalidArgument("image contains non-finite values");
    return forward_from(model, kInputLayer, image);
}

/// d(score) / d(pre-softmax scores), with the softmax Jacobian row
/// p_c (delta_cj - p_j) applied in post-softmax mode.
template <typename T>
Tensor<T> score_gradient(const ForwardTrace<T>& trace, const ScoreSpec& score) {
    const std::size_t n = trace.class_count();
    if (score.class_index >= n)
        throw InvalidArgument("class index " + std::to_string(score.class_index) +
                              " out of range for " + std::to_string(n) + " classes");
    Tensor<T> g({n});
    if (score.mode == ScoreMode::pre_softmax) {
        g[score.class_index] = T{1};
    } else {
        const auto& p = trace.post_softmax;
        const T pc = p[score.class_index];
        for (std::size_t j = 0; j < n; ++j)
            g[j] = pc * ((j == score.class_index ? T{1} : T{0}) - p[j]);
    }
    return g;
}

/// Propagates `output_grad` (gradient w.r.t. the final layer output) down to
/// the output of `layer` (kInputLayer for the image). The trace must hold
/// every activation from `layer` onward.
template <typename T>
Tensor<T> backward_from_output(const Model<T>& model, const ForwardTrace<T>& trace,
                               const Tensor<T>& output_grad, int layer) {
    const int n = static_cast<int>(model.layer_count());
    if (layer < kInputLayer || layer >= n) throw ShapeError("layer index out of range");
    if (output_grad.shape() != trace.activations.back().shape())
        throw ShapeError("output gradient shape mismatch");
    Tensor<T> grad = output_grad;
    for (int i = n - 1; i > layer; --i) {
        const auto idx = static_cast<std::size_t>(i);
        const auto& x = trace.at(i - 1);
        if (x.empty()) throw ShapeError("trace is missing activation " + std::to_string(i - 1));
        grad = detail::layer_backward(model.layers[idx], model.weights[idx], x, grad);
    }
    return grad;
}

/// d y^c / d A at layer `layer`, where A must be a rank-3 feature-map tensor.
template <typename T>
Tensor<T> backward_to_layer(const Model<T>& model, const ForwardTrace<T>& trace,
                            const ScoreSpec& score, int layer) {
    if (layer < 0 || layer >= static_cast<int>(model.layer_count()))
        throw ShapeError("layer index " + std::to_string(layer) + " out of range");
    if (trace.at(layer).rank() != 3)
        throw ShapeError("layer " + std::to_string(layer) + " is not a spatial feature layer");
    return backward_from_output(model, trace, score_gradient(trace, score), layer);
}

/// d y^c / d image.
template <typename T>
Tensor<T> backward_to_input(const Model<T>& model, const ForwardTrace<T>& trace,
                            const ScoreSpec& score) {
    return backward_from_output(model, trace, score_gradient(trace, score), kInputLayer);
}

/// Indices of layers whose output is a rank-3 feature map.
template <typename T>
std::vector<int> spatial_layers(const Model<T>& model) {
    std::vector<int> out;
    const auto shapes = model.validate();
    for (std::size_t i = 0; i < shapes.size(); ++i)
        if (shapes[i].size() == 3) out.push_back(static_cast<int>(i));
    return out;
}

/// Default attribution layer: the last feature-map layer.
template <typename T>
int last_spatial_layer(const Model<T>& model) {
    const auto layers = spatial_layers(model);
    if (layers.empty()) throw ShapeError("model has no spatial layer");
    return layers.back();
}

/// Regime of every piecewise-linear unit downstream of `layer`: ReLU masks
/// and max-pool argmax indices. Two points with equal patterns lie in the same
/// linear piece of the network.
template <typename T>
std::vector<std::vector<std::size_t>> activation_pattern(const Model<T>& model,
                                                         const ForwardTrace<T>& trace, int layer) {
    std::vector<std::vector<std::size_t>> pattern;
    for (int i = layer + 1; i < static_cast<int>(model.layer_count()); ++i) {
        const auto& spec = model.layers[static_cast<std::size_t>(i)];
        const auto& x = trace.at(i - 1);
        std::vector<std::size_t> p;
        if (spec.kind == LayerKind::relu) {
            p.reserve(x.size());
            for (auto v : x.data()) p.push_back(v > T{0} ? 1 : 0);
        } else if (spec.kind == LayerKind::maxpool) {
            const auto& y = trace.at(i);
            for (std::size_t c = 0; c < y.dim(0); ++c)
                for (std::size_t oy = 0; oy < y.dim(1); ++oy)
                    for (std::size_t ox = 0; ox < y.dim(2); ++ox)
                        p.push_back(detail::maxpool_argmax(spec, x, c, oy, ox));
        }
        pattern.push_back(std::move(p));
    }
    return pattern;
}

enum class ToyArch { tiny, small, probe };

inline ToyArch toy_arch_from_string(const std::string& name) {
    if (name == "tiny") return ToyArch::tiny;
    if (name == "small") return ToyArch::small;
    if (name == "probe") return ToyArch::probe;
    throw InvalidArgument("unknown toy architecture '" + name + "'");
}

/// Layer list and input shape of a named toy architecture.
///   tiny : [1,16,16] conv(4)-relu-pool-conv(8)-relu-flatten-dense(10)
///   small: [3,32,32] conv(8)-relu-pool-conv(16)-relu-pool-conv(16)-relu-flatten-dense(10)
///   probe: [1,3,3]   conv(2)-relu-conv(2)-relu-flatten-dense(4); layer 3 is 2 maps of 3x3
inline std::pair<Shape, std::vector<LayerSpec>> toy_architecture(ToyArch arch) {
    using L = LayerSpec;
    switch (arch) {
        case ToyArch::tiny:
            return {{1, 16, 16},
                    {L::conv2d(4, 1, 3, 3, 1, 1), L::relu(), L::maxpool(2, 2),
                     L::conv2d(8, 4, 3, 3, 1, 1), L::relu(), L::flatten(), L::dense(10, 8 * 8 * 8)}};
        case ToyArch::small:
            return {{3, 32, 32},
                    {L::conv2d(8, 3, 3, 3, 1, 1), L::relu(), L::maxpool(2, 2),
                     L::conv2d(16, 8, 3, 3, 1, 1), L::relu(), L::maxpool(2, 2),
                     L::conv2d(16, 16, 3, 3, 1, 1), L::relu(), L::flatten(),
                     L::dense(10, 16 * 8 * 8)}};
        case ToyArch::probe:
            return {{1, 3, 3},
                    {L::conv2d(2, 1, 3, 3, 1, 1), L::relu(), L::conv2d(2, 2, 3, 3, 1, 1), L::relu(),
                     L::flatten(), L::dense(4, 2 * 3 * 3)}};
    }
    throw InvalidArgument("unknown toy architecture");
}

/// Deterministic toy model. For each parameterized layer in order, the kernel
/// (row-major) and then the bias are drawn from one SplitMix64 stream as
/// (u - 0.5) / sqrt(fan_in) with u uniform in [0,1), rounded to float.
inline Model<float> generate_toy_model(std::uint64_t seed, ToyArch arch) {
    auto [input_shape, layers] = toy_architecture(arch);
    Model<float> model;
    model.input_shape = input_shape;
    model.layers = layers;
    SplitMix64 rng(seed);
    for (const auto& spec : model.layers) {
        LayerWeights<float> w;
        if (spec.has_parameters()) {
            const double scale = 1.0 / std::sqrt(static_cast<double>(spec.fan_in()));
            auto draw = [&](const Shape& shape) {
                Tensor<float> t(shape);
                for (auto& v : t.data()) v = static_cast<float>((rng.uniform() - 0.5) * scale);
                return t;
            };
            w.kernel = draw(spec.weight_shape());
            w.bias = draw(spec.bias_shape());
        }
        model.weights.push_back(std::move(w));
    }
    model.validate();
    return model;
}

inline Model<float> generate_toy_model(std::uint64_t seed, const std::string& arch) {
    return generate_toy_model(seed, toy_arch_from_string(arch));
}

/// Seeded synthetic image in [0,1]: a few soft Gaussian blobs over a dim
/// noisy background.
template <typename T = double>
Tensor<T> synthetic_image(const Shape& shape, std::uint64_t seed) {
    if (shape.size() != 3) throw ShapeError("synthetic images are [C,H,W]");
    SplitMix64 rng(seed);
    Tensor<T> img(shape);
    const std::size_t C = shape[0], H = shape[1], W = shape[2];
    const std::size_t blobs = 1 + rng.below(3);
    struct Blob { double cy, cx, radius, amp[3]; };
    std::vector<Blob> bs;
    for (std::size_t b = 0; b < blobs; ++b) {
        Blob blob{rng.uniform(0, static_cast<double>(H)), rng.uniform(0, static_cast<double>(W)),
                  rng.uniform(0.1, 0.3) * static_cast<double>(std::max(H, W)), {}};
        for (double& a : blob.amp) a = rng.uniform(0.4, 1.0);
        bs.push_back(blob);
    }
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t x = 0; x < W; ++x) {
                double v = rng.uniform(0.0, 0.15);
                for (const auto& blob : bs) {
                    const double dy = static_cast<double>(y) - blob.cy;
                    const double dx = static_cast<double>(x) - blob.cx;
                    v += blob.amp[c % 3] *
                         std::exp(-(dy * dy + dx * dx) / (2 * blob.radius * blob.radius));
                }
                img.at(c, y, x) = static_cast<T>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return img;
}

}  // namespace camforge::nn
