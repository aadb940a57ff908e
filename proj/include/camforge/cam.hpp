#pragma once

// Grad-CAM, Grad-CAM+ (positive gradients) and Grad-CAM++ channel weights,
// alphas and raw localization maps.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "camforge/error.hpp"
#include "camforge/nn.hpp"
#include "camforge/tensor.hpp"

namespace camforge::cam {

enum class Method { gradcam, gradcam_plus, gradcam_pp };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::gradcam: return "gradcam";
        case Method::gradcam_plus: return "gradcam-plus";
        case Method::gradcam_pp: return "gradcam-pp";
    }
    return "?";
}

inline Method method_from_string(const std::string& name) {
    if (name == "gradcam") return Method::gradcam;
    if (name == "gradcam-plus") return Method::gradcam_plus;
    if (name == "gradcam-pp") return Method::gradcam_pp;
    throw InvalidArgument("unknown attribution method '" + name + "'");
}

struct AttributionRequest {
    Method method = Method::gradcam;
    int layer = 0;
    nn::ScoreSpec score;
    double lambda = 1.0;         // Grad-CAM++ only
    double alpha_epsilon = 0.0;  // 0 keeps every denominator as computed
    /// Replaces every nonzero Grad-CAM++ alpha with this value.
    std::optional<double> constant_alpha;

    void validate() const {
        if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InvalidArgument("lambda must be positive");
        if (!(alpha_epsilon >= 0.0)) throw InvalidArgument("alpha epsilon must be nonnegative");
        if (constant_alpha && !(*constant_alpha > 0.0))
            throw InvalidArgument("constant alpha must be positive");
    }
};

template <typename T>
struct ChannelWeights {
    std::vector<T> values;
};

struct UnitIndex {
    std::size_t k = 0, i = 0, j = 0;
    friend bool operator==(const UnitIndex&, const UnitIndex&) = default;
};

template <typename T>
struct AlphaField {
    Tensor<T> values;
    /// Extremes over nonzero alphas, non-finite ones included.
    T min_nonzero = std::numeric_limits<T>::quiet_NaN();
    T max_nonzero = std::numeric_limits<T>::quiet_NaN();
    std::size_t nonzero_count = 0;
    std::size_t zero_gradient_count = 0;
    /// Units whose |denominator| < alpha_epsilon were set to zero.
    std::size_t clamped_count = 0;
    /// Units whose denominator was exactly zero (alpha_epsilon == 0 only).
    std::vector<UnitIndex> non_finite_units;
};

template <typename T>
struct RawHeatmap {
    Tensor<T> values;  // [H,W], nonnegative
    AttributionRequest source;
};

namespace detail {

template <typename T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

template <typename T>
std::vector<T> map_sums(const Tensor<T>& activations) {
    const auto meta = FeatureMapMeta::of(activations);
    std::vector<T> sums(meta.map_count, T{0});
    for (std::size_t k = 0; k < meta.map_count; ++k)
        for (std::size_t u = 0; u < meta.size(); ++u) sums[k] += activations[k * meta.size() + u];
    return sums;
}

/// Shared driver for both alpha forms. `ratio(g, sum)` returns the
/// numerator/denominator pair for a unit with nonzero gradient.
template <typename T, typename Ratio>
AlphaField<T> alpha_field(const Tensor<T>& grads, const Tensor<T>& activations, double alpha_epsilon,
                          Ratio ratio) {
    require_same(grads, activations, "alpha");
    const auto meta = FeatureMapMeta::of(grads);
    meta.validate();
    if (!(alpha_epsilon >= 0.0)) throw InvalidArgument("alpha epsilon must be nonnegative");
    const auto sums = map_sums(activations);

    AlphaField<T> field;
    field.values = Tensor<T>(grads.shape());
    for (std::size_t k = 0; k < meta.map_count; ++k) {
        for (std::size_t i = 0; i < meta.height; ++i) {
            for (std::size_t j = 0; j < meta.width; ++j) {
                const T g = grads.at(k, i, j);
                if (g == T{0}) {
                    ++field.zero_gradient_count;
                    continue;
                }
                const auto [num, den] = ratio(g, sums[k]);
                if (alpha_epsilon > 0.0 && std::abs(static_cast<double>(den)) < alpha_epsilon) {
                    ++field.clamped_count;
                    continue;
                }
                const T a = num / den;
                if (den == T{0}) field.non_finite_units.push_back({k, i, j});
                field.values.at(k, i, j) = a;
                if (a != T{0}) {
                    if (field.nonzero_count == 0 || a < field.min_nonzero) field.min_nonzero = a;
                    if (field.nonzero_count == 0 || a > field.max_nonzero) field.max_nonzero = a;
                    ++field.nonzero_count;
                }
            }
        }
    }
    return field;
}

}  // namespace detail

/// w_k = (1/Z) sum_ij grads[k,i,j]
template <typename T>
ChannelWeights<T> gradcam_weights(const Tensor<T>& grads, const FeatureMapMeta& meta) {
    meta.require_matches(grads);
    ChannelWeights<T> w{std::vector<T>(meta.map_count, T{0})};
    for (std::size_t k = 0; k < meta.map_count; ++k) {
        T acc = 0;
        for (std::size_t u = 0; u < meta.size(); ++u) acc += grads[k * meta.size() + u];
        w.values[k] = acc / static_cast<T>(meta.size());
    }
    return w;
}

/// w_k = (1/Z) sum_ij max(grads[k,i,j], 0)
template <typename T>
ChannelWeights<T> gradcam_plus_weights(const Tensor<T>& grads, const FeatureMapMeta& meta) {
    meta.require_matches(grads);
    ChannelWeights<T> w{std::vector<T>(meta.map_count, T{0})};
    for (std::size_t k = 0; k < meta.map_count; ++k) {
        T acc = 0;
        for (std::size_t u = 0; u < meta.size(); ++u) acc += std::max(grads[k * meta.size() + u], T{0});
        w.values[k] = acc / static_cast<T>(meta.size());
    }
    return w;
}

/// alpha = 1 / (2 + lambda * g * sum_ab A[k,a,b]); zero where g == 0.
/// `grads` are gradients of the pre-softmax score.
template <typename T>
AlphaField<T> alpha_stable(const Tensor<T>& grads, const Tensor<T>& activations, double lambda = 1.0,
                           double alpha_epsilon = 0.0) {
    if (!(lambda > 0.0)) throw InvalidArgument("lambda must be positive");
    const T lam = static_cast<T>(lambda);
    return detail::alpha_field(grads, activations, alpha_epsilon, [lam](T g, T s) {
        return std::pair<T, T>{T{1}, T{2} + lam * g * s};
    });
}

/// alpha = g^2 / (2 g^2 + lambda * sum_ab A[k,a,b] * g^3); zero where g == 0.
template <typename T>
AlphaField<T> alpha_cubic(const Tensor<T>& grads, const Tensor<T>& activations, double lambda = 1.0,
                          double alpha_epsilon = 0.0) {
    if (!(lambda > 0.0)) throw InvalidArgument("lambda must be positive");
    const T lam = static_cast<T>(lambda);
    return detail::alpha_field(grads, activations, alpha_epsilon, [lam](T g, T s) {
        const T g2 = g * g;
        const T g3 = g2 * g;
        return std::pair<T, T>{g2, T{2} * g2 + lam * s * g3};
    });
}

/// Every nonzero-gradient alpha replaced by `value`.
template <typename T>
AlphaField<T> constant_alphas(const Tensor<T>& grads, T value) {
    AlphaField<T> field;
    field.values = Tensor<T>(grads.shape());
    for (std::size_t u = 0; u < grads.size(); ++u) {
        if (grads[u] == T{0}) {
            ++field.zero_gradient_count;
        } else {
            field.values[u] = value;
            ++field.nonzero_count;
        }
    }
    if (field.nonzero_count) field.min_nonzero = field.max_nonzero = value;
    return field;
}

/// w_k = sum_ij alpha[k,i,j] * max(grads[k,i,j], 0). Units with a
/// nonpositive gradient contribute nothing whatever their alpha.
template <typename T>
ChannelWeights<T> gradcam_pp_weights(const Tensor<T>& grads, const Tensor<T>& activations,
                                     const AlphaField<T>& alphas, const FeatureMapMeta& meta) {
    meta.require_matches(grads);
    detail::require_same(grads, activations, "gradcam++ weights");
    detail::require_same(grads, alphas.values, "gradcam++ weights");
    ChannelWeights<T> w{std::vector<T>(meta.map_count, T{0})};
    for (std::size_t k = 0; k < meta.map_count; ++k) {
        T acc = 0;
        for (std::size_t u = 0; u < meta.size(); ++u) {
            const std::size_t idx = k * meta.size() + u;
            if (grads[idx] > T{0}) acc += alphas.values[idx] * grads[idx];
        }
        w.values[k] = acc;
    }
    return w;
}

/// L = relu(sum_k w_k A^k)
template <typename T>
RawHeatmap<T> combine_maps(const ChannelWeights<T>& weights, const Tensor<T>& activations) {
    const auto meta = FeatureMapMeta::of(activations);
    meta.validate();
    if (weights.values.size() != meta.map_count)
        throw ShapeError("have " + std::to_string(weights.values.size()) + " weights for " +
                         std::to_string(meta.map_count) + " maps");
    Tensor<T> out({meta.height, meta.width});
    for (std::size_t k = 0; k < meta.map_count; ++k) {
        const T wk = weights.values[k];
        for (std::size_t u = 0; u < meta.size(); ++u) out[u] += wk * activations[k * meta.size() + u];
    }
    for (auto& v : out.data()) v = std::max(v, T{0});
    return {std::move(out), {}};
}

template <typename T>
struct Attribution {
    RawHeatmap<T> heatmap;
    ChannelWeights<T> weights;
    std::optional<AlphaField<T>> alphas;  // Grad-CAM++ only
};

/// Heatmap from precomputed tensors: layer activations, gradients of the
/// requested score, and gradients of the pre-softmax score S^c (used for
/// Grad-CAM++ alphas only).
template <typename T>
Attribution<T> heatmap_from_gradients(const Tensor<T>& activations, const Tensor<T>& score_grads,
                                      const Tensor<T>& pre_softmax_grads,
                                      const AttributionRequest& request) {
    request.validate();
    const auto meta = FeatureMapMeta::of(activations);
    meta.validate();
    Attribution<T> out;
    switch (request.method) {
        case Method::gradcam: out.weights = gradcam_weights(score_grads, meta); break;
        case Method::gradcam_plus: out.weights = gradcam_plus_weights(score_grads, meta); break;
        case Method::gradcam_pp: {
            AlphaField<T> alphas =
                request.constant_alpha
                    ? constant_alphas(pre_softmax_grads, static_cast<T>(*request.constant_alpha))
                    : alpha_stable(pre_softmax_grads, activations, request.lambda, request.alpha_epsilon);
            out.weights = gradcam_pp_weights(score_grads, activations, alphas, meta);
            out.alphas = std::move(alphas);
            break;
        }
    }
    out.heatmap = combine_maps(out.weights, activations);
    out.heatmap.source = request;
    return out;
}

template <typename T>
Attribution<T> attribute(const nn::Model<T>& model, const nn::ForwardTrace<T>& trace,
                         const AttributionRequest& request) {
    request.validate();
    const Tensor<T> grads = nn::backward_to_layer(model, trace, request.score, request.layer);
    Tensor<T> pre_grads;
    if (request.method == Method::gradcam_pp) {
        pre_grads = request.score.mode == nn::ScoreMode::pre_softmax
                        ? grads
                        : nn::backward_to_layer(model, trace,
                                                {request.score.class_index, nn::ScoreMode::pre_softmax},
                                                request.layer);
    }
    return heatmap_from_gradients(trace.at(request.layer), grads, pre_grads, request);
}

/// Forward pass, backprop to the requested layer, and heatmap.
template <typename T>
Attribution<T> attribute(const nn::Model<T>& model, const Tensor<T>& image,
                         const AttributionRequest& request) {
    request.validate();
    const auto trace = nn::forward(model, image);
    return attribute(model, trace, request);
}

}  // namespace camforge::cam
