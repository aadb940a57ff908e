#pragma once

// Dense row-major tensor used for images, activations and gradients.
//
// Tensor<float> is the inference precision and Tensor<double> the one used by
// the finite-difference oracles. Shapes carry only positive extents; a
// default-constructed tensor is the single "empty" placeholder state.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "camforge/error.hpp"

namespace camforge {

using Shape = std::vector<std::size_t>;

enum class Precision { f32, f64 };

template <typename T>
constexpr Precision precision_of() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>,
                  "Tensor supports float and double only");
    return std::is_same_v<T, float> ? Precision::f32 : Precision::f64;
}

inline std::size_t shape_product(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
        check_shape(shape_);
        data_.assign(shape_product(shape_), fill);
    }

    Tensor(Shape shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape(shape_);
        if (shape_product(shape_) != data_.size())
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string(shape_));
    }

    static Tensor vector(std::initializer_list<T> values) {
        return Tensor({values.size()}, std::vector<T>(values));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    static constexpr Precision precision() { return precision_of<T>(); }

    std::span<const T> data() const noexcept { return data_; }
    std::span<T> data() noexcept { return data_; }
    const std::vector<T>& values() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // Rank-2 and rank-3 element access; bounds are the caller's contract.
    T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    const T& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    T& at(std::size_t k, std::size_t i, std::size_t j) {
        return data_[(k * shape_[1] + i) * shape_[2] + j];
    }
    const T& at(std::size_t k, std::size_t i, std::size_t j) const {
        return data_[(k * shape_[1] + i) * shape_[2] + j];
    }

    Tensor reshaped(Shape shape) const {
        if (shape_product(shape) != data_.size())
            throw ShapeError("cannot reshape " + shape_string(shape_) + " to " +
                             shape_string(shape));
        return Tensor(std::move(shape), data_);
    }

    /// Converts precision; double to float rounds to nearest.
    template <typename U>
    Tensor<U> cast() const {
        if (empty()) return {};
        std::vector<U> out(data_.size());
        std::transform(data_.begin(), data_.end(), out.begin(),
                       [](T v) { return static_cast<U>(v); });
        return Tensor<U>(shape_, std::move(out));
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(),
                           [](T v) { return std::isfinite(v); });
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    static void check_shape(const Shape& shape) {
        if (shape.empty()) throw ShapeError("tensor shape must have at least one axis");
        for (auto d : shape)
            if (d == 0) throw ShapeError("tensor extents must be positive: " + shape_string(shape));
    }

    Shape shape_;
    std::vector<T> data_;
};

/// Spatial bookkeeping for one convolutional layer: K maps of Z = H * W units.
struct FeatureMapMeta {
    std::size_t map_count = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t size() const noexcept { return height * width; }

    template <typename T>
    static FeatureMapMeta of(const Tensor<T>& maps) {
        if (maps.rank() != 3)
            throw ShapeError("feature maps must be rank-3 [K,H,W], got " +
                             shape_string(maps.shape()));
        return {maps.dim(0), maps.dim(1), maps.dim(2)};
    }

    void validate() const {
        if (size() == 0 || map_count == 0) throw ShapeError("empty feature map");
    }

    template <typename T>
    void require_matches(const Tensor<T>& maps) const {
        validate();
        if (maps.rank() != 3 || maps.dim(0) != map_count || maps.dim(1) != height ||
            maps.dim(2) != width)
            throw ShapeError("feature map meta does not match tensor " +
                             shape_string(maps.shape()));
    }
};

enum class ElementwiseOp { add, mul, relu, scale };

enum class ReduceOp { sum, mean, min, max };

namespace detail {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw ShapeError("shape mismatch: " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

}  // namespace detail

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    Tensor<T> out = a;
    for (auto& v : out.data()) v = std::max(v, T{0});
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    Tensor<T> out = a;
    for (auto& v : out.data()) v *= factor;
    return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b);
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b);
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

/// Generic dispatcher. `b` is required for add/mul; `factor` is used by scale.
template <typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a, const Tensor<T>* b = nullptr,
                      T factor = T{1}) {
    switch (op) {
        case ElementwiseOp::relu: return relu(a);
        case ElementwiseOp::scale: return scale(a, factor);
        case ElementwiseOp::add:
        case ElementwiseOp::mul:
            if (b == nullptr) throw InvalidArgument("binary elementwise op needs two operands");
            return op == ElementwiseOp::add ? add(a, *b) : mul(a, *b);
    }
    throw InvalidArgument("unknown elementwise op");
}

/// Reduces over `axes` (all axes when empty). The result keeps the
/// non-reduced axes in order; reducing every axis yields shape [1].
template <typename T>
Tensor<T> reduce(ReduceOp op, const Tensor<T>& t, std::vector<std::size_t> axes = {}) {
    if (t.empty()) throw ShapeError("reduction over an empty tensor");
    const std::size_t rank = t.rank();
    if (axes.empty()) {
        axes.resize(rank);
        std::iota(axes.begin(), axes.end(), 0);
    }
    std::vector<bool> reduced(rank, false);
    for (auto ax : axes) {
        if (ax >= rank) throw ShapeError("reduction axis out of range");
        if (reduced[ax]) throw ShapeError("duplicate reduction axis");
        reduced[ax] = true;
    }

    Shape out_shape;
    for (std::size_t ax = 0; ax < rank; ++ax)
        if (!reduced[ax]) out_shape.push_back(t.dim(ax));
    if (out_shape.empty()) out_shape.push_back(1);

    const std::size_t out_size = shape_product(out_shape);
    const std::size_t count = t.size() / out_size;
    std::vector<T> acc(out_size, op == ReduceOp::min   ? std::numeric_limits<T>::infinity()
                                 : op == ReduceOp::max ? -std::numeric_limits<T>::infinity()
                                                       : T{0});

    std::vector<std::size_t> index(rank, 0);
    for (std::size_t flat = 0; flat < t.size(); ++flat) {
        std::size_t out_flat = 0;
        for (std::size_t ax = 0; ax < rank; ++ax)
            if (!reduced[ax]) out_flat = out_flat * t.dim(ax) + index[ax];
        const T v = t[flat];
        auto& slot = acc[out_flat];
        switch (op) {
            case ReduceOp::sum:
            case ReduceOp::mean: slot += v; break;
            case ReduceOp::min: slot = std::min(slot, v); break;
            case ReduceOp::max: slot = std::max(slot, v); break;
        }
        for (std::size_t ax = rank; ax-- > 0;) {
            if (++index[ax] < t.dim(ax)) break;
            index[ax] = 0;
        }
    }
    if (op == ReduceOp::mean)
        for (auto& v : acc) v /= static_cast<T>(count);
    return Tensor<T>(std::move(out_shape), std::move(acc));
}

template <typename T>
T sum(const Tensor<T>& t) { return reduce(ReduceOp::sum, t)[0]; }

template <typename T>
T mean(const Tensor<T>& t) { return reduce(ReduceOp::mean, t)[0]; }

template <typename T>
T min(const Tensor<T>& t) { return reduce(ReduceOp::min, t)[0]; }

template <typename T>
T max(const Tensor<T>& t) { return reduce(ReduceOp::max, t)[0]; }

}  // namespace camforge
