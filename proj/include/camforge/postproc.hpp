#pragma once

// Heatmap normalization, align-corners bilinear upsampling, explanation maps
// and the colormap overlay.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "camforge/cam.hpp"
#include "camforge/error.hpp"
#include "camforge/tensor.hpp"

namespace camforge::postproc {

template <typename T>
struct NormalizedHeatmap {
    Tensor<T> values;  // [H,W] in [0,1]
    /// Source heatmap was constant; values are all zero.
    bool degenerate = false;
};

/// Image with C in {1,3} channels, [C,H,W], values in [0,1].
struct Image {
    Tensor<double> pixels;
    std::string provenance;

    std::size_t channels() const { return pixels.dim(0); }
    std::size_t height() const { return pixels.dim(1); }
    std::size_t width() const { return pixels.dim(2); }
};

struct ExplanationMap {
    Tensor<double> values;  // same shape as the image
};

template <typename T>
NormalizedHeatmap<T> min_max_normalize(const Tensor<T>& h) {
    if (h.empty()) throw ShapeError("cannot normalize an empty heatmap");
    const auto [lo_it, hi_it] = std::minmax_element(h.data().begin(), h.data().end());
    const T lo = *lo_it, hi = *hi_it;
    NormalizedHeatmap<T> out{Tensor<T>(h.shape()), false};
    if (!(hi > lo)) {
        out.degenerate = true;
        return out;
    }
    const T range = hi - lo;
    for (std::size_t i = 0; i < h.size(); ++i) out.values[i] = (h[i] - lo) / range;
    return out;
}

template <typename T>
NormalizedHeatmap<T> min_max_normalize(const cam::RawHeatmap<T>& h) {
    return min_max_normalize(h.values);
}

/// Align-corners bilinear resize of a [H,W] tensor to [out_h,out_w]:
/// source coordinate = dst * (src - 1) / (dst_dim - 1). Output dims must not
/// be smaller than the source.
template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& src, std::size_t out_h, std::size_t out_w) {
    if (src.rank() != 2) throw ShapeError("bilinear upsample expects a [H,W] map");
    const std::size_t H = src.dim(0), W = src.dim(1);
    if (out_h < H || out_w < W)
        throw InvalidArgument("upsample target " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                              " is smaller than source " + std::to_string(H) + "x" + std::to_string(W));
    auto coord = [](std::size_t dst, std::size_t src_dim, std::size_t dst_dim) {
        if (dst_dim <= 1) return 0.0;
        return static_cast<double>(dst) * static_cast<double>(src_dim - 1) /
               static_cast<double>(dst_dim - 1);
    };
    Tensor<T> out({out_h, out_w});
    for (std::size_t y = 0; y < out_h; ++y) {
        const double sy = coord(y, H, out_h);
        const auto y0 = std::min(static_cast<std::size_t>(sy), H - 1);
        const std::size_t y1 = std::min(y0 + 1, H - 1);
        const T fy = static_cast<T>(sy - static_cast<double>(y0));
        for (std::size_t x = 0; x < out_w; ++x) {
            const double sx = coord(x, W, out_w);
            const auto x0 = std::min(static_cast<std::size_t>(sx), W - 1);
            const std::size_t x1 = std::min(x0 + 1, W - 1);
            const T fx = static_cast<T>(sx - static_cast<double>(x0));
            const T top = fx == T{0} ? src.at(y0, x0) : (1 - fx) * src.at(y0, x0) + fx * src.at(y0, x1);
            const T bot = fx == T{0} ? src.at(y1, x0) : (1 - fx) * src.at(y1, x0) + fx * src.at(y1, x1);
            out.at(y, x) = fy == T{0} ? top : (1 - fy) * top + fy * bot;
        }
    }
    return out;
}

template <typename T>
NormalizedHeatmap<T> bilinear_upsample(const NormalizedHeatmap<T>& h, std::size_t out_h,
                                       std::size_t out_w) {
    return {bilinear_upsample(h.values, out_h, out_w), h.degenerate};
}

/// E[c,i,j] = L[i,j] * I[c,i,j]
template <typename T>
ExplanationMap explanation_map(const NormalizedHeatmap<T>& h, const Image& img) {
    if (h.values.rank() != 2 || h.values.dim(0) != img.height() || h.values.dim(1) != img.width())
        throw ShapeError("heatmap " + shape_string(h.values.shape()) + " does not match image " +
                         shape_string(img.pixels.shape()));
    ExplanationMap e{img.pixels};
    const std::size_t plane = img.height() * img.width();
    for (std::size_t c = 0; c < img.channels(); ++c)
        for (std::size_t u = 0; u < plane; ++u)
            e.values[c * plane + u] = static_cast<double>(h.values[u]) * img.pixels[c * plane + u];
    return e;
}

/// Normalize, upsample to the image size, and mask the image.
template <typename T>
std::pair<NormalizedHeatmap<T>, ExplanationMap> explain(const cam::RawHeatmap<T>& raw, const Image& img) {
    auto up = bilinear_upsample(min_max_normalize(raw), img.height(), img.width());
    auto e = explanation_map(up, img);
    return {std::move(up), std::move(e)};
}

/// Five-stop linear colormap: 0 blue, .25 cyan, .5 green, .75 yellow, 1 red.
inline std::array<double, 3> colormap(double v) {
    static constexpr std::array<std::array<double, 3>, 5> stops{{
        {0, 0, 255}, {0, 255, 255}, {0, 255, 0}, {255, 255, 0}, {255, 0, 0}}};
    v = std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0);
    const double pos = v * 4.0;
    const auto lo = std::min(static_cast<std::size_t>(pos), std::size_t{3});
    const double f = pos - static_cast<double>(lo);
    std::array<double, 3> rgb{};
    for (std::size_t c = 0; c < 3; ++c) rgb[c] = ((1 - f) * stops[lo][c] + f * stops[lo + 1][c]) / 255.0;
    return rgb;
}

/// RGB image: colormapped heatmap blended at 50% over the (grayscale
/// replicated) source image.
template <typename T>
Image overlay(const NormalizedHeatmap<T>& h, const Image& img) {
    if (h.values.rank() != 2 || h.values.dim(0) != img.height() || h.values.dim(1) != img.width())
        throw ShapeError("overlay heatmap does not match image size");
    const std::size_t H = img.height(), W = img.width();
    Image out{Tensor<double>({3, H, W}), img.provenance + " (overlay)"};
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            const auto rgb = colormap(static_cast<double>(h.values.at(y, x)));
            for (std::size_t c = 0; c < 3; ++c) {
                const double base = img.pixels.at(img.channels() == 3 ? c : 0, y, x);
                out.pixels.at(c, y, x) = 0.5 * rgb[c] + 0.5 * base;
            }
        }
    }
    return out;
}

}  // namespace camforge::postproc
