#pragma once

// Binary PGM (P5) / PPM (P6) with maxval 255.

#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "camforge/error.hpp"
#include "camforge/postproc.hpp"

namespace camforge::netpbm {

namespace detail {

class HeaderReader {
public:
    explicit HeaderReader(const std::vector<unsigned char>& bytes) : b_(bytes) {}

    void skip_space_and_comments() {
        while (pos_ < b_.size()) {
            if (std::isspace(b_[pos_])) {
                ++pos_;
            } else if (b_[pos_] == '#') {
                while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    std::size_t number() {
        skip_space_and_comments();
        if (pos_ >= b_.size() || !std::isdigit(b_[pos_])) throw FormatError("netpbm header: expected a number");
        std::size_t v = 0;
        while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
            v = v * 10 + static_cast<std::size_t>(b_[pos_++] - '0');
            if (v > (1u << 24)) throw FormatError("netpbm header: value too large");
        }
        return v;
    }

    /// Exactly one whitespace byte separates maxval from the raster.
    void single_space() {
        if (pos_ >= b_.size() || !std::isspace(b_[pos_])) throw FormatError("netpbm header: missing separator");
        ++pos_;
    }

    std::size_t pos() const { return pos_; }
    void advance(std::size_t n) { pos_ += n; }

private:
    const std::vector<unsigned char>& b_;
    std::size_t pos_ = 0;
};

inline unsigned char quantize(double v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace detail

inline postproc::Image decode(const std::vector<unsigned char>& bytes, std::string provenance = {}) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
        throw FormatError("unsupported image: only binary PGM (P5) and PPM (P6) are read");
    const std::size_t channels = bytes[1] == '5' ? 1 : 3;
    detail::HeaderReader r(bytes);
    r.advance(2);
    const std::size_t width = r.number();
    const std::size_t height = r.number();
    const std::size_t maxval = r.number();
    if (maxval != 255) throw FormatError("unsupported maxval " + std::to_string(maxval) + " (only 255)");
    if (width == 0 || height == 0) throw FormatError("image has zero extent");
    r.single_space();
    const std::size_t count = channels * width * height;
    if (bytes.size() - r.pos() < count) throw FormatError("image raster truncated");

    postproc::Image img{Tensor<double>({channels, height, width}), std::move(provenance)};
    // Raster is interleaved per pixel; the tensor is planar.
    const unsigned char* p = bytes.data() + r.pos();
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x)
            for (std::size_t c = 0; c < channels; ++c)
                img.pixels.at(c, y, x) = static_cast<double>(*p++) / 255.0;
    return img;
}

inline std::vector<unsigned char> encode(const postproc::Image& img) {
    const std::size_t C = img.pixels.rank() == 3 ? img.channels() : 0;
    if (C != 1 && C != 3) throw InvalidArgument("images must have 1 or 3 channels");
    const std::string header = std::string(C == 1 ? "P5" : "P6") + "\n" + std::to_string(img.width()) + " " +
                               std::to_string(img.height()) + "\n255\n";
    std::vector<unsigned char> out(header.begin(), header.end());
    out.reserve(out.size() + img.pixels.size());
    for (std::size_t y = 0; y < img.height(); ++y)
        for (std::size_t x = 0; x < img.width(); ++x)
            for (std::size_t c = 0; c < C; ++c) out.push_back(detail::quantize(img.pixels.at(c, y, x)));
    return out;
}

inline postproc::Image read_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image '" + path.string() + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode(bytes, path.string());
}

inline void write_image(const postproc::Image& img, const std::filesystem::path& path) {
    const auto bytes = encode(img);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

/// Writes a normalized heatmap as an 8-bit grayscale PGM.
template <typename T>
void write_heatmap(const postproc::NormalizedHeatmap<T>& h, const std::filesystem::path& path) {
    write_image({h.values.template cast<double>().reshaped({1, h.values.dim(0), h.values.dim(1)}), "heatmap"},
                path);
}

}  // namespace camforge::netpbm
