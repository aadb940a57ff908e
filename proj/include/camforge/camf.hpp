#pragma once

// CAMF weight files.
//
//   offset 0   "CAMF"                      4 bytes
//   offset 4   u32 version (= 1)           little-endian
//   offset 8   u32 manifest length N       little-endian
//   offset 12  N bytes UTF-8 JSON manifest (sorted keys, compact)
//   then       IEEE-754 binary32 little-endian values of every parameter
//              tensor listed in the manifest, in manifest order, row-major
//
// See docs/formats.md for the manifest schema.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "camforge/error.hpp"
#include "camforge/nn.hpp"

namespace camforge::camf {

inline constexpr char kMagic[4] = {'C', 'A', 'M', 'F'};
inline constexpr std::uint32_t kVersion = 1;

enum class ErrorCode { bad_magic = 1, bad_version, truncated, bad_manifest, validation };

inline const char* to_string(ErrorCode c) {
    switch (c) {
        case ErrorCode::bad_magic: return "bad magic";
        case ErrorCode::bad_version: return "unsupported version";
        case ErrorCode::truncated: return "truncated file";
        case ErrorCode::bad_manifest: return "malformed manifest";
        case ErrorCode::validation: return "validation failed";
    }
    return "?";
}

class CamfError : public FormatError {
public:
    CamfError(ErrorCode code, const std::string& what)
        : FormatError(std::string("CAMF ") + to_string(code) + ": " + what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

inline nlohmann::json layer_to_json(const nn::LayerSpec& s) {
    nlohmann::json j;
    j["kind"] = nn::to_string(s.kind);
    switch (s.kind) {
        case nn::LayerKind::conv2d:
            j["outChannels"] = s.out_channels;
            j["inChannels"] = s.in_channels;
            j["kernelH"] = s.kernel_h;
            j["kernelW"] = s.kernel_w;
            j["stride"] = s.stride;
            j["padding"] = s.padding;
            break;
        case nn::LayerKind::maxpool:
            j["window"] = s.window;
            j["stride"] = s.stride;
            break;
        case nn::LayerKind::dense:
            j["outFeatures"] = s.out_features;
            j["inFeatures"] = s.in_features;
            break;
        default: break;
    }
    return j;
}

inline nn::LayerSpec layer_from_json(const nlohmann::json& j) {
    auto get = [&](const char* key) { return j.at(key).get<std::size_t>(); };
    switch (nn::layer_kind_from_string(j.at("kind").get<std::string>())) {
        case nn::LayerKind::conv2d:
            return nn::LayerSpec::conv2d(get("outChannels"), get("inChannels"), get("kernelH"),
                                         get("kernelW"), get("stride"), get("padding"));
        case nn::LayerKind::relu: return nn::LayerSpec::relu();
        case nn::LayerKind::maxpool: return nn::LayerSpec::maxpool(get("window"), get("stride"));
        case nn::LayerKind::flatten: return nn::LayerSpec::flatten();
        case nn::LayerKind::dense: return nn::LayerSpec::dense(get("outFeatures"), get("inFeatures"));
    }
    throw FormatError("unreachable layer kind");
}

}  // namespace detail

inline nlohmann::json manifest(const nn::Model<float>& model) {
    nlohmann::json m;
    m["format"] = "CAMF";
    m["precision"] = "f32";
    m["inputShape"] = model.input_shape;
    m["layers"] = nlohmann::json::array();
    m["tensors"] = nlohmann::json::array();
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const auto& spec = model.layers[i];
        m["layers"].push_back(detail::layer_to_json(spec));
        if (spec.has_parameters()) {
            m["tensors"].push_back({{"layer", i}, {"role", "kernel"}, {"shape", spec.weight_shape()}});
            m["tensors"].push_back({{"layer", i}, {"role", "bias"}, {"shape", spec.bias_shape()}});
        }
    }
    return m;
}

inline std::vector<std::uint8_t> encode(const nn::Model<float>& model) {
    model.validate();
    const std::string text = manifest(model).dump();
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    detail::put_u32(out, kVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    for (const auto& w : model.weights) {
        for (const auto* t : {&w.kernel, &w.bias}) {
            for (float v : t->data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
        }
    }
    return out;
}

inline nn::Model<float> decode(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4) throw CamfError(ErrorCode::truncated, "missing magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw CamfError(ErrorCode::bad_magic, "not a CAMF file");
    if (bytes.size() < 12) throw CamfError(ErrorCode::truncated, "header incomplete");
    const std::uint32_t version = detail::get_u32(bytes.data() + 4);
    if (version != kVersion)
        throw CamfError(ErrorCode::bad_version, "version " + std::to_string(version));
    const std::uint32_t manifest_len = detail::get_u32(bytes.data() + 8);
    if (bytes.size() - 12 < manifest_len) throw CamfError(ErrorCode::truncated, "manifest incomplete");

    nlohmann::json m;
    try {
        m = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + manifest_len);
    } catch (const nlohmann::json::exception& e) {
        throw CamfError(ErrorCode::bad_manifest, e.what());
    }

    nn::Model<float> model;
    std::vector<nlohmann::json> tensors;
    try {
        if (m.at("precision").get<std::string>() != "f32")
            throw CamfError(ErrorCode::bad_manifest, "only f32 payloads are supported");
        model.input_shape = m.at("inputShape").get<Shape>();
        for (const auto& lj : m.at("layers")) model.layers.push_back(detail::layer_from_json(lj));
        tensors = m.at("tensors").get<std::vector<nlohmann::json>>();
    } catch (const CamfError&) {
        throw;
    } catch (const std::exception& e) {
        throw CamfError(ErrorCode::bad_manifest, e.what());
    }
    model.weights.resize(model.layers.size());

    // Every parameterized layer must list kernel then bias, in layer order,
    // with shapes matching its spec.
    std::size_t next = 0;
    std::size_t offset = 12 + manifest_len;
    try {
        for (std::size_t i = 0; i < model.layers.size(); ++i) {
            const auto& spec = model.layers[i];
            if (!spec.has_parameters()) continue;
            for (const char* role : {"kernel", "bias"}) {
                if (next >= tensors.size())
                    throw CamfError(ErrorCode::validation, "missing tensor for layer " + std::to_string(i));
                const auto& tj = tensors[next++];
                const Shape shape = tj.at("shape").get<Shape>();
                const Shape expected =
                    std::string(role) == "kernel" ? spec.weight_shape() : spec.bias_shape();
                if (tj.at("layer").get<std::size_t>() != i || tj.at("role").get<std::string>() != role ||
                    shape != expected || shape_product(shape) != shape_product(expected))
                    throw CamfError(ErrorCode::validation,
                                    "tensor " + std::to_string(next - 1) + " declares " +
                                        shape_string(shape) + ", layer " + std::to_string(i) +
                                        " needs " + shape_string(expected));
                const std::size_t count = shape_product(shape);
                if ((bytes.size() - offset) / 4 < count)
                    throw CamfError(ErrorCode::truncated, "payload ends inside tensor " +
                                                              std::to_string(next - 1));
                std::vector<float> values(count);
                for (std::size_t k = 0; k < count; ++k, offset += 4)
                    values[k] = std::bit_cast<float>(detail::get_u32(bytes.data() + offset));
                auto& w = model.weights[i];
                (std::string(role) == "kernel" ? w.kernel : w.bias) = Tensor<float>(shape, std::move(values));
            }
        }
    } catch (const CamfError&) {
        throw;
    } catch (const nlohmann::json::exception& e) {
        throw CamfError(ErrorCode::bad_manifest, e.what());
    }
    if (next != tensors.size())
        throw CamfError(ErrorCode::validation, "manifest lists extra tensors");
    if (offset != bytes.size())
        throw CamfError(ErrorCode::validation, "trailing bytes after payload");
    try {
        model.validate();
    } catch (const ShapeError& e) {
        throw CamfError(ErrorCode::validation, e.what());
    }
    return model;
}

inline void save_model(const nn::Model<float>& model, const std::filesystem::path& path) {
    const auto bytes = encode(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline nn::Model<float> load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode(bytes);
}

}  // namespace camforge::camf
