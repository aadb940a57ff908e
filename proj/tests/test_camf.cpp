#include <cstring>
#include <fstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "camforge/camf.hpp"
#include "support.hpp"

namespace camf = camforge::camf;
namespace nn = camforge::nn;

namespace {

camf::ErrorCode code_of(const std::vector<std::uint8_t>& bytes) {
    try {
        camf::decode(bytes);
    } catch (const camf::CamfError& e) {
        return e.code();
    }
    ADD_FAILURE() << "decode accepted malformed bytes";
    return camf::ErrorCode::validation;
}

std::vector<std::uint8_t> with_manifest(const std::vector<std::uint8_t>& bytes, const nlohmann::json& manifest) {
    std::uint32_t len = 0;
    std::memcpy(&len, bytes.data() + 8, 4);
    const std::string text = manifest.dump();
    std::vector<std::uint8_t> out(bytes.begin(), bytes.begin() + 8);
    const auto n = static_cast<std::uint32_t>(text.size());
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(n >> (8 * i)));
    out.insert(out.end(), text.begin(), text.end());
    out.insert(out.end(), bytes.begin() + 12 + len, bytes.end());
    return out;
}

nlohmann::json manifest_of(const std::vector<std::uint8_t>& bytes) {
    std::uint32_t len = 0;
    std::memcpy(&len, bytes.data() + 8, 4);
    return nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + len);
}

}  // namespace

TEST(Camf, RoundTripIsByteIdentical) {
    for (auto arch : {nn::ToyArch::tiny, nn::ToyArch::small, nn::ToyArch::probe}) {
        const auto m = nn::generate_toy_model(42, arch);
        const auto bytes = camf::encode(m);
        const auto back = camf::decode(bytes);
        EXPECT_TRUE(back == m);
        EXPECT_EQ(camf::encode(back), bytes);
    }
}

TEST(Camf, SameSeedSameFile) {
    testing_support::TempDir dir("camf");
    camf::save_model(nn::generate_toy_model(42, nn::ToyArch::tiny), dir / "a.camf");
    camf::save_model(nn::generate_toy_model(42, nn::ToyArch::tiny), dir / "b.camf");
    std::ifstream a(dir / "a.camf", std::ios::binary), b(dir / "b.camf", std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
    EXPECT_EQ(sa, sb);
    EXPECT_TRUE(camf::load_model(dir / "a.camf") == nn::generate_toy_model(42, nn::ToyArch::tiny));
}

TEST(Camf, HeaderLayout) {
    const auto bytes = camf::encode(nn::generate_toy_model(42, nn::ToyArch::tiny));
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "CAMF");
    EXPECT_EQ(bytes[4], 1);
    EXPECT_EQ(bytes[5] | bytes[6] | bytes[7], 0);
    const auto j = manifest_of(bytes);
    EXPECT_EQ(j.at("format"), "CAMF");
    EXPECT_EQ(j.at("precision"), "f32");
    EXPECT_EQ(j.at("layers").size(), 7u);
}

TEST(Camf, Errors) {
    const auto good = camf::encode(nn::generate_toy_model(42, nn::ToyArch::probe));

    auto bad_magic = good;
    bad_magic[0] = 'X';
    EXPECT_EQ(code_of(bad_magic), camf::ErrorCode::bad_magic);

    auto bad_version = good;
    bad_version[4] = 2;
    EXPECT_EQ(code_of(bad_version), camf::ErrorCode::bad_version);

    EXPECT_EQ(code_of({good.begin(), good.end() - 3}), camf::ErrorCode::truncated);
    EXPECT_EQ(code_of({good.begin(), good.begin() + 10}), camf::ErrorCode::truncated);

    auto trailing = good;
    trailing.push_back(0);
    EXPECT_THROW(camf::decode(trailing), camf::CamfError);

    auto garbage = good;
    garbage[12] = '#';
    EXPECT_EQ(code_of(garbage), camf::ErrorCode::bad_manifest);
}

TEST(Camf, MismatchedShapeProductIsValidationError) {
    const auto good = camf::encode(nn::generate_toy_model(42, nn::ToyArch::probe));
    auto j = manifest_of(good);
    auto& first = j.at("tensors").at(0);
    first.at("shape").at(0) = first.at("shape").at(0).get<int>() + 1;
    EXPECT_EQ(code_of(with_manifest(good, j)), camf::ErrorCode::validation);
}

TEST(Camf, MissingFileIsIoError) {
    EXPECT_THROW(camf::load_model("/nonexistent/model.camf"), camforge::IoError);
}
