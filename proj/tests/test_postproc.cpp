#include <gtest/gtest.h>

#include "camforge/postproc.hpp"
#include "camforge/splitmix64.hpp"

namespace pp = camforge::postproc;
using camforge::Tensor;
using D = Tensor<double>;

namespace {

D random_map(camforge::SplitMix64& rng, std::size_t h, std::size_t w) {
    D t({h, w});
    for (auto& v : t.data()) v = rng.uniform(0, 5);
    return t;
}

}  // namespace

TEST(Normalize, Examples) {
    const auto n = pp::min_max_normalize(D({2, 2}, {0, 2, 4, 8}));
    EXPECT_EQ(n.values, D({2, 2}, {0, 0.25, 0.5, 1}));
    EXPECT_FALSE(n.degenerate);
    const auto c = pp::min_max_normalize(D({2, 2}, {3, 3, 3, 3}));
    EXPECT_TRUE(c.degenerate);
    EXPECT_EQ(c.values, D({2, 2}, {0, 0, 0, 0}));
    const D unit({2, 2}, {0, 0.3, 1, 0.7});
    const auto same = pp::min_max_normalize(unit);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(same.values[i], unit[i], 1e-7);
}

TEST(NormalizeProperty, UnitRangeAndScaleInvariance) {
    camforge::SplitMix64 rng(3);
    for (int t = 0; t < 50; ++t) {
        const auto h = random_map(rng, 1 + rng.below(8), 1 + rng.below(8));
        if (h.size() == 1) continue;
        const auto n = pp::min_max_normalize(h);
        EXPECT_NEAR(camforge::min(n.values), 0.0, 1e-7);
        EXPECT_NEAR(camforge::max(n.values), 1.0, 1e-7);
        const auto m = pp::min_max_normalize(camforge::scale(h, rng.uniform(0.01, 100.0)));
        for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(n.values[i], m.values[i], 1e-12);
    }
}

TEST(Upsample, AlignCornersExample) {
    const auto u = pp::bilinear_upsample(D({2, 2}, {0, 1, 1, 2}), 3, 3);
    EXPECT_EQ(u, D({3, 3}, {0, 0.5, 1, 0.5, 1, 1.5, 1, 1.5, 2}));
}

TEST(Upsample, SameSizeIsIdentity) {
    camforge::SplitMix64 rng(4);
    const auto h = random_map(rng, 5, 7);
    EXPECT_EQ(pp::bilinear_upsample(h, 5, 7), h);
}

TEST(Upsample, RejectsShrinking) {
    EXPECT_THROW(pp::bilinear_upsample(D({4, 4}), 2, 8), camforge::InvalidArgument);
}

TEST(UpsampleProperty, CornersAndRangePreserved) {
    camforge::SplitMix64 rng(5);
    for (int t = 0; t < 50; ++t) {
        const std::size_t h = 1 + rng.below(6), w = 1 + rng.below(6);
        const auto src = random_map(rng, h, w);
        const std::size_t oh = h + rng.below(20), ow = w + rng.below(20);
        const auto out = pp::bilinear_upsample(src, oh, ow);
        EXPECT_EQ(out.at(0, 0), src.at(0, 0));
        EXPECT_EQ(out.at(oh - 1, ow - 1), src.at(h - 1, w - 1));
        EXPECT_EQ(out.at(0, ow - 1), src.at(0, w - 1));
        EXPECT_LE(camforge::max(out), camforge::max(src));
        EXPECT_GE(camforge::min(out), camforge::min(src));
    }
}

// Holds when every source sample lands on an output pixel, i.e. when
// (out - 1) is a multiple of (src - 1); otherwise the upsampled extremes can
// fall short of the source extremes.
TEST(UpsampleProperty, CommutesWithNormalizationOnAlignedGrids) {
    camforge::SplitMix64 rng(6);
    for (int t = 0; t < 30; ++t) {
        const std::size_t h = 2 + rng.below(6), w = 2 + rng.below(6);
        const auto src = random_map(rng, h, w);
        const std::size_t oh = (h - 1) * (1 + rng.below(4)) + 1, ow = (w - 1) * (1 + rng.below(4)) + 1;
        const auto a = pp::min_max_normalize(pp::bilinear_upsample(src, oh, ow));
        const auto b = pp::bilinear_upsample(pp::min_max_normalize(src), oh, ow);
        for (std::size_t i = 0; i < a.values.size(); ++i) EXPECT_NEAR(a.values[i], b.values[i], 1e-6);
    }
}

TEST(Upsample, OffGridTargetsDoNotCommute) {
    const D src({2, 3}, {0, 5, 1, 2, 3, 4});
    const auto a = pp::min_max_normalize(pp::bilinear_upsample(src, 2, 4));
    const auto b = pp::bilinear_upsample(pp::min_max_normalize(src), 2, 4);
    EXPECT_GT(std::abs(a.values.at(0, 1) - b.values.at(0, 1)), 1e-3);
}

TEST(Explanation, Examples) {
    const pp::Image img{D({1, 2, 2}, {10.0 / 40, 20.0 / 40, 30.0 / 40, 40.0 / 40}), "t"};
    const pp::NormalizedHeatmap<double> l{D({2, 2}, {1, 0, 0.5, 1}), false};
    const auto e = pp::explanation_map(l, img);
    const D expected({1, 2, 2}, {10.0 / 40, 0, 15.0 / 40, 40.0 / 40});
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(e.values[i], expected[i], 1e-7);
    EXPECT_EQ(pp::explanation_map(pp::NormalizedHeatmap<double>{D({2, 2}, 1.0), false}, img).values, img.pixels);
    EXPECT_EQ(pp::explanation_map(pp::NormalizedHeatmap<double>{D({2, 2}, 0.0), true}, img).values, D({1, 2, 2}));
}

TEST(Explanation, ShapeMismatch) {
    const pp::Image img{D({3, 4, 4}), "t"};
    EXPECT_THROW(pp::explanation_map(pp::NormalizedHeatmap<double>{D({2, 2}), false}, img), camforge::ShapeError);
}

TEST(ExplanationProperty, PointwiseProductPerChannel) {
    camforge::SplitMix64 rng(8);
    pp::Image img{D({3, 6, 5}), "t"};
    for (auto& v : img.pixels.data()) v = rng.uniform();
    pp::NormalizedHeatmap<double> l{D({6, 5}), false};
    for (auto& v : l.values.data()) v = rng.uniform();
    const auto e = pp::explanation_map(l, img);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 5; ++j)
                EXPECT_NEAR(e.values.at(c, i, j), l.values.at(i, j) * img.pixels.at(c, i, j), 1e-7);
}

TEST(Colormap, Stops) {
    using A = std::array<double, 3>;
    EXPECT_EQ(pp::colormap(0.0), (A{0, 0, 1}));
    EXPECT_EQ(pp::colormap(0.25), (A{0, 1, 1}));
    EXPECT_EQ(pp::colormap(0.5), (A{0, 1, 0}));
    EXPECT_EQ(pp::colormap(0.75), (A{1, 1, 0}));
    EXPECT_EQ(pp::colormap(1.0), (A{1, 0, 0}));
    EXPECT_EQ(pp::colormap(0.125), (A{0, 0.5, 1}));
}

TEST(Overlay, HalfBlend) {
    const pp::Image img{D({1, 1, 2}, {0.2, 1.0}), "t"};
    const auto o = pp::overlay(pp::NormalizedHeatmap<double>{D({1, 2}, {0.0, 1.0}), false}, img);
    ASSERT_EQ(o.channels(), 3u);
    EXPECT_DOUBLE_EQ(o.pixels.at(2, 0, 0), 0.5 * 1 + 0.5 * 0.2);
    EXPECT_DOUBLE_EQ(o.pixels.at(0, 0, 1), 1.0);
    EXPECT_DOUBLE_EQ(o.pixels.at(1, 0, 1), 0.5);
}
