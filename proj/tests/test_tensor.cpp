#include <gtest/gtest.h>

#include "camforge/splitmix64.hpp"
#include "camforge/tensor.hpp"

using camforge::Tensor;
using T = Tensor<double>;

TEST(Tensor, ReluClampsNegatives) {
    EXPECT_EQ(camforge::relu(T::vector({1, -1, 2, 0})), T::vector({1, 0, 2, 0}));
}

TEST(Tensor, ScaleAddMul) {
    EXPECT_EQ(camforge::scale(T::vector({1, 2}), 2.0), T::vector({2, 4}));
    EXPECT_EQ(camforge::add(T::vector({1, 2}), T::vector({3, 4})), T::vector({4, 6}));
    EXPECT_EQ(camforge::mul(T::vector({1, 2}), T::vector({3, 4})), T::vector({3, 8}));
}

TEST(Tensor, ElementwiseDispatch) {
    const auto a = T::vector({1, -2});
    const auto b = T::vector({3, 4});
    using camforge::ElementwiseOp;
    EXPECT_EQ(camforge::elementwise(ElementwiseOp::add, a, &b), T::vector({4, 2}));
    EXPECT_EQ(camforge::elementwise(ElementwiseOp::relu, a), T::vector({1, 0}));
    EXPECT_EQ(camforge::elementwise<double>(ElementwiseOp::scale, a, nullptr, 3.0), T::vector({3, -6}));
    EXPECT_THROW(camforge::elementwise(ElementwiseOp::mul, a), camforge::InvalidArgument);
}

TEST(Tensor, Reductions) {
    EXPECT_DOUBLE_EQ(camforge::mean(T::vector({1, -1, 2, 0})), 0.5);
    EXPECT_DOUBLE_EQ(camforge::sum(T({2, 2}, {1, 2, 3, 4})), 10.0);
    EXPECT_DOUBLE_EQ(camforge::max(T::vector({-3, -1})), -1.0);
    EXPECT_DOUBLE_EQ(camforge::min(T::vector({-3, -1})), -3.0);
}

TEST(Tensor, ReduceOverAxes) {
    const T t({2, 3}, {1, 2, 3, 4, 5, 6});
    using camforge::ReduceOp;
    EXPECT_EQ(camforge::reduce(ReduceOp::sum, t, {0}), T::vector({5, 7, 9}));
    EXPECT_EQ(camforge::reduce(ReduceOp::sum, t, {1}), T::vector({6, 15}));
    EXPECT_EQ(camforge::reduce(ReduceOp::max, t, {1}), T::vector({3, 6}));
}

TEST(Tensor, ShapeErrors) {
    EXPECT_THROW(T({2, 2}, {1, 2, 3}), camforge::ShapeError);
    EXPECT_THROW(T({0, 2}), camforge::ShapeError);
    EXPECT_THROW(camforge::add(T::vector({1}), T::vector({1, 2})), camforge::ShapeError);
    EXPECT_THROW((void)T::vector({1, 2, 3, 4}).reshaped({3}), camforge::ShapeError);
}

TEST(Tensor, IndexingIsRowMajor) {
    T t({2, 3, 4});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
    EXPECT_EQ(t.at(1, 2, 3), 23.0);
    EXPECT_EQ(t.at(0, 1, 0), 4.0);
}

TEST(Tensor, CastRoundsToNearest) {
    const T t = T::vector({0.1, 1.0 / 3.0});
    const auto f = t.cast<float>();
    EXPECT_EQ(f[0], 0.1f);
    EXPECT_EQ(f[1], 1.0f / 3.0f);
}

TEST(FeatureMapMeta, RequiresRankThree) {
    EXPECT_THROW(camforge::FeatureMapMeta::of(T::vector({1, 2})), camforge::ShapeError);
    const auto meta = camforge::FeatureMapMeta::of(T({2, 3, 4}));
    EXPECT_EQ(meta.map_count, 2u);
    EXPECT_EQ(meta.size(), 12u);
}

// Property: sum over all axes equals the sum of per-axis sums, for random
// shapes.
TEST(TensorProperty, ReduceComposes) {
    camforge::SplitMix64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t a = 1 + rng.below(5), b = 1 + rng.below(5), c = 1 + rng.below(5);
        T t({a, b, c});
        for (auto& v : t.data()) v = rng.uniform(-1, 1);
        const double total = camforge::sum(t);
        const double by_axis = camforge::sum(camforge::reduce(camforge::ReduceOp::sum, t, {0, 2}));
        EXPECT_NEAR(total, by_axis, 1e-12);
        EXPECT_LE(camforge::min(t), camforge::mean(t));
        EXPECT_GE(camforge::max(t), camforge::mean(t));
    }
}
