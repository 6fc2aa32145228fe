#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "uizoom/geometry.hpp"

namespace uizoom {
namespace {

TEST(Geometry, CenterExamples) {
    EXPECT_EQ(center({0, 0, 10, 10}), (PixelPoint{5, 5}));
    EXPECT_EQ(center({3, 3, 3, 3}), (PixelPoint{3, 3}));
    EXPECT_EQ(center({100, 200, 612, 712}), (PixelPoint{356, 456}));
}

TEST(Geometry, IouExamples) {
    EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {0, 0, 10, 10}), 1.0);
    EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {20, 20, 30, 30}), 0.0);
    EXPECT_DOUBLE_EQ(iou({0, 0, 10, 10}, {5, 0, 15, 10}), 1.0 / 3.0);
}

TEST(Geometry, IouOfPointBoxesIsZeroEvenWhenCoincident) {
    EXPECT_EQ(iou({3, 3, 3, 3}, {3, 3, 3, 3}), 0.0);
    EXPECT_EQ(iou({3, 3, 3, 3}, {0, 0, 10, 10}), 0.0);
}

TEST(Geometry, ToNormPointExamples) {
    EXPECT_EQ(to_norm_point({960, 540}, {1920, 1080}), (NormPoint{0.5, 0.5}));
    EXPECT_EQ(to_norm_point({0, 0}, {37, 91}), (NormPoint{0, 0}));
    const auto p = to_norm_point({356, 456}, {1920, 1080});
    EXPECT_NEAR(p.x, 0.1854166666666, 1e-12);
    EXPECT_NEAR(p.y, 0.4222222222222, 1e-12);
    EXPECT_EQ(to_norm_point({-5, 5000}, {100, 100}), (NormPoint{0, 1}));
}

TEST(GeometryProperty, IouInvariants) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 500.0), s(0.01, 100.0);
    for (int t = 0; t < 2000; ++t) {
        const double ax = u(rng), ay = u(rng), bx = u(rng), by = u(rng);
        const PixelBox a{ax, ay, ax + u(rng) / 5, ay + u(rng) / 5};
        const PixelBox b{bx, by, bx + u(rng) / 5, by + u(rng) / 5};
        const double v = iou(a, b);
        ASSERT_EQ(v, iou(b, a));
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
        if (a.area() > 0) {
            ASSERT_DOUBLE_EQ(iou(a, a), 1.0);
        }
        const double k = s(rng);
        ASSERT_NEAR(iou(scaled(a, k, k), scaled(b, k, k)), v, 1e-9);
        ASSERT_TRUE(a.contains(center(a)));
        const long double ref = oracle::iou_ld({a.x1, a.y1, a.x2, a.y2}, {b.x1, b.y1, b.x2, b.y2});
        ASSERT_TRUE(oracle::rel_close(v, ref, 1e-9)) << v << " vs " << (double)ref;
    }
}

TEST(GeometryProperty, IouMatchesRationalOracleOnIntegerBoxes) {
    std::mt19937_64 rng(12);
    for (int t = 0; t < 2000; ++t) {
        const auto a = oracle::random_int_box(rng), b = oracle::random_int_box(rng);
        const double v = iou({a.x1, a.y1, a.x2, a.y2}, {b.x1, b.y1, b.x2, b.y2});
        const auto exact = oracle::iou_exact(a, b);
        // correctly rounded quotient of exact integers
        ASSERT_EQ(v, static_cast<double>(exact.p) / static_cast<double>(exact.q));
    }
}

}  // namespace
}  // namespace uizoom
