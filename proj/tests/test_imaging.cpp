#include <cstdio>
#include <random>
#include <string_view>

#include <gtest/gtest.h>

#include "uizoom/crop_planner.hpp"
#include "uizoom/hashing.hpp"
#include "uizoom/imaging.hpp"

namespace uizoom {
namespace {

Screenshot noise_image(int w, int h, std::uint64_t seed) {
    Screenshot s = Screenshot::blank({w, h});
    cv::RNG rng(seed);
    rng.fill(s.pixels, cv::RNG::UNIFORM, 0, 256);
    return s;
}

std::uint64_t raster_hash(const Screenshot& s) {
    const cv::Mat m = s.pixels.isContinuous() ? s.pixels : s.pixels.clone();
    return fnv1a(std::string_view(reinterpret_cast<const char*>(m.data), m.total() * m.elemSize()));
}

TEST(Crop, FullWindowIsIdentity) {
    const auto img = noise_image(64, 48, 1);
    EXPECT_TRUE(same_pixels(crop(img, PixelBox::full(img.dims())), img));
}

TEST(Crop, AlignedCorner) {
    const auto img = noise_image(1920, 1080, 2);
    const auto c = crop(img, {0, 0, 512, 512});
    EXPECT_EQ(c.dims(), (ImageDims{512, 512}));
    EXPECT_EQ(cv::countNonZero(c.pixels.reshape(1) != img.pixels(cv::Rect(0, 0, 512, 512)).clone().reshape(1)), 0);
}

TEST(Crop, RoundsHalfAwayFromZero) {
    const auto img = noise_image(40, 40, 3);
    const auto c = crop(img, {10.4, 10.6, 20.4, 20.6});
    EXPECT_EQ(c.dims(), (ImageDims{10, 10}));
    EXPECT_EQ(c.pixels.at<cv::Vec3b>(0, 0), img.pixels.at<cv::Vec3b>(11, 10));
    EXPECT_EQ(raster_window({10.5, 0.5, 20.5, 2.5}, img.dims()), (PixelBox{11, 1, 21, 3}));
}

TEST(Crop, ClipsAndRejectsEmpty) {
    const auto img = noise_image(100, 80, 4);
    EXPECT_EQ(crop(img, {-50, 60, 30, 500}).dims(), (ImageDims{30, 20}));
    try {
        crop(img, {200, 10, 300, 20});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), errc::kEmptyWindow);
    }
    EXPECT_THROW(crop(img, {10.2, 10, 10.4, 20}), Error);
}

TEST(Crop, OutputDoesNotAliasInput) {
    auto img = noise_image(32, 32, 5);
    auto c = crop(img, {0, 0, 16, 16});
    c.pixels.setTo(cv::Scalar(0, 0, 0));
    EXPECT_NE(cv::countNonZero(img.pixels.reshape(1)), 0);
}

TEST(Resize, Examples) {
    const auto img = noise_image(1024, 512, 6);
    const auto none = resize(img, ResizePolicy::none());
    EXPECT_TRUE(same_pixels(none.image, img));
    EXPECT_EQ(none.sx, 1.0);
    EXPECT_EQ(none.sy, 1.0);

    const auto half = resize(img, ResizePolicy::side(512));
    EXPECT_EQ(half.image.dims(), (ImageDims{512, 256}));
    EXPECT_EQ(half.sx, 0.5);
    EXPECT_EQ(half.sy, 0.5);

    const auto small = noise_image(100, 100, 7);
    const auto under = resize(small, ResizePolicy::pixels(1'000'000));
    EXPECT_TRUE(same_pixels(under.image, small));
}

TEST(Resize, PixelBudgetRespected) {
    const auto img = Screenshot::blank({3840, 2160});
    const auto r = resize(img, ResizePolicy::pixels(1'000'000));
    EXPECT_LE(static_cast<long long>(r.image.dims().width) * r.image.dims().height, 1'000'000);
    EXPECT_EQ(r.sx, static_cast<double>(r.image.dims().width) / 3840);
}

TEST(ResizePolicy, ParseAndPrint) {
    EXPECT_EQ(ResizePolicy::parse("none").mode, ResizePolicy::Mode::none);
    EXPECT_EQ(ResizePolicy::parse("max_side:1280").max_side, 1280);
    EXPECT_EQ(ResizePolicy::parse("max_pixels:1000").str(), "max_pixels:1000");
    EXPECT_EQ(ResizePolicy{}.mode, ResizePolicy::Mode::max_pixels);
    for (const char* bad : {"", "max_side:0", "max_side:x", "max_pixels:-3", "tiny:4"})
        EXPECT_THROW(ResizePolicy::parse(bad), Error) << bad;
}

TEST(Codec, PngRoundTripIsLossless) {
    const auto img = noise_image(33, 17, 8);
    const auto back = decode_image(encode_png(img));
    EXPECT_TRUE(same_pixels(back, img));
    try {
        decode_image({1, 2, 3});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), errc::kImageDecode);
    }
    try {
        load_image("/nonexistent/screen.png");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), errc::kImageNotFound);
    }
}

TEST(Annotate, EmptyLayersLeaveImageUntouched) {
    const auto img = noise_image(200, 100, 9);
    EXPECT_TRUE(same_pixels(annotate(img, {}), img));
}

TEST(Annotate, CandidateTouchesOnlyItsBorder) {
    const auto img = Screenshot::blank({200, 100});
    const PixelBox b{20, 30, 60, 70};
    const auto out = annotate(img, {{b, LayerKind::candidate}});
    for (int y = 0; y < 100; ++y) {
        for (int x = 0; x < 200; ++x) {
            const bool on_border = (x == 20 || x == 60) && y >= 30 && y <= 70;
            const bool on_edge = (y == 30 || y == 70) && x >= 20 && x <= 60;
            const bool changed = out.pixels.at<cv::Vec3b>(y, x) != img.pixels.at<cv::Vec3b>(y, x);
            ASSERT_EQ(changed, on_border || on_edge) << x << "," << y;
        }
    }
}

TEST(Annotate, FullTraceGolden) {
    const auto img = Screenshot::blank({4000, 2000}, cv::Scalar(245, 245, 245));
    std::vector<Layer> layers;
    const PixelPoint gt{2210, 1130};
    for (int i = 0; i < 8; ++i)
        layers.push_back({PixelBox::centered({gt.x - 140 + 40 * i, gt.y + (i % 3 - 1) * 50.0}, 90, 40),
                          LayerKind::candidate});
    layers.push_back({{1954, 874, 2466, 1386}, LayerKind::crop_region});
    layers.push_back({PixelBox::centered(gt, 80, 36), LayerKind::ground_truth});
    layers.push_back({PixelBox::centered({2214, 1128}, 0, 0), LayerKind::prediction});
    const auto out = annotate(img, layers);
    EXPECT_EQ(out.dims(), img.dims());
    for (auto kind : {LayerKind::candidate, LayerKind::crop_region, LayerKind::ground_truth, LayerKind::prediction}) {
        const cv::Scalar c = layer_color(kind);
        cv::Mat hit;
        cv::inRange(out.pixels, c, c, hit);
        EXPECT_GT(cv::countNonZero(hit), 0) << "layer colour missing";
    }
    // prediction marker is drawn last, so its fill survives at the point
    const cv::Vec3b at = out.pixels.at<cv::Vec3b>(1128, 2214);
    EXPECT_EQ(at, cv::Vec3b(255, 215, 0));
    EXPECT_EQ(raster_hash(out), 0x8104e7763325613full) << std::hex << raster_hash(out);
}

// ------------------------------------------------------------ properties

TEST(ImagingProperty, CropDimsMatchRoundedWindow) {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(-100, 700);
    const auto img = Screenshot::blank({640, 480});
    for (int t = 0; t < 2000; ++t) {
        double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
        const PixelBox w{std::min(a, b), std::min(c, d), std::max(a, b), std::max(c, d)};
        const PixelBox r = raster_window(w, img.dims());
        const long rw = std::clamp<long>(std::lround(w.x2), 0, 640) - std::clamp<long>(std::lround(w.x1), 0, 640);
        const long rh = std::clamp<long>(std::lround(w.y2), 0, 480) - std::clamp<long>(std::lround(w.y1), 0, 480);
        if (rw < 1 || rh < 1) {
            ASSERT_THROW(crop(img, w), Error);
            continue;
        }
        const auto out = crop(img, w);
        ASSERT_EQ(out.dims().width, rw);
        ASSERT_EQ(out.dims().height, rh);
        ASSERT_EQ(out.dims().width, r.width());
    }
}

TEST(ImagingProperty, ResizeKeepsAspect) {
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<int> side(1, 3000), lim(1, 2000);
    for (int t = 0; t < 300; ++t) {
        const int w = side(rng), h = side(rng);
        const auto img = Screenshot::blank({w, h});
        const ResizePolicy p = t % 2 ? ResizePolicy::side(lim(rng)) : ResizePolicy::pixels(1LL * lim(rng) * lim(rng));
        const auto r = resize(img, p);
        const auto d = r.image.dims();
        ASSERT_LE(d.width, w);
        ASSERT_LE(d.height, h);
        double f = 1.0;
        if (p.mode == ResizePolicy::Mode::max_side) {
            ASSERT_LE(std::max(d.width, d.height), p.max_side);
            f = std::min(1.0, static_cast<double>(p.max_side) / std::max(w, h));
        } else {
            ASSERT_LE(1LL * d.width * d.height, std::max(1LL, p.max_pixels));
            f = std::min(1.0, std::sqrt(static_cast<double>(p.max_pixels) / (1.0 * w * h)));
        }
        ASSERT_LE(std::abs(d.width - w * f), 1.0);
        ASSERT_LE(std::abs(d.height - h * f), 1.0);
    }
}

TEST(ImagingProperty, CropResizeRoundTripWithinPixel) {
    std::mt19937_64 rng(43);
    std::uniform_real_distribution<double> u(0, 1);
    const ImageDims dims{3840, 2160};
    const auto policy = ResizePolicy::side(700);
    for (int t = 0; t < 2000; ++t) {
        const double side = 64 + u(rng) * 1800;
        const PixelPoint mu{u(rng) * dims.width, u(rng) * dims.height};
        CropConfig cfg;
        cfg.min_side = side;
        const auto plan = plan_crop(mu, {0, 0}, dims, cfg);
        const PixelBox r = raster_window(plan.window, dims);
        const PixelPoint g{r.x1 + u(rng) * r.width(), r.y1 + u(rng) * r.height()};
        // resize factors only depend on the crop dims, so a blank raster stands in
        const auto scaled = resize(Screenshot::blank({static_cast<int>(r.width()), static_cast<int>(r.height())}), policy);
        const PixelPoint sent{(g.x - r.x1) * scaled.sx, (g.y - r.y1) * scaled.sy};
        const PixelPoint local{sent.x / scaled.sx, sent.y / scaled.sy};
        const NormPoint back = map_back({local.x, local.y, local.x, local.y}, r, dims);
        ASSERT_LE(std::abs(back.x * dims.width - g.x), 1.0);
        ASSERT_LE(std::abs(back.y * dims.height - g.y), 1.0);
    }
}

}  // namespace
}  // namespace uizoom
