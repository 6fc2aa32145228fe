#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "uizoom/parsing.hpp"

namespace uizoom {
namespace {

const Candidate& as_candidate(const ParseResult& r) {
    EXPECT_TRUE(std::holds_alternative<Candidate>(r)) << std::get<ParseFailure>(r).reason;
    return std::get<Candidate>(r);
}

TEST(TokenConfidence, Examples) {
    EXPECT_DOUBLE_EQ(token_confidence({"", {0, 0, 0}}), 1.0);
    EXPECT_DOUBLE_EQ(token_confidence({"", {std::log(0.5)}}), 0.5);
    EXPECT_NEAR(token_confidence({"", {-0.1, -0.2, -0.3}}), 0.8187307530779818, 1e-15);
}

TEST(TokenConfidence, EmptyListSignals) {
    try {
        token_confidence({"x", {}});
        FAIL() << "expected EmptyLogprobs";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), errc::kEmptyLogprobs);
    }
}

TEST(TokenConfidence, StaysPositive) {
    const double c = token_confidence({"", {-1e6, -1e6}});
    EXPECT_GT(c, 0.0);
    EXPECT_LE(c, 1.0);
}

TEST(TokenConfidenceProperty, MatchesDirectProductOracleAndIsPermutationInvariant) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> lp(-3.0, 0.0);
    std::uniform_int_distribution<int> len(1, 64);
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> v(static_cast<std::size_t>(len(rng)));
        for (auto& x : v) x = lp(rng);
        const double c = token_confidence({"", v});
        ASSERT_TRUE(oracle::rel_close(c, oracle::geometric_mean_direct(v), 1e-12));
        std::shuffle(v.begin(), v.end(), rng);
        ASSERT_NEAR(token_confidence({"", v}), c, 1e-15);
    }
}

TEST(ParseCandidate, JsonBboxPixelFrame) {
    const auto& c = as_candidate(parse_candidate({R"({"bbox": [100, 200, 300, 260]})", {-0.1}}, {1920, 1080},
                                                 FrameHint::pixel));
    EXPECT_EQ(c.box, (PixelBox{100, 200, 300, 260}));
    EXPECT_FALSE(c.clamped);
    EXPECT_EQ(c.token_count, 1);
    EXPECT_NEAR(c.confidence, std::exp(-0.1), 1e-15);
}

TEST(ParseCandidate, AutoFrameNormalizedPoint) {
    const auto& c = as_candidate(parse_candidate({"(0.5, 0.5)", {0.0}}, {1000, 1000}, FrameHint::auto_detect));
    EXPECT_EQ(c.box, (PixelBox{500, 500, 500, 500}));
    EXPECT_TRUE(c.normalized_input);
}

TEST(ParseCandidate, NoCoordinatesFails) {
    const auto r = parse_candidate({"click somewhere", {0.0}}, {100, 100}, FrameHint::auto_detect);
    ASSERT_TRUE(std::holds_alternative<ParseFailure>(r));
}

TEST(ParseCandidate, GrammarPriority) {
    // JSON object beats an earlier bare tuple
    const auto& a = as_candidate(parse_candidate({R"(see (1, 2) -> {"label": "x", "bbox": [10, 20, 30, 40]})", {}},
                                                 {100, 100}, FrameHint::pixel));
    EXPECT_EQ(a.box, (PixelBox{10, 20, 30, 40}));
    // a 4-tuple beats an earlier 2-tuple
    const auto& b =
        as_candidate(parse_candidate({"point (5, 6) box [10, 20, 30, 40]", {}}, {100, 100}, FrameHint::pixel));
    EXPECT_EQ(b.box, (PixelBox{10, 20, 30, 40}));
    // mixed brackets and decimals, signs, exponents
    const auto& c = as_candidate(parse_candidate({"(1.5e1, +20.25, 30., .5e2]", {}}, {100, 100}, FrameHint::pixel));
    EXPECT_EQ(c.box, (PixelBox{15, 20.25, 30, 50}));
    // UI-TARS style click
    const auto& d = as_candidate(parse_candidate({"click(start_box='(412,87)')", {}}, {1000, 1000}, FrameHint::auto_detect));
    EXPECT_EQ(d.box, (PixelBox{412, 87, 412, 87}));
}

TEST(ParseCandidate, BadJsonBboxFails) {
    EXPECT_TRUE(std::holds_alternative<ParseFailure>(
        parse_candidate({R"({"bbox": [1, 2, 3]})", {}}, {100, 100}, FrameHint::pixel)));
    EXPECT_TRUE(std::holds_alternative<ParseFailure>(
        parse_candidate({R"({"bbox": ["a", 2, 3, 4]})", {}}, {100, 100}, FrameHint::pixel)));
    EXPECT_TRUE(std::holds_alternative<ParseFailure>(
        parse_candidate({R"({"bbox": "10,20"})", {}}, {100, 100}, FrameHint::pixel)));
    EXPECT_TRUE(std::holds_alternative<ParseFailure>(parse_candidate({"(1, 2, 3)", {}}, {100, 100}, FrameHint::pixel)));
}

TEST(ParseCandidate, ClampsAndOrdersCorners) {
    const auto& c = as_candidate(parse_candidate({"[-20, 50, 700, 30]", {}}, {640, 480}, FrameHint::pixel));
    EXPECT_EQ(c.box, (PixelBox{0, 30, 640, 50}));
    EXPECT_TRUE(c.clamped);
}

TEST(ParseCandidate, MissingLogprobsFallBack) {
    const auto& c = as_candidate(parse_candidate({"[1, 2, 3, 4]", {}}, {100, 100}, FrameHint::pixel));
    EXPECT_TRUE(c.logprob_fallback);
    EXPECT_EQ(c.confidence, kFallbackConfidence);
}

TEST(ParseCandidate, ExplicitNormalizedFrame) {
    const auto& c = as_candidate(parse_candidate({"[0.1, 0.2, 0.3, 0.4]", {}}, {1000, 500}, FrameHint::normalized));
    EXPECT_NEAR(c.box.x1, 100, 1e-9);
    EXPECT_NEAR(c.box.y2, 200, 1e-9);
}

TEST(ParseCandidateProperty, NeverOutsideImageAndCanonicalRoundTrip) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> wide(-3000.0, 6000.0), unit(0.0, 1.0);
    const ImageDims dims{1920, 1080};
    for (int t = 0; t < 1000; ++t) {
        char text[200];
        std::snprintf(text, sizeof text, "[%.3f, %.3f, %.3f, %.3f]", wide(rng), wide(rng), wide(rng), wide(rng));
        const auto& c = as_candidate(parse_candidate({text, {}}, dims, FrameHint::auto_detect));
        ASSERT_TRUE(c.box.valid());
        ASSERT_GE(c.box.x1, 0);
        ASSERT_GE(c.box.y1, 0);
        ASSERT_LE(c.box.x2, dims.width);
        ASSERT_LE(c.box.y2, dims.height);

        const double x1 = unit(rng) * dims.width, y1 = unit(rng) * dims.height;
        const PixelBox b{x1, y1, x1 + unit(rng) * (dims.width - x1), y1 + unit(rng) * (dims.height - y1)};
        const auto& back = as_candidate(parse_candidate({format_box(b), {}}, dims, FrameHint::pixel));
        ASSERT_EQ(back.box, b);
    }
}

}  // namespace
}  // namespace uizoom
