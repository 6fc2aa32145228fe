#pragma once

// Turns raw model completions into scored box candidates.
//
// Accepted grammar, first match wins:
//   1. a JSON object with key "bbox" holding four numbers
//   2. the first bare 4-tuple, "(a, b, c, d)" or "[a, b, c, d]"
//   3. the first bare 2-tuple, read as a point (zero-extent box)
//
//   NUMBER := decimal literal, optional sign and exponent
//   TUPLE4 := ('(' | '[') NUMBER (',' NUMBER){3} (')' | ']')

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "uizoom/error.hpp"
#include "uizoom/geometry.hpp"

namespace uizoom {

/// One generated completion with the natural-log probability of each token.
struct CompletionRecord {
    std::string text;
    std::vector<double> token_logprobs;
};

enum class FrameHint { pixel, normalized, auto_detect };

/// Confidence substituted when the backend returns no logprobs.
inline constexpr double kFallbackConfidence = 0.5;

struct Candidate {
    PixelBox box;  // full-image pixel frame
    double confidence = kFallbackConfidence;
    std::string raw_text;
    int token_count = 1;
    bool logprob_fallback = false;
    bool clamped = false;  // some coordinate fell outside the image
    bool normalized_input = false;
};

struct ParseFailure {
    std::string reason;
};

using ParseResult = std::variant<Candidate, ParseFailure>;

/// Geometric mean of token probabilities, exp(mean log p).
/// Throws Error(kEmptyLogprobs) for an empty list.
inline double token_confidence(const CompletionRecord& rec) {
    if (rec.token_logprobs.empty())
        throw Error(errc::kEmptyLogprobs, "completion carries no token logprobs");
    double sum = 0.0;
    for (double lp : rec.token_logprobs) sum += std::min(lp, 0.0);
    const double c = std::exp(sum / static_cast<double>(rec.token_logprobs.size()));
    return std::clamp(c, std::numeric_limits<double>::min(), 1.0);
}

namespace detail {

inline const std::string& number_pattern() {
    static const std::string p = R"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)";
    return p;
}

inline std::optional<double> to_number(std::string_view s) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

// Balanced-brace scan for the first JSON object carrying "bbox".
// Returns nullopt when no such object exists.
inline std::optional<std::variant<std::vector<double>, ParseFailure>> json_bbox(const std::string& text) {
    for (std::size_t start = text.find('{'); start != std::string::npos; start = text.find('{', start + 1)) {
        int depth = 0;
        bool in_str = false;
        std::size_t end = std::string::npos;
        for (std::size_t i = start; i < text.size(); ++i) {
            const char ch = text[i];
            if (in_str) {
                if (ch == '\\') ++i;
                else if (ch == '"') in_str = false;
                continue;
            }
            if (ch == '"') in_str = true;
            else if (ch == '{') ++depth;
            else if (ch == '}' && --depth == 0) { end = i; break; }
        }
        if (end == std::string::npos) continue;
        const auto obj = nlohmann::json::parse(text.begin() + start, text.begin() + end + 1, nullptr, false);
        if (obj.is_discarded() || !obj.is_object() || !obj.contains("bbox")) continue;
        const auto& bb = obj["bbox"];
        if (!bb.is_array()) return ParseFailure{"bbox is not an array"};
        if (bb.size() != 4) return ParseFailure{"bbox has wrong arity " + std::to_string(bb.size())};
        std::vector<double> vals;
        for (const auto& v : bb) {
            if (!v.is_number()) return ParseFailure{"bbox has non-numeric field"};
            vals.push_back(v.get<double>());
        }
        return vals;
    }
    return std::nullopt;
}

inline std::regex tuple_regex(int arity) {
    const std::string& num = number_pattern();
    std::string pat = R"([\(\[]\s*()" + num + R"())";
    for (int i = 1; i < arity; ++i) pat += R"(\s*,\s*()" + num + R"())";
    pat += R"(\s*[\)\]])";
    return std::regex(pat);
}

inline std::optional<std::vector<double>> bare_tuple(const std::string& text, int arity) {
    static const std::regex re4 = tuple_regex(4);
    static const std::regex re2 = tuple_regex(2);
    const std::regex& re = arity == 4 ? re4 : re2;
    std::smatch m;
    if (!std::regex_search(text, m, re)) return std::nullopt;
    std::vector<double> vals;
    for (int i = 1; i <= arity; ++i) {
        auto v = to_number(m[i].str());
        if (!v) return std::nullopt;
        vals.push_back(*v);
    }
    return vals;
}

}  // namespace detail

/// Parses one completion into a candidate in the pixel frame of an image of
/// size `dims`. Out-of-range coordinates are clamped; a missing logprob list
/// yields kFallbackConfidence with `logprob_fallback` set.
inline ParseResult parse_candidate(const CompletionRecord& rec, ImageDims dims, FrameHint hint) {
    std::vector<double> vals;
    if (auto js = detail::json_bbox(rec.text)) {
        if (auto* fail = std::get_if<ParseFailure>(&*js)) return *fail;
        vals = std::get<std::vector<double>>(*js);
    } else if (auto t4 = detail::bare_tuple(rec.text, 4)) {
        vals = *t4;
    } else if (auto t2 = detail::bare_tuple(rec.text, 2)) {
        vals = {(*t2)[0], (*t2)[1], (*t2)[0], (*t2)[1]};
    } else {
        return ParseFailure{"no coordinate tuple found"};
    }

    bool normalized = hint == FrameHint::normalized;
    if (hint == FrameHint::auto_detect) {
        normalized = std::all_of(vals.begin(), vals.end(), [](double v) { return v <= 1.5; });
    }
    if (normalized) {
        vals[0] *= dims.width;
        vals[2] *= dims.width;
        vals[1] *= dims.height;
        vals[3] *= dims.height;
    }

    Candidate cand;
    const PixelBox raw = PixelBox::from_corners(vals[0], vals[1], vals[2], vals[3]);
    cand.box = clamp_to(raw, dims);
    cand.clamped = !(cand.box == raw);
    cand.normalized_input = normalized;
    cand.raw_text = rec.text;
    if (rec.token_logprobs.empty()) {
        cand.logprob_fallback = true;
        cand.confidence = kFallbackConfidence;
        cand.token_count = 1;
    } else {
        cand.confidence = token_confidence(rec);
        cand.token_count = static_cast<int>(rec.token_logprobs.size());
    }
    return cand;
}

/// Canonical serialization accepted by parse_candidate; exact under re-parse
/// with FrameHint::pixel for boxes inside the image.
inline std::string format_box(const PixelBox& b) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "{\"bbox\": [%.17g, %.17g, %.17g, %.17g]}", b.x1, b.y1, b.x2, b.y2);
    return buf;
}

}  // namespace uizoom
