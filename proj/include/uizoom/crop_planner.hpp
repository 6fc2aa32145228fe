#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uizoom/error.hpp"
#include "uizoom/geometry.hpp"
#include "uizoom/parsing.hpp"

namespace uizoom {

enum class BoundaryStrategy { shift, clip, shrink };
enum class VarianceMode { total, inter_only, intra_only };

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct CropConfig {
    double gamma = 2.5;
    double min_side = 512.0;  // original-image pixels
    double keep_fraction = 0.75;
    BoundaryStrategy strategy = BoundaryStrategy::shift;
    bool square = true;
    VarianceMode variance_mode = VarianceMode::total;
    std::optional<double> fixed_ratio;  // fixed-ratio baseline, side = ratio * max(W, H)

    void validate() const {
        if (!(gamma > 0.0)) throw Error(errc::kConfig, "gamma must be positive");
        if (!(min_side >= 0.0)) throw Error(errc::kConfig, "min crop side must be non-negative");
        if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
            throw Error(errc::kConfig, "keep fraction must lie in (0, 1]");
        if (fixed_ratio && !(*fixed_ratio > 0.0 && *fixed_ratio <= 1.0))
            throw Error(errc::kConfig, "fixed ratio must lie in (0, 1]");
    }
};

struct VarianceStats {
    PixelPoint mu;
    Vec2 v_inter;
    Vec2 v_intra;
};

struct CropPlan {
    std::vector<std::size_t> kept_indices;
    PixelPoint mu;
    Vec2 v_inter;
    Vec2 v_intra;
    Vec2 variance;  // per-axis variance selected by variance_mode
    Vec2 sigma;
    Vec2 radius;
    double side = 0.0;     // square side before boundary handling
    PixelBox ideal;        // window before boundary handling
    PixelBox window;       // final window, inside the image
    BoundaryStrategy strategy = BoundaryStrategy::shift;
    bool square = true;
    VarianceMode variance_mode = VarianceMode::total;
    bool fixed_ratio = false;
};

inline std::size_t kept_count(std::size_t n, double keep_fraction) {
    // the epsilon absorbs products such as 0.7 * 10 = 6.9999...
    const auto k = static_cast<std::size_t>(std::floor(keep_fraction * static_cast<double>(n) + 1e-9));
    return std::max<std::size_t>(1, std::min(k, n));
}

namespace detail {
inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
}  // namespace detail

/// Coordinate-wise median of the candidate centers.
inline PixelPoint median_center(std::span<const Candidate> cands) {
    std::vector<double> xs, ys;
    for (const auto& c : cands) {
        const auto z = center(c.box);
        xs.push_back(z.x);
        ys.push_back(z.y);
    }
    return {detail::median(std::move(xs)), detail::median(std::move(ys))};
}

/// Keeps the K = max(1, floor(keep_fraction * N)) candidates whose centers
/// are nearest the coordinate-wise median center. Ties go to the lower index.
/// Returned indices are ascending.
inline std::vector<std::size_t> filter_outliers(std::span<const Candidate> cands, double keep_fraction) {
    if (cands.empty()) throw Error(errc::kNoCandidates, "outlier filter over an empty candidate set");
    const PixelPoint med = median_center(cands);
    std::vector<double> dist(cands.size());
    for (std::size_t i = 0; i < cands.size(); ++i) {
        const auto z = center(cands[i].box);
        const double dx = z.x - med.x, dy = z.y - med.y;
        // squared distance keeps symmetric ties exact on integer-valued boxes
        dist[i] = dx * dx + dy * dy;
    }
    std::vector<std::size_t> order(cands.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
    order.resize(kept_count(cands.size(), keep_fraction));
    std::sort(order.begin(), order.end());
    return order;
}

/// Law-of-total-variance split over the kept candidates: the population
/// variance of the centers plus the mean of (extent / 4)^2, each box read as
/// a Gaussian spanning +-2 sigma.
inline VarianceStats variance_decompose(std::span<const Candidate> kept) {
    if (kept.empty()) throw Error(errc::kNoCandidates, "variance of an empty candidate set");
    const double k = static_cast<double>(kept.size());
    VarianceStats st;
    for (const auto& c : kept) {
        const auto z = center(c.box);
        st.mu.x += z.x;
        st.mu.y += z.y;
    }
    st.mu.x /= k;
    st.mu.y /= k;
    for (const auto& c : kept) {
        const auto z = center(c.box);
        st.v_inter.x += (z.x - st.mu.x) * (z.x - st.mu.x);
        st.v_inter.y += (z.y - st.mu.y) * (z.y - st.mu.y);
        const double qw = c.box.width() / 4.0, qh = c.box.height() / 4.0;
        st.v_intra.x += qw * qw;
        st.v_intra.y += qh * qh;
    }
    st.v_inter.x /= k;
    st.v_inter.y /= k;
    st.v_intra.x /= k;
    st.v_intra.y /= k;
    return st;
}

inline Vec2 select_variance(const VarianceStats& st, VarianceMode mode) {
    switch (mode) {
        case VarianceMode::inter_only: return st.v_inter;
        case VarianceMode::intra_only: return st.v_intra;
        case VarianceMode::total: break;
    }
    return {st.v_inter.x + st.v_intra.x, st.v_inter.y + st.v_intra.y};
}

namespace detail {

// Places [lo, hi] inside [0, extent]; an interval at least as long as the
// extent becomes the whole extent.
inline std::pair<double, double> fit_axis(double lo, double hi, double extent, BoundaryStrategy s) {
    if (hi - lo >= extent) return {0.0, extent};
    switch (s) {
        case BoundaryStrategy::shift:
            if (lo < 0.0) return {0.0, hi - lo};
            if (hi > extent) return {extent - (hi - lo), extent};
            return {lo, hi};
        case BoundaryStrategy::clip:
        case BoundaryStrategy::shrink:
            break;
    }
    return {std::max(lo, 0.0), std::min(hi, extent)};
}

}  // namespace detail

/// Derives the crop window from the candidate mean and spread, then applies
/// the boundary strategy. Only window-shape fields of the plan are filled.
inline CropPlan plan_crop(PixelPoint mu, Vec2 sigma, ImageDims dims, const CropConfig& cfg) {
    CropPlan p;
    p.mu = mu;
    p.sigma = sigma;
    p.strategy = cfg.strategy;
    p.square = cfg.square;
    p.variance_mode = cfg.variance_mode;
    p.radius = {cfg.gamma * sigma.x, cfg.gamma * sigma.y};

    double hx = 0.0, hy = 0.0;
    if (cfg.fixed_ratio) {
        p.fixed_ratio = true;
        p.square = true;
        p.side = *cfg.fixed_ratio * std::max(dims.width, dims.height);
        hx = hy = p.side / 2.0;
    } else if (cfg.square) {
        p.side = std::max({2.0 * p.radius.x, 2.0 * p.radius.y, cfg.min_side});
        hx = hy = p.side / 2.0;
    } else {
        hx = std::max(p.radius.x, cfg.min_side / 2.0);
        hy = std::max(p.radius.y, cfg.min_side / 2.0);
        p.side = 2.0 * std::max(hx, hy);
    }
    p.ideal = {mu.x - hx, mu.y - hy, mu.x + hx, mu.y + hy};

    const double W = dims.width, H = dims.height;
    if (cfg.strategy == BoundaryStrategy::shrink) {
        // one isotropic factor over the axes that can fit at all
        double f = 1.0;
        if (2.0 * hx < W) f = std::min(f, std::max(0.0, std::min(mu.x, W - mu.x)) / hx);
        if (2.0 * hy < H) f = std::min(f, std::max(0.0, std::min(mu.y, H - mu.y)) / hy);
        if (2.0 * hx < W) hx *= f;
        if (2.0 * hy < H) hy *= f;
    }
    const auto [x1, x2] = detail::fit_axis(mu.x - hx, mu.x + hx, W, cfg.strategy);
    const auto [y1, y2] = detail::fit_axis(mu.y - hy, mu.y + hy, H, cfg.strategy);
    p.window = {x1, y1, x2, y2};
    return p;
}

/// Full crop stage: filter, decompose, plan.
inline CropPlan build_crop_plan(std::span<const Candidate> cands, ImageDims dims, const CropConfig& cfg) {
    auto kept_idx = filter_outliers(cands, cfg.keep_fraction);
    std::vector<Candidate> kept;
    kept.reserve(kept_idx.size());
    for (auto i : kept_idx) kept.push_back(cands[i]);
    const VarianceStats st = variance_decompose(kept);
    const Vec2 var = select_variance(st, cfg.variance_mode);
    CropPlan p = plan_crop(st.mu, {std::sqrt(var.x), std::sqrt(var.y)}, dims, cfg);
    p.kept_indices = std::move(kept_idx);
    p.v_inter = st.v_inter;
    p.v_intra = st.v_intra;
    p.variance = var;
    return p;
}

/// Expresses a global pixel point in the frame of `window`.
inline PixelPoint to_crop_frame(PixelPoint global, const PixelBox& window) {
    return {global.x - window.x1, global.y - window.y1};
}

/// Maps a box predicted in the crop's pixel frame back to global normalized
/// coordinates: x = (x1c + cx) / W, y = (y1c + cy) / H.
inline NormPoint map_back(const PixelBox& refined, const PixelBox& window, ImageDims dims) {
    if (!(window.width() > 0.0) || !(window.height() > 0.0))
        throw Error(errc::kDegenerateWindow, "crop window has zero extent");
    const PixelPoint c = center(refined);
    return to_norm_point({window.x1 + c.x, window.y1 + c.y}, dims);
}

inline const char* to_string(BoundaryStrategy s) {
    switch (s) {
        case BoundaryStrategy::clip: return "clip";
        case BoundaryStrategy::shrink: return "shrink";
        case BoundaryStrategy::shift: break;
    }
    return "shift";
}

inline const char* to_string(VarianceMode m) {
    switch (m) {
        case VarianceMode::inter_only: return "inter_only";
        case VarianceMode::intra_only: return "intra_only";
        case VarianceMode::total: break;
    }
    return "total";
}

}  // namespace uizoom
