#pragma once

// Seeded synthetic model for offline verification. Candidate centers are
// Gaussian around a hidden target; completions are written in the candidate
// grammar with synthetic logprobs so the whole parsing path runs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "uizoom/backend.hpp"
#include "uizoom/hashing.hpp"

namespace uizoom {

/// Confidence as a function of center error:
/// c(err) = floor + (peak - floor) * exp(-err^2 / (2 scale^2)).
struct ConfidenceModel {
    double peak = 0.95;
    double floor = 0.30;
    double scale_px = 30.0;
    int tokens = 16;
    double failure_confidence = 0.2;

    double at(double err_px) const {
        return floor + (peak - floor) * std::exp(-err_px * err_px / (2.0 * scale_px * scale_px));
    }
};

struct OracleConfig {
    PixelBox hidden_target;           // full-image pixels
    double center_noise = 0.0;        // per-axis std-dev in pixels at the reference temperature
    double size_noise = 0.0;          // fractional std-dev of width and height
    double parse_failure_rate = 0.0;  // stochastic draws only
    double refine_failure_rate = 0.0; // deterministic pass only
    double outlier_rate = 0.0;        // center uniform over the image instead
    ConfidenceModel confidence;
    std::uint64_t rng_seed = 0;
    double reference_temperature = 0.9;  // noise scales with T / reference
    FrameHint emit_frame = FrameHint::pixel;
    bool emit_logprobs = true;

    void validate() const {
        auto rate = [](double r) { return r >= 0.0 && r <= 1.0; };
        if (!hidden_target.valid()) throw Error(errc::kConfig, "oracle target is not a valid box");
        if (!(center_noise >= 0.0) || !(size_noise >= 0.0)) throw Error(errc::kConfig, "oracle noise must be >= 0");
        if (!rate(parse_failure_rate) || !rate(refine_failure_rate) || !rate(outlier_rate))
            throw Error(errc::kConfig, "oracle rates must lie in [0, 1]");
        if (confidence.tokens < 1) throw Error(errc::kConfig, "oracle token count must be positive");
        if (!(reference_temperature > 0.0)) throw Error(errc::kConfig, "reference temperature must be positive");
    }
};

class OracleBackend final : public Backend {
public:
    explicit OracleBackend(OracleConfig cfg) : cfg_(cfg) { cfg_.validate(); }

    const OracleConfig& config() const { return cfg_; }

    SampleResult sample(const SampleRequest& req) override {
        SampleResult out;
        out.completions.reserve(static_cast<std::size_t>(std::max(req.n, 0)));
        const double noise = cfg_.center_noise * req.temperature / cfg_.reference_temperature;
        const PixelPoint target = center(cfg_.hidden_target);
        const ImageDims full = req.view.full_dims;
        for (int k = 0; k < req.n; ++k) {
            std::mt19937_64 rng(stream_seed(req, 'S', static_cast<std::uint64_t>(k)));
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            std::normal_distribution<double> normal(0.0, 1.0);
            if (unit(rng) < cfg_.parse_failure_rate) {
                out.completions.push_back(failure_completion());
                continue;
            }
            PixelPoint c;
            if (unit(rng) < cfg_.outlier_rate) {
                c = {unit(rng) * full.width, unit(rng) * full.height};
            } else {
                c = {target.x + noise * normal(rng), target.y + noise * normal(rng)};
            }
            const double w = cfg_.hidden_target.width() * std::max(0.05, 1.0 + cfg_.size_noise * normal(rng));
            const double h = cfg_.hidden_target.height() * std::max(0.05, 1.0 + cfg_.size_noise * normal(rng));
            const double err = std::hypot(c.x - target.x, c.y - target.y);
            out.completions.push_back(
                box_completion(PixelBox::centered(c, w, h), req, cfg_.confidence.at(err), k % 2 == 1));
        }
        return out;
    }

    CompletionRecord infer_deterministic(const SampleRequest& req) override {
        std::mt19937_64 rng(stream_seed(req, 'R', 0));
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        if (unit(rng) < cfg_.refine_failure_rate) return failure_completion();
        const PixelBox& win = req.view.window;
        const PixelBox& t = cfg_.hidden_target;
        if (intersection_area(t, win) > 0.0) return box_completion(t, req, cfg_.confidence.peak, false);

        // distractor of the target's size, uniformly placed inside the view
        const double dx = unit(rng) * std::max(0.0, win.width() - t.width());
        const double dy = unit(rng) * std::max(0.0, win.height() - t.height());
        const PixelBox d{win.x1 + dx, win.y1 + dy, win.x1 + dx + t.width(), win.y1 + dy + t.height()};
        return box_completion(d, req, cfg_.confidence.peak, false);
    }

    std::string name() const override { return "oracle"; }

private:
    std::uint64_t stream_seed(const SampleRequest& req, char verb, std::uint64_t k) const {
        std::uint64_t s = mix_seed(cfg_.rng_seed, req.seed.value_or(0));
        s = mix_seed(s, static_cast<std::uint64_t>(verb));
        return mix_seed(s, k);
    }

    std::vector<double> logprobs_for(double conf) const {
        const int L = cfg_.confidence.tokens;
        if (!cfg_.emit_logprobs) return {};
        // format tokens are certain; coordinate tokens carry all the mass,
        // so the geometric mean over all L tokens is exactly conf
        const int certain = L / 2;
        std::vector<double> lp(static_cast<std::size_t>(L), 0.0);
        const double per = std::log(conf) * L / (L - certain);
        for (int t = certain; t < L; ++t) lp[static_cast<std::size_t>(t)] = per;
        return lp;
    }

    CompletionRecord failure_completion() const {
        CompletionRecord r;
        r.text = "I could not locate the requested element on this screen.";
        if (cfg_.emit_logprobs)
            r.token_logprobs.assign(static_cast<std::size_t>(cfg_.confidence.tokens),
                                    std::log(cfg_.confidence.failure_confidence));
        return r;
    }

    // `global` is expressed in the sent image's frame before formatting.
    CompletionRecord box_completion(const PixelBox& global, const SampleRequest& req, double conf,
                                    bool bare_style) const {
        const ViewFrame& v = req.view;
        const PixelBox local = scaled(translated(global, -v.window.x1, -v.window.y1), v.sx, v.sy);
        char buf[160];
        if (cfg_.emit_frame == FrameHint::normalized) {
            const ImageDims d = req.image.dims();
            std::snprintf(buf, sizeof buf, "(%.4f, %.4f, %.4f, %.4f)", local.x1 / d.width, local.y1 / d.height,
                          local.x2 / d.width, local.y2 / d.height);
        } else if (bare_style) {
            std::snprintf(buf, sizeof buf, "The element is at [%ld, %ld, %ld, %ld].", round_half_away(local.x1),
                          round_half_away(local.y1), round_half_away(local.x2), round_half_away(local.y2));
        } else {
            std::snprintf(buf, sizeof buf, "{\"bbox\": [%ld, %ld, %ld, %ld]}", round_half_away(local.x1),
                          round_half_away(local.y1), round_half_away(local.x2), round_half_away(local.y2));
        }
        return {buf, logprobs_for(conf)};
    }

    OracleConfig cfg_;
};

}  // namespace uizoom
