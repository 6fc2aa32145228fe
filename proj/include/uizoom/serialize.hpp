#pragma once

// JSON views of configs, traces and reports. Timings are kept out of
// `to_json(GroundingResult)` so traces of seeded runs are byte-stable.

#include <string>

#include <nlohmann/json.hpp>

#include "uizoom/crop_planner.hpp"
#include "uizoom/gating.hpp"
#include "uizoom/oracle_backend.hpp"
#include "uizoom/pipeline.hpp"

namespace uizoom {

using nlohmann::json;

inline json box_json(const PixelBox& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }
inline json vec_json(const Vec2& v) { return json::array({v.x, v.y}); }

inline const char* to_string(FrameHint f) {
    switch (f) {
        case FrameHint::pixel: return "pixel";
        case FrameHint::normalized: return "normalized";
        case FrameHint::auto_detect: break;
    }
    return "auto";
}

inline json to_json(const CropConfig& c) {
    json j = {{"gamma", c.gamma},
              {"min_side", c.min_side},
              {"keep_fraction", c.keep_fraction},
              {"strategy", to_string(c.strategy)},
              {"square", c.square},
              {"variance_mode", to_string(c.variance_mode)}};
    j["fixed_ratio"] = c.fixed_ratio ? json(*c.fixed_ratio) : json(nullptr);
    return j;
}

inline json tau_json(double tau) {
    // JSON has no infinities
    if (std::isinf(tau)) return tau > 0 ? "+inf" : "-inf";
    return tau;
}

inline json to_json(const PipelineConfig& c) {
    json j = {{"n", c.n},
              {"temperature", c.temperature},
              {"tau", tau_json(c.tau)},
              {"crop", to_json(c.crop)},
              {"gating_mode", to_string(c.gating_mode)},
              {"vote_iou_threshold", c.vote_iou_threshold},
              {"resize", c.resize.str()},
              {"frame_hint", to_string(c.frame_hint)},
              {"prompt_template", c.prompt_template},
              {"want_logprobs", c.want_logprobs}};
    j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
    return j;
}

inline json to_json(const OracleConfig& c) {
    return {{"hidden_target", box_json(c.hidden_target)},
            {"center_noise", c.center_noise},
            {"size_noise", c.size_noise},
            {"parse_failure_rate", c.parse_failure_rate},
            {"refine_failure_rate", c.refine_failure_rate},
            {"outlier_rate", c.outlier_rate},
            {"confidence",
             {{"peak", c.confidence.peak},
              {"floor", c.confidence.floor},
              {"scale_px", c.confidence.scale_px},
              {"tokens", c.confidence.tokens}}},
            {"rng_seed", c.rng_seed},
            {"emit_frame", to_string(c.emit_frame)},
            {"emit_logprobs", c.emit_logprobs}};
}

inline json to_json(const GatingReport& g) {
    return {{"c_spatial", g.c_spatial}, {"avg_conf", g.avg_conf},   {"score", g.score},
            {"threshold", tau_json(g.threshold)}, {"passed", g.passed},   {"n_valid", g.n_valid},
            {"logprob_fallback", g.logprob_fallback}, {"mode", to_string(g.mode)}};
}

inline json to_json(const VoteOutcome& v) {
    return {{"winner_index", v.winner_index},
            {"support", v.support},
            {"tie_broken_by_confidence", v.tie_broken_by_confidence}};
}

inline json to_json(const CropPlan& p) {
    return {{"kept_indices", p.kept_indices},
            {"mu", json::array({p.mu.x, p.mu.y})},
            {"v_inter", vec_json(p.v_inter)},
            {"v_intra", vec_json(p.v_intra)},
            {"variance", vec_json(p.variance)},
            {"sigma", vec_json(p.sigma)},
            {"side", p.side},
            {"ideal", box_json(p.ideal)},
            {"window", box_json(p.window)},
            {"strategy", to_string(p.strategy)},
            {"square", p.square},
            {"variance_mode", to_string(p.variance_mode)},
            {"fixed_ratio", p.fixed_ratio}};
}

inline json to_json(const Candidate& c) {
    return {{"box", box_json(c.box)},
            {"confidence", c.confidence},
            {"token_count", c.token_count},
            {"logprob_fallback", c.logprob_fallback},
            {"clamped", c.clamped},
            {"raw_text", c.raw_text}};
}

inline json to_json(const StageTimings& t) {
    return {{"sample_ms", t.sample_ms},
            {"gate_ms", t.gate_ms},
            {"crop_ms", t.crop_ms},
            {"refine_ms", t.refine_ms},
            {"total_ms", t.total_ms}};
}

inline json to_json(const GroundingResult& r, bool with_timings = false) {
    json j;
    j["branch"] = to_string(r.branch);
    j["point"] = r.point ? json::array({r.point->x, r.point->y}) : json(nullptr);
    j["image_size"] = json::array({r.dims.width, r.dims.height});
    j["model_calls"] = r.model_calls;
    j["sample_count_requested"] = r.sample_count_requested;
    j["sample_count_valid"] = r.sample_count_valid;
    j["gating"] = r.gating ? to_json(*r.gating) : json(nullptr);
    j["vote"] = r.vote ? to_json(*r.vote) : json(nullptr);
    j["plan"] = r.plan ? to_json(*r.plan) : json(nullptr);
    j["crop_window"] = r.crop_window ? box_json(*r.crop_window) : json(nullptr);
    j["refine_scale"] = r.refine_sx ? json::array({*r.refine_sx, *r.refine_sy}) : json(nullptr);
    j["refined_raw"] = r.refined_raw ? json(*r.refined_raw) : json(nullptr);
    j["refined_clamped"] = r.refined_clamped;
    j["candidates"] = json::array();
    for (const auto& c : r.candidates) j["candidates"].push_back(to_json(c));
    j["sample_errors"] = r.sample_errors;
    j["error"] = r.error ? json{{"code", r.error->code}, {"message", r.error->message}} : json(nullptr);
    if (with_timings) j["timings"] = to_json(r.timings);
    return j;
}

}  // namespace uizoom
