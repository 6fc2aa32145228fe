#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "uizoom/backend.hpp"
#include "uizoom/crop_planner.hpp"
#include "uizoom/gating.hpp"
#include "uizoom/geometry.hpp"
#include "uizoom/imaging.hpp"
#include "uizoom/parsing.hpp"

namespace uizoom {

inline constexpr const char* kDefaultPrompt =
    "You are a GUI grounding assistant. Locate the single UI element described by the instruction in the "
    "screenshot. Answer only with JSON of the form {\"bbox\": [x1, y1, x2, y2]} using pixel coordinates of "
    "the given image.\nInstruction: {instruction}";

struct PipelineConfig {
    int n = 8;
    double temperature = 0.9;
    double tau = 1.0;
    CropConfig crop;
    GatingMode gating_mode = GatingMode::both;
    double vote_iou_threshold = 0.5;
    ResizePolicy resize;
    FrameHint frame_hint = FrameHint::auto_detect;
    std::string prompt_template = kDefaultPrompt;
    std::optional<std::uint64_t> seed;  // forwarded to the backend's sampler
    bool want_logprobs = true;

    void validate() const {
        if (n < 1) throw Error(errc::kConfig, "n must be at least 1");
        if (!(temperature >= 0.0)) throw Error(errc::kConfig, "temperature must be >= 0");
        if (std::isnan(tau)) throw Error(errc::kConfig, "tau must be a number");
        crop.validate();
        resize.validate();
    }

    /// Prompt with every "{instruction}" replaced.
    std::string prompt_for(const std::string& instruction) const {
        std::string out = prompt_template;
        const std::string marker = "{instruction}";
        for (auto pos = out.find(marker); pos != std::string::npos; pos = out.find(marker, pos + instruction.size()))
            out.replace(pos, marker.size(), instruction);
        return out;
    }
};

enum class Branch { pass, crop, fallback_global, failure };

inline const char* to_string(Branch b) {
    switch (b) {
        case Branch::pass: return "pass";
        case Branch::crop: return "crop";
        case Branch::fallback_global: return "fallback_global";
        case Branch::failure: break;
    }
    return "failure";
}

struct StageTimings {
    double sample_ms = 0.0;
    double gate_ms = 0.0;
    double crop_ms = 0.0;
    double refine_ms = 0.0;
    double total_ms = 0.0;
};

struct ErrorInfo {
    std::string code;
    std::string message;
};

struct GroundingResult {
    std::optional<NormPoint> point;  // absent exactly on the failure branch
    Branch branch = Branch::failure;
    std::optional<GatingReport> gating;
    std::optional<VoteOutcome> vote;
    std::optional<CropPlan> plan;
    std::optional<PixelBox> crop_window;  // integer raster window sent for refinement
    std::optional<double> refine_sx, refine_sy;
    std::optional<std::string> refined_raw;
    bool refined_clamped = false;  // refinement fell partly outside the crop
    std::vector<Candidate> candidates;
    std::vector<std::string> sample_errors;
    int sample_count_requested = 0;
    int sample_count_valid = 0;
    int model_calls = 0;
    std::optional<ErrorInfo> error;  // failure cause, or why the crop branch fell back
    ImageDims dims;
    StageTimings timings;
};

namespace detail {

class Stopwatch {
public:
    double lap_ms() {
        const auto now = std::chrono::steady_clock::now();
        const double ms = std::chrono::duration<double, std::milli>(now - last_).count();
        last_ = now;
        return ms;
    }

private:
    std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

inline std::size_t most_confident(const std::vector<Candidate>& cands) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < cands.size(); ++i)
        if (cands[i].confidence > cands[best].confidence) best = i;
    return best;
}

}  // namespace detail

/// One grounding instance: sample, gate, then either vote or zoom once.
/// Backend failures become failure (or fallback) results, never exceptions.
inline GroundingResult ground(const Screenshot& image, const std::string& instruction, const PipelineConfig& cfg,
                              Backend& backend) {
    GroundingResult res;
    const ImageDims dims = image.dims();
    res.dims = dims;
    res.sample_count_requested = cfg.n;
    detail::Stopwatch total, stage;
    const std::string prompt = cfg.prompt_for(instruction);

    auto finish = [&](Branch b) {
        res.branch = b;
        res.timings.total_ms = total.lap_ms();
        return res;
    };

    // Stage 1: global multi-sampling
    SampleResult drawn;
    {
        Resized sent = resize(image, cfg.resize);
        SampleRequest req{std::move(sent.image), {PixelBox::full(dims), sent.sx, sent.sy, dims}, prompt,
                          cfg.temperature, cfg.n, cfg.want_logprobs, cfg.seed};
        ++res.model_calls;
        try {
            drawn = backend.sample(req);
        } catch (const Error& e) {
            res.error = ErrorInfo{e.code(), e.what()};
            res.timings.sample_ms = stage.lap_ms();
            return finish(Branch::failure);
        }
        res.sample_errors = drawn.errors;
        const ImageDims sent_dims = req.image.dims();
        for (const auto& rec : drawn.completions) {
            auto parsed = parse_candidate(rec, sent_dims, cfg.frame_hint);
            if (auto* c = std::get_if<Candidate>(&parsed)) {
                c->box = clamp_to(scaled(c->box, 1.0 / sent.sx, 1.0 / sent.sy), dims);
                res.candidates.push_back(std::move(*c));
            }
        }
        res.sample_count_valid = static_cast<int>(res.candidates.size());
        res.timings.sample_ms = stage.lap_ms();
    }
    if (res.candidates.empty()) {
        res.error = ErrorInfo{"pipeline.no_valid_candidates", "no sampled completion could be parsed"};
        return finish(Branch::failure);
    }

    // Stage 2: reliability gate
    res.gating = gate(res.candidates, cfg.tau, cfg.gating_mode);
    res.timings.gate_ms = stage.lap_ms();
    if (res.gating->passed) {
        res.vote = consensus_vote(res.candidates, cfg.vote_iou_threshold);
        res.point = to_norm_point(center(res.candidates[res.vote->winner_index].box), dims);
        return finish(Branch::pass);
    }

    // Stage 3: adaptive crop and a single deterministic zoom pass
    auto fall_back = [&](std::string code, std::string why) {
        res.error = ErrorInfo{std::move(code), std::move(why)};
        res.point = to_norm_point(center(res.candidates[detail::most_confident(res.candidates)].box), dims);
        return finish(Branch::fallback_global);
    };

    res.plan = build_crop_plan(res.candidates, dims, cfg.crop);
    const PixelBox rw = raster_window(res.plan->window, dims);
    res.crop_window = rw;
    Resized sent;
    try {
        sent = resize(crop(image, res.plan->window), cfg.resize);
    } catch (const Error& e) {
        res.timings.crop_ms = stage.lap_ms();
        return fall_back(e.code(), e.what());
    }
    res.refine_sx = sent.sx;
    res.refine_sy = sent.sy;
    res.timings.crop_ms = stage.lap_ms();

    const ImageDims sent_dims = sent.image.dims();
    SampleRequest req{std::move(sent.image), {rw, sent.sx, sent.sy, dims}, prompt, 0.0, 1, cfg.want_logprobs,
                      cfg.seed};
    ++res.model_calls;
    CompletionRecord refined;
    try {
        refined = backend.infer_deterministic(req);
    } catch (const Error& e) {
        res.timings.refine_ms = stage.lap_ms();
        return fall_back(e.code(), e.what());
    }
    res.refined_raw = refined.text;
    res.timings.refine_ms = stage.lap_ms();

    auto parsed = parse_candidate(refined, sent_dims, cfg.frame_hint);
    if (auto* fail = std::get_if<ParseFailure>(&parsed)) return fall_back("pipeline.refine_parse_failed", fail->reason);
    const Candidate& local = std::get<Candidate>(parsed);
    res.refined_clamped = local.clamped;
    const ImageDims crop_dims{static_cast<int>(rw.width()), static_cast<int>(rw.height())};
    const PixelBox in_crop = clamp_to(scaled(local.box, 1.0 / sent.sx, 1.0 / sent.sy), crop_dims);
    res.point = map_back(in_crop, rw, dims);
    return finish(Branch::crop);
}

/// Loads the image at `path` first; a load failure becomes a failure result.
inline GroundingResult ground_path(const std::string& path, const std::string& instruction, const PipelineConfig& cfg,
                                   Backend& backend) {
    try {
        return ground(load_image(path), instruction, cfg, backend);
    } catch (const Error& e) {
        GroundingResult r;
        r.branch = Branch::failure;
        r.error = ErrorInfo{e.code(), e.what()};
        return r;
    }
}

/// Runs `count` independent jobs on at most `cap` threads; job i writes slot i.
inline void run_bounded(std::size_t count, int cap, const std::function<void(std::size_t)>& job) {
    const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(cap, 1)));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) job(i);
    };
    if (workers <= 1) {
        worker();
        return;
    }
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
}

struct GroundingTask {
    std::string image_path;
    std::string instruction;
    std::shared_ptr<Backend> backend;
};

/// Results come back in input order; one failing instance never affects the
/// others. At most `cap` instances talk to backends at once.
inline std::vector<GroundingResult> ground_batch(const std::vector<GroundingTask>& tasks, const PipelineConfig& cfg,
                                                 int cap) {
    std::vector<GroundingResult> out(tasks.size());
    run_bounded(tasks.size(), cap, [&](std::size_t i) {
        const auto& t = tasks[i];
        try {
            if (!t.backend) throw Error(errc::kConfig, "task has no backend");
            out[i] = ground_path(t.image_path, t.instruction, cfg, *t.backend);
        } catch (const std::exception& e) {
            out[i] = GroundingResult{};
            const auto* err = dynamic_cast<const Error*>(&e);
            out[i].error = ErrorInfo{err ? err->code() : "internal", e.what()};
        }
    });
    return out;
}

}  // namespace uizoom
