#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "uizoom/error.hpp"
#include "uizoom/geometry.hpp"
#include "uizoom/parsing.hpp"

namespace uizoom {

/// Which reliability signals feed the gating score. Single-signal modes are
/// doubled so one threshold grid is comparable across modes.
enum class GatingMode { both, spatial_only, conf_only };

struct GatingReport {
    double c_spatial = 0.0;
    double avg_conf = 0.0;
    double score = 0.0;
    double threshold = 0.0;
    bool passed = false;
    int n_valid = 0;
    bool logprob_fallback = false;
    GatingMode mode = GatingMode::both;
};

struct VoteOutcome {
    std::size_t winner_index = 0;
    std::vector<int> support;
    bool tie_broken_by_confidence = false;
};

/// Mean IoU over ordered pairs i != j. A single candidate has consensus 1.
inline double spatial_consensus(std::span<const Candidate> cands) {
    const std::size_t n = cands.size();
    if (n == 0) throw Error(errc::kNoCandidates, "spatial consensus of an empty candidate set");
    if (n == 1) return 1.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) sum += iou(cands[i].box, cands[j].box);
    return sum / static_cast<double>(n * (n - 1));
}

inline double mean_confidence(std::span<const Candidate> cands) {
    if (cands.empty()) throw Error(errc::kNoCandidates, "mean confidence of an empty candidate set");
    double sum = 0.0;
    for (const auto& c : cands) sum += c.confidence;
    return sum / static_cast<double>(cands.size());
}

inline double gating_score(double c_spatial, double avg_conf, GatingMode mode) {
    switch (mode) {
        case GatingMode::spatial_only: return 2.0 * c_spatial;
        case GatingMode::conf_only: return 2.0 * avg_conf;
        case GatingMode::both: break;
    }
    return c_spatial + avg_conf;
}

inline GatingReport gate(std::span<const Candidate> cands, double threshold,
                         GatingMode mode = GatingMode::both) {
    GatingReport r;
    r.c_spatial = spatial_consensus(cands);
    r.avg_conf = mean_confidence(cands);
    r.score = gating_score(r.c_spatial, r.avg_conf, mode);
    r.threshold = threshold;
    r.passed = r.score > threshold;
    r.n_valid = static_cast<int>(cands.size());
    r.mode = mode;
    for (const auto& c : cands) r.logprob_fallback = r.logprob_fallback || c.logprob_fallback;
    return r;
}

/// Peer-support vote: v_i counts peers with IoU above the threshold; the
/// winner maximizes (v_i, confidence) with the lowest index breaking the rest.
inline VoteOutcome consensus_vote(std::span<const Candidate> cands, double vote_iou_threshold = 0.5) {
    const std::size_t n = cands.size();
    if (n == 0) throw Error(errc::kNoCandidates, "vote over an empty candidate set");
    VoteOutcome out;
    out.support.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (iou(cands[i].box, cands[j].box) > vote_iou_threshold) {
                ++out.support[i];
                ++out.support[j];
            }

    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (out.support[i] > out.support[best] ||
            (out.support[i] == out.support[best] && cands[i].confidence > cands[best].confidence))
            best = i;
    }
    out.winner_index = best;
    for (std::size_t i = 0; i < n; ++i)
        if (i != best && out.support[i] == out.support[best] && cands[i].confidence < cands[best].confidence)
            out.tie_broken_by_confidence = true;
    return out;
}

inline const char* to_string(GatingMode m) {
    switch (m) {
        case GatingMode::spatial_only: return "spatial_only";
        case GatingMode::conf_only: return "conf_only";
        case GatingMode::both: break;
    }
    return "both";
}

}  // namespace uizoom
