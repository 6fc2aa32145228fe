#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "uizoom/backend.hpp"
#include "uizoom/hashing.hpp"
#include "uizoom/oracle_backend.hpp"
#include "uizoom/pipeline.hpp"
#include "uizoom/serialize.hpp"

namespace uizoom {

/// One benchmark record. `oracle` holds optional per-instance overrides for
/// the simulated backend; live backends ignore it.
struct EvalInstance {
    std::string id;
    std::string image_path;  // resolved against the dataset directory
    std::string instruction;
    PixelBox gt_box;
    std::string group;
    std::string ui_type;
    json oracle;
};

/// Reads a JSON Lines dataset with keys id, image, instruction,
/// bbox [x1, y1, x2, y2] (pixels), group, ui_type. Blank lines are skipped.
inline std::vector<EvalInstance> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(errc::kDatasetUnreadable, "cannot read dataset " + path);
    const auto base = std::filesystem::path(path).parent_path();
    std::vector<EvalInstance> out;
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto where = path + ":" + std::to_string(lineno);
        const json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw Error(errc::kDatasetFormat, where + ": not a JSON object");
        try {
            EvalInstance inst;
            const auto& id = j.at("id");
            inst.id = id.is_string() ? id.get<std::string>() : id.dump();
            const auto image = std::filesystem::path(j.at("image").get<std::string>());
            inst.image_path = (image.is_absolute() ? image : base / image).string();
            inst.instruction = j.at("instruction").get<std::string>();
            const auto bb = j.at("bbox").get<std::vector<double>>();
            if (bb.size() != 4) throw Error(errc::kDatasetFormat, where + ": bbox needs four numbers");
            inst.gt_box = PixelBox::from_corners(bb[0], bb[1], bb[2], bb[3]);
            inst.group = j.value("group", "");
            inst.ui_type = j.value("ui_type", "");
            if (j.contains("oracle")) inst.oracle = j["oracle"];
            out.push_back(std::move(inst));
        } catch (const json::exception& e) {
            throw Error(errc::kDatasetFormat, where + ": " + e.what());
        }
    }
    return out;
}

inline json to_json(const EvalInstance& inst) {
    json j = {{"id", inst.id},
              {"image", inst.image_path},
              {"instruction", inst.instruction},
              {"bbox", box_json(inst.gt_box)},
              {"group", inst.group},
              {"ui_type", inst.ui_type}};
    if (!inst.oracle.is_null()) j["oracle"] = inst.oracle;
    return j;
}

/// Click is correct when the point, in pixels, lies inside the ground-truth
/// box, edges included.
inline bool score(NormPoint p, const PixelBox& gt, ImageDims dims) {
    return gt.contains(to_pixel_point(p, dims));
}

using BackendFactory = std::function<std::shared_ptr<Backend>(const EvalInstance&)>;

inline BackendFactory shared_backend(std::shared_ptr<Backend> backend) {
    return [backend](const EvalInstance&) { return backend; };
}

/// Applies the per-instance "oracle" overrides on top of `base`.
inline OracleConfig oracle_for(const OracleConfig& base, const EvalInstance& inst) {
    OracleConfig c = base;
    c.hidden_target = inst.gt_box;
    c.rng_seed = mix_seed(base.rng_seed, fnv1a(inst.id));
    const json& o = inst.oracle;
    if (o.is_object()) {
        c.center_noise = o.value("center_noise", c.center_noise);
        c.size_noise = o.value("size_noise", c.size_noise);
        c.outlier_rate = o.value("outlier_rate", c.outlier_rate);
        c.parse_failure_rate = o.value("parse_failure_rate", c.parse_failure_rate);
        c.refine_failure_rate = o.value("refine_failure_rate", c.refine_failure_rate);
        c.emit_logprobs = o.value("emit_logprobs", c.emit_logprobs);
        if (o.contains("emit_frame"))
            c.emit_frame = o["emit_frame"] == "normalized" ? FrameHint::normalized : FrameHint::pixel;
        if (o.contains("target")) {
            const auto t = o["target"].get<std::vector<double>>();
            if (t.size() == 4) c.hidden_target = PixelBox::from_corners(t[0], t[1], t[2], t[3]);
        }
        if (o.contains("confidence")) {
            const json& cm = o["confidence"];
            c.confidence.peak = cm.value("peak", c.confidence.peak);
            c.confidence.floor = cm.value("floor", c.confidence.floor);
            c.confidence.scale_px = cm.value("scale_px", c.confidence.scale_px);
            c.confidence.tokens = cm.value("tokens", c.confidence.tokens);
        }
    }
    return c;
}

inline BackendFactory oracle_factory(OracleConfig base) {
    return [base](const EvalInstance& inst) -> std::shared_ptr<Backend> {
        return std::make_shared<OracleBackend>(oracle_for(base, inst));
    };
}

/// Small FIFO cache of decoded screenshots shared by repeated runs.
class ImageCache {
public:
    explicit ImageCache(std::size_t capacity = 32) : capacity_(std::max<std::size_t>(capacity, 1)) {}

    std::shared_ptr<const Screenshot> get(const std::string& path) {
        {
            std::lock_guard lock(mu_);
            if (auto it = map_.find(path); it != map_.end()) return it->second;
        }
        auto img = std::make_shared<const Screenshot>(load_image(path));
        std::lock_guard lock(mu_);
        if (map_.emplace(path, img).second) {
            order_.push_back(path);
            if (order_.size() > capacity_) {
                map_.erase(order_.front());
                order_.erase(order_.begin());
            }
        }
        return img;
    }

private:
    std::size_t capacity_;
    std::mutex mu_;
    std::map<std::string, std::shared_ptr<const Screenshot>> map_;
    std::vector<std::string> order_;
};

struct AccuracyCell {
    int total = 0;
    int correct = 0;
    double accuracy() const { return total ? static_cast<double>(correct) / total : 0.0; }
};

struct EvalRow {
    std::string id;
    std::string group;
    std::string ui_type;
    PixelBox gt_box;
    bool correct = false;
    GroundingResult result;
};

struct LatencyStats {
    double mean_ms = 0.0;
    double p50_ms = 0.0;
    double p90_ms = 0.0;
    double p99_ms = 0.0;
    double max_ms = 0.0;
};

struct EvalReport {
    json config;
    int total = 0;
    int correct = 0;
    double accuracy = 0.0;
    std::map<std::string, AccuracyCell> by_group;
    std::map<std::string, AccuracyCell> by_ui_type;
    std::map<std::string, AccuracyCell> by_branch;  // keys: pass, crop, fallback_global, failure
    int gated = 0;                                  // instances that reached the gate
    AccuracyCell routed_pass;                       // gate passed
    AccuracyCell routed_zoom;                       // gate failed: crop or fallback_global
    LatencyStats latency;
    std::vector<EvalRow> rows;

    double trigger_rate(Branch b) const {
        auto it = by_branch.find(to_string(b));
        return total && it != by_branch.end() ? static_cast<double>(it->second.total) / total : 0.0;
    }

    /// Fraction of gated instances sent to the zoom-in stage.
    double crop_percent() const { return gated ? static_cast<double>(routed_zoom.total) / gated : 0.0; }
};

/// Digest of the stage-1 candidate set, for checking sample reuse.
inline std::uint64_t candidate_digest(const GroundingResult& r) {
    std::uint64_t h = fnv1a("candidates");
    for (const auto& c : r.candidates) {
        for (double v : {c.box.x1, c.box.y1, c.box.x2, c.box.y2, c.confidence}) h = fnv1a_double(v, h);
        h = fnv1a(c.raw_text, h);
    }
    return h;
}

namespace detail {

inline double percentile(std::vector<double> v, double q) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
    return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

}  // namespace detail

/// Aggregates rows into a report; rows keep their input order.
inline EvalReport aggregate(std::vector<EvalRow> rows, json config) {
    EvalReport rep;
    rep.config = std::move(config);
    for (const char* b : {"pass", "crop", "fallback_global", "failure"}) rep.by_branch[b];
    std::vector<double> lat;
    double lat_sum = 0.0;
    for (const auto& row : rows) {
        ++rep.total;
        rep.correct += row.correct;
        auto bump = [&](AccuracyCell& c) {
            ++c.total;
            c.correct += row.correct;
        };
        bump(rep.by_group[row.group]);
        bump(rep.by_ui_type[row.ui_type]);
        bump(rep.by_branch[to_string(row.result.branch)]);
        if (row.result.gating) {
            ++rep.gated;
            bump(row.result.gating->passed ? rep.routed_pass : rep.routed_zoom);
        }
        lat.push_back(row.result.timings.total_ms);
        lat_sum += row.result.timings.total_ms;
    }
    rep.accuracy = rep.total ? static_cast<double>(rep.correct) / rep.total : 0.0;
    if (!lat.empty()) {
        rep.latency.mean_ms = lat_sum / static_cast<double>(lat.size());
        rep.latency.p50_ms = detail::percentile(lat, 0.50);
        rep.latency.p90_ms = detail::percentile(lat, 0.90);
        rep.latency.p99_ms = detail::percentile(lat, 0.99);
        rep.latency.max_ms = *std::max_element(lat.begin(), lat.end());
    }
    rep.rows = std::move(rows);
    return rep;
}

struct EvalOptions {
    int concurrency = 8;
    std::shared_ptr<SampleCache> cache;  // reuse samples across runs when set
    std::shared_ptr<ImageCache> images;
    json backend_snapshot;               // recorded in the report config
};

inline EvalRow evaluate_one(const EvalInstance& inst, const PipelineConfig& cfg, const BackendFactory& factory,
                            const EvalOptions& opt) {
    EvalRow row{inst.id, inst.group, inst.ui_type, inst.gt_box, false, {}};
    auto fail = [&](const std::string& code, const std::string& msg) {
        row.result = GroundingResult{};
        row.result.error = ErrorInfo{code, msg};
        return row;
    };
    std::shared_ptr<const Screenshot> img;
    try {
        img = opt.images ? opt.images->get(inst.image_path) : std::make_shared<const Screenshot>(load_image(inst.image_path));
    } catch (const Error& e) {
        return fail(e.code(), e.what());
    }
    const ImageDims dims = img->dims();
    if (!inst.gt_box.valid() || inst.gt_box.x1 < 0 || inst.gt_box.y1 < 0 || inst.gt_box.x2 > dims.width ||
        inst.gt_box.y2 > dims.height)
        return fail(errc::kGtOutOfBounds, "ground-truth box of " + inst.id + " lies outside the image");
    try {
        std::shared_ptr<Backend> backend = factory(inst);
        if (opt.cache) backend = std::make_shared<CachingBackend>(backend, opt.cache, inst.id);
        row.result = ground(*img, inst.instruction, cfg, *backend);
    } catch (const Error& e) {
        return fail(e.code(), e.what());
    } catch (const std::exception& e) {
        return fail("internal", e.what());
    }
    row.result.dims = dims;
    row.correct = row.result.point && score(*row.result.point, inst.gt_box, dims);
    return row;
}

inline json config_snapshot(const PipelineConfig& cfg, const json& backend) {
    return {{"pipeline", to_json(cfg)}, {"backend", backend}};
}

inline EvalReport run_eval(const std::vector<EvalInstance>& dataset, const PipelineConfig& cfg,
                           const BackendFactory& factory, EvalOptions opt = {}) {
    cfg.validate();
    if (!opt.images) opt.images = std::make_shared<ImageCache>();
    std::vector<EvalRow> rows(dataset.size());
    run_bounded(dataset.size(), opt.concurrency,
                [&](std::size_t i) { rows[i] = evaluate_one(dataset[i], cfg, factory, opt); });
    return aggregate(std::move(rows), config_snapshot(cfg, opt.backend_snapshot));
}

inline json cell_json(const AccuracyCell& c) {
    return {{"total", c.total}, {"correct", c.correct}, {"accuracy", c.accuracy()}};
}

/// Summary document without per-instance rows.
inline json summary_json(const EvalReport& r) {
    json j;
    j["config"] = r.config;
    j["total"] = r.total;
    j["correct"] = r.correct;
    j["accuracy"] = r.accuracy;
    for (const auto& [k, c] : r.by_group) j["by_group"][k] = cell_json(c);
    for (const auto& [k, c] : r.by_ui_type) j["by_ui_type"][k] = cell_json(c);
    for (const auto& [k, c] : r.by_branch) {
        j["branches"][k] = cell_json(c);
        j["branches"][k]["trigger_rate"] = r.total ? static_cast<double>(c.total) / r.total : 0.0;
    }
    j["gated"] = r.gated;
    j["crop_percent"] = r.crop_percent();
    j["routing"] = {
        {"pass", {{"trigger_rate", r.gated ? static_cast<double>(r.routed_pass.total) / r.gated : 0.0},
                  {"accuracy", r.routed_pass.accuracy()}}},
        {"zoom", {{"trigger_rate", r.crop_percent()}, {"accuracy", r.routed_zoom.accuracy()}}}};
    j["latency_ms"] = {{"mean", r.latency.mean_ms},
                       {"p50", r.latency.p50_ms},
                       {"p90", r.latency.p90_ms},
                       {"p99", r.latency.p99_ms},
                       {"max", r.latency.max_ms}};
    return j;
}

/// Results file: a config header line, then one trace per instance.
/// Timings are excluded so seeded runs reproduce byte for byte.
inline std::string results_jsonl(const EvalReport& r) {
    std::ostringstream out;
    out << json{{"type", "config"}, {"config", r.config}}.dump() << '\n';
    for (const auto& row : r.rows) {
        json j = {{"type", "result"},
                  {"id", row.id},
                  {"group", row.group},
                  {"ui_type", row.ui_type},
                  {"gt", box_json(row.gt_box)},
                  {"correct", row.correct},
                  {"stage1_digest", candidate_digest(row.result)},
                  {"result", to_json(row.result)}};
        out << j.dump() << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------- sweeps

struct GridAxis {
    std::string key;
    std::vector<std::string> values;
};

namespace detail {

inline double parse_double(const std::string& key, const std::string& v) {
    if (v == "inf" || v == "+inf") return std::numeric_limits<double>::infinity();
    if (v == "-inf") return -std::numeric_limits<double>::infinity();
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (const std::logic_error&) {
    }
    throw Error(errc::kConfig, "bad value '" + v + "' for " + key);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw Error(errc::kConfig, "bad boolean '" + v + "' for " + key);
}

}  // namespace detail

inline BoundaryStrategy parse_strategy(const std::string& v) {
    if (v == "shift") return BoundaryStrategy::shift;
    if (v == "clip") return BoundaryStrategy::clip;
    if (v == "shrink") return BoundaryStrategy::shrink;
    throw Error(errc::kConfig, "unknown boundary strategy '" + v + "'");
}

inline VarianceMode parse_variance_mode(const std::string& v) {
    if (v == "total") return VarianceMode::total;
    if (v == "inter_only" || v == "inter") return VarianceMode::inter_only;
    if (v == "intra_only" || v == "intra") return VarianceMode::intra_only;
    throw Error(errc::kConfig, "unknown variance mode '" + v + "'");
}

inline GatingMode parse_gating_mode(const std::string& v) {
    if (v == "both") return GatingMode::both;
    if (v == "spatial_only" || v == "spatial") return GatingMode::spatial_only;
    if (v == "conf_only" || v == "conf") return GatingMode::conf_only;
    throw Error(errc::kConfig, "unknown gating mode '" + v + "'");
}

inline FrameHint parse_frame_hint(const std::string& v) {
    if (v == "pixel") return FrameHint::pixel;
    if (v == "normalized") return FrameHint::normalized;
    if (v == "auto") return FrameHint::auto_detect;
    throw Error(errc::kConfig, "unknown frame hint '" + v + "'");
}

/// Sets one sweepable pipeline field from its textual value.
inline void apply_setting(PipelineConfig& cfg, const std::string& key, const std::string& v) {
    using detail::parse_double;
    if (key == "tau") cfg.tau = parse_double(key, v);
    else if (key == "gamma") cfg.crop.gamma = parse_double(key, v);
    else if (key == "n") cfg.n = static_cast<int>(parse_double(key, v));
    else if (key == "temperature") cfg.temperature = parse_double(key, v);
    else if (key == "strategy") cfg.crop.strategy = parse_strategy(v);
    else if (key == "keep_fraction") cfg.crop.keep_fraction = parse_double(key, v);
    else if (key == "removal_ratio") cfg.crop.keep_fraction = 1.0 - parse_double(key, v);
    else if (key == "square") cfg.crop.square = detail::parse_bool(key, v);
    else if (key == "variance_mode") cfg.crop.variance_mode = parse_variance_mode(v);
    else if (key == "gating_mode") cfg.gating_mode = parse_gating_mode(v);
    else if (key == "fixed_ratio") {
        if (v == "none" || v == "off") cfg.crop.fixed_ratio.reset();
        else cfg.crop.fixed_ratio = parse_double(key, v);
    } else if (key == "min_crop" || key == "min_side") cfg.crop.min_side = parse_double(key, v);
    else throw Error(errc::kConfig, "unknown sweep key '" + key + "'");
}

/// "key=v1,v2,..." into an axis.
inline GridAxis parse_grid_axis(const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(errc::kConfig, "grid axis must look like key=v1,v2: " + spec);
    GridAxis axis{spec.substr(0, eq), {}};
    std::stringstream ss(spec.substr(eq + 1));
    for (std::string v; std::getline(ss, v, ',');)
        if (!v.empty()) axis.values.push_back(v);
    if (axis.values.empty()) throw Error(errc::kConfig, "grid axis '" + axis.key + "' has no values");
    PipelineConfig probe;
    for (const auto& v : axis.values) apply_setting(probe, axis.key, v);
    return axis;
}

struct SweepCell {
    std::vector<std::pair<std::string, std::string>> params;
    EvalReport report;
};

/// Cartesian product of the axes, first axis slowest. Cells that agree on
/// (n, temperature, seed) reuse the same stage-1 samples.
inline std::vector<SweepCell> sweep(const std::vector<EvalInstance>& dataset, const PipelineConfig& base,
                                    const std::vector<GridAxis>& grid, const BackendFactory& factory,
                                    EvalOptions opt = {}) {
    if (grid.empty()) throw Error(errc::kConfig, "sweep grid is empty");
    for (const auto& a : grid)
        if (a.values.empty()) throw Error(errc::kConfig, "grid axis '" + a.key + "' has no values");
    if (!opt.cache) opt.cache = std::make_shared<SampleCache>();
    if (!opt.images) opt.images = std::make_shared<ImageCache>();

    std::vector<SweepCell> cells;
    std::vector<std::size_t> idx(grid.size(), 0);
    for (;;) {
        SweepCell cell;
        PipelineConfig cfg = base;
        for (std::size_t a = 0; a < grid.size(); ++a) {
            apply_setting(cfg, grid[a].key, grid[a].values[idx[a]]);
            cell.params.emplace_back(grid[a].key, grid[a].values[idx[a]]);
        }
        cell.report = run_eval(dataset, cfg, factory, opt);
        cells.push_back(std::move(cell));

        std::size_t a = grid.size();
        while (a > 0) {
            --a;
            if (++idx[a] < grid[a].values.size()) break;
            idx[a] = 0;
            if (a == 0) return cells;
        }
    }
}

inline json sweep_json(const std::vector<SweepCell>& cells) {
    json rows = json::array();
    for (const auto& c : cells) {
        json params = json::object();
        for (const auto& [k, v] : c.params) params[k] = v;
        rows.push_back({{"params", params}, {"summary", summary_json(c.report)}});
    }
    return rows;
}

inline std::string sweep_csv(const std::vector<SweepCell>& cells) {
    std::ostringstream out;
    if (cells.empty()) return {};
    for (const auto& [k, v] : cells.front().params) out << k << ',';
    out << "instances,accuracy,crop_percent,pass_rate,crop_rate,fallback_rate,failure_rate,pass_accuracy,"
           "zoom_accuracy\n";
    for (const auto& c : cells) {
        const auto& r = c.report;
        for (const auto& [k, v] : c.params) out << v << ',';
        out << r.total << ',' << r.accuracy << ',' << r.crop_percent() << ',' << r.trigger_rate(Branch::pass) << ','
            << r.trigger_rate(Branch::crop) << ',' << r.trigger_rate(Branch::fallback_global) << ','
            << r.trigger_rate(Branch::failure) << ',' << r.routed_pass.accuracy() << ','
            << r.routed_zoom.accuracy() << '\n';
    }
    return out.str();
}

}  // namespace uizoom
