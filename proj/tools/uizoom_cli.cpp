// uizoom: ground single screenshots, evaluate datasets, run ablation sweeps.
//
// Exit codes: 0 success, 1 instance failure, 2 usage or config error,
// 3 backend unreachable.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "uizoom/eval.hpp"
#include "uizoom/openai_backend.hpp"
#include "uizoom/synthetic.hpp"
#include "uizoom/uizoom.hpp"

namespace fs = std::filesystem;
using namespace uizoom;

namespace {

enum Exit { kOk = 0, kInstanceFailure = 1, kUsage = 2, kUnreachable = 3 };

struct Options {
    // pipeline
    int n = 8;
    double temperature = 0.9;
    std::string tau = "1.0";
    double gamma = 2.5;
    double min_crop = 512;
    double keep_fraction = 0.75;
    std::string strategy = "shift";
    bool square = true;
    std::string variance_mode = "total";
    std::string gating_mode = "both";
    std::string fixed_ratio = "none";
    std::string resize = ResizePolicy{}.str();
    std::string frame = "auto";
    std::string prompt = kDefaultPrompt;
    double vote_iou = 0.5;
    std::optional<std::uint64_t> seed;
    bool no_logprobs = false;
    int concurrency = 8;
    bool quiet = false;

    // backend
    std::string backend = "oracle";
    std::string endpoint = OpenAIConfig{}.endpoint;
    std::string model;
    std::string api_key_env = "UIZOOM_API_KEY";
    double timeout = 120;
    int retries = 3;
    bool split_n = false;
    int max_tokens = 128;

    // oracle
    std::uint64_t oracle_seed = 0;
    std::vector<double> oracle_target;
    double oracle_center_noise = 0.0;
    double oracle_size_noise = 0.0;
    double oracle_outlier_rate = 0.0;
    double oracle_parse_failure_rate = 0.0;
    double oracle_refine_failure_rate = 0.0;
    double oracle_confidence_peak = 0.95;
    double oracle_confidence_floor = 0.30;
    double oracle_confidence_scale = 30.0;
    std::string oracle_frame = "pixel";
    bool oracle_no_logprobs = false;
};

void emit(const json& j) { std::cout << j.dump(2) << '\n'; }

int fail(const std::string& code, const std::string& message, int exit_code) {
    emit({{"error", {{"code", code}, {"message", message}}}});
    std::cerr << "uizoom: " << message << '\n';
    return exit_code;
}

bool unreachable_code(const std::string& code) { return code == errc::kTransport || code == errc::kCapacity; }

PipelineConfig pipeline_config(const Options& o) {
    PipelineConfig c;
    c.n = o.n;
    c.temperature = o.temperature;
    c.tau = detail::parse_double("tau", o.tau);
    c.crop.gamma = o.gamma;
    c.crop.min_side = o.min_crop;
    c.crop.keep_fraction = o.keep_fraction;
    c.crop.strategy = parse_strategy(o.strategy);
    c.crop.square = o.square;
    c.crop.variance_mode = parse_variance_mode(o.variance_mode);
    apply_setting(c, "fixed_ratio", o.fixed_ratio);
    c.gating_mode = parse_gating_mode(o.gating_mode);
    c.resize = ResizePolicy::parse(o.resize);
    c.frame_hint = parse_frame_hint(o.frame);
    c.prompt_template = o.prompt;
    c.vote_iou_threshold = o.vote_iou;
    c.seed = o.seed;
    c.want_logprobs = !o.no_logprobs;
    c.validate();
    return c;
}

OracleConfig oracle_config(const Options& o) {
    OracleConfig c;
    c.rng_seed = o.oracle_seed;
    c.center_noise = o.oracle_center_noise;
    c.size_noise = o.oracle_size_noise;
    c.outlier_rate = o.oracle_outlier_rate;
    c.parse_failure_rate = o.oracle_parse_failure_rate;
    c.refine_failure_rate = o.oracle_refine_failure_rate;
    c.confidence.peak = o.oracle_confidence_peak;
    c.confidence.floor = o.oracle_confidence_floor;
    c.confidence.scale_px = o.oracle_confidence_scale;
    c.emit_frame = parse_frame_hint(o.oracle_frame);
    if (c.emit_frame == FrameHint::auto_detect) throw Error(errc::kConfig, "oracle frame must be pixel or normalized");
    c.emit_logprobs = !o.oracle_no_logprobs;
    if (!o.oracle_target.empty()) {
        if (o.oracle_target.size() != 4) throw Error(errc::kConfig, "--oracle-target needs x1,y1,x2,y2");
        c.hidden_target = PixelBox::from_corners(o.oracle_target[0], o.oracle_target[1], o.oracle_target[2],
                                                 o.oracle_target[3]);
    }
    return c;
}

OpenAIConfig openai_config(const Options& o) {
    OpenAIConfig c;
    c.endpoint = o.endpoint;
    c.model = o.model;
    if (const char* key = std::getenv(o.api_key_env.c_str())) c.api_key = key;
    c.timeout_s = o.timeout;
    c.retry_budget = o.retries;
    c.max_concurrency = o.concurrency;
    c.split_n = o.split_n;
    c.max_tokens = o.max_tokens;
    c.validate();
    return c;
}

json backend_snapshot(const Options& o) {
    if (o.backend == "openai") {
        const auto c = openai_config(o);
        return {{"kind", "openai"},
                {"endpoint", c.endpoint},
                {"model", c.model},
                {"api_key_env", o.api_key_env},
                {"api_key_set", !c.api_key.empty()},
                {"timeout_s", c.timeout_s},
                {"retry_budget", c.retry_budget},
                {"max_concurrency", c.max_concurrency},
                {"split_n", c.split_n},
                {"max_tokens", c.max_tokens}};
    }
    json j = to_json(oracle_config(o));
    if (o.oracle_target.empty()) j.erase("hidden_target");
    j["kind"] = "oracle";
    return j;
}

void check_backend_name(const Options& o) {
    if (o.backend != "oracle" && o.backend != "openai")
        throw Error(errc::kConfig, "unknown backend '" + o.backend + "' (oracle or openai)");
}

// Oracle targets come from the dataset; a live backend is shared.
BackendFactory backend_factory(const Options& o) {
    if (o.backend == "openai") return shared_backend(std::make_shared<OpenAIBackend>(openai_config(o)));
    OracleConfig base = oracle_config(o);
    if (!base.hidden_target.valid() || base.hidden_target.area() == 0) base.hidden_target = {0, 0, 1, 1};
    return oracle_factory(base);
}

std::optional<PixelBox> parse_box(const std::vector<double>& v, const char* flag) {
    if (v.empty()) return std::nullopt;
    if (v.size() != 4) throw Error(errc::kConfig, std::string(flag) + " needs x1,y1,x2,y2");
    return PixelBox::from_corners(v[0], v[1], v[2], v[3]);
}

void progress(const Options& o, const std::string& line) {
    if (!o.quiet) std::cerr << line << '\n';
}

std::string pct(double v) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(2);
    s << 100.0 * v << '%';
    return s.str();
}

int exit_for_report(const EvalReport& r) {
    if (r.total == 0) return kOk;
    for (const auto& row : r.rows)
        if (!(row.result.branch == Branch::failure && row.result.error && unreachable_code(row.result.error->code)))
            return kOk;
    return kUnreachable;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(errc::kConfig, "cannot write " + path.string());
    out << text;
}

// ---------------------------------------------------------------- commands

struct GroundArgs {
    std::string image;
    std::string instruction;
    std::string annotate;
    std::vector<double> gt;
    bool timings = false;
};

int cmd_ground(const Options& o, const GroundArgs& a) {
    const PipelineConfig cfg = pipeline_config(o);
    check_backend_name(o);
    const auto gt = parse_box(a.gt, "--gt");
    Screenshot img;
    try {
        img = load_image(a.image);
    } catch (const Error& e) {
        return fail(e.code(), e.what(), kInstanceFailure);
    }
    const ImageDims dims = img.dims();

    std::shared_ptr<Backend> backend;
    if (o.backend == "openai") {
        backend = std::make_shared<OpenAIBackend>(openai_config(o));
    } else {
        OracleConfig oc = oracle_config(o);
        if (o.oracle_target.empty())
            oc.hidden_target = gt ? *gt : PixelBox::centered({dims.width / 2.0, dims.height / 2.0}, dims.width / 20.0,
                                                             dims.height / 20.0);
        backend = std::make_shared<OracleBackend>(oc);
    }
    json snapshot = config_snapshot(cfg, backend_snapshot(o));
    if (o.backend == "oracle" && o.oracle_target.empty())
        snapshot["backend"]["hidden_target"] = box_json(std::static_pointer_cast<OracleBackend>(backend)->config().hidden_target);

    const GroundingResult r = ground(img, a.instruction, cfg, *backend);
    json out = {{"config", snapshot}, {"image", a.image}, {"instruction", a.instruction}, {"result", to_json(r, a.timings)}};
    if (r.point) out["point_px"] = json::array({r.point->x * dims.width, r.point->y * dims.height});
    if (gt) {
        out["gt"] = box_json(*gt);
        out["correct"] = r.point && score(*r.point, *gt, dims);
    }
    if (!a.annotate.empty()) {
        std::vector<Layer> layers;
        for (const auto& c : r.candidates) layers.push_back({c.box, LayerKind::candidate});
        if (r.crop_window) layers.push_back({*r.crop_window, LayerKind::crop_region});
        if (gt) layers.push_back({*gt, LayerKind::ground_truth});
        if (r.point) {
            const PixelPoint p = to_pixel_point(*r.point, dims);
            layers.push_back({{p.x, p.y, p.x, p.y}, LayerKind::prediction});
        }
        save_png(annotate(img, layers), a.annotate);
        out["annotation"] = a.annotate;
    }
    emit(out);
    if (r.branch != Branch::failure) return kOk;
    if (r.error && unreachable_code(r.error->code)) return kUnreachable;
    return kInstanceFailure;
}

struct EvalArgs {
    std::string dataset;
    std::string out;
    std::vector<std::string> tau_grid;
};

int cmd_eval(const Options& o, const EvalArgs& a) {
    PipelineConfig cfg = pipeline_config(o);
    check_backend_name(o);
    const auto dataset = load_dataset(a.dataset);
    const auto factory = backend_factory(o);
    EvalOptions opt;
    opt.concurrency = o.concurrency;
    opt.backend_snapshot = backend_snapshot(o);
    opt.images = std::make_shared<ImageCache>();
    if (!a.out.empty()) fs::create_directories(a.out);
    progress(o, "eval: " + std::to_string(dataset.size()) + " instances from " + a.dataset);

    if (a.tau_grid.empty()) {
        const auto rep = run_eval(dataset, cfg, factory, opt);
        progress(o, "accuracy " + pct(rep.accuracy) + ", CROP% " + pct(rep.crop_percent()));
        const json summary = summary_json(rep);
        if (!a.out.empty()) {
            write_text(fs::path(a.out) / "results.jsonl", results_jsonl(rep));
            write_text(fs::path(a.out) / "summary.json", summary.dump(2) + "\n");
        }
        emit(summary);
        return exit_for_report(rep);
    }

    // samples are shared across thresholds, so rows differ only in routing
    GridAxis axis{"tau", a.tau_grid};
    for (const auto& v : axis.values) apply_setting(cfg, "tau", v);
    const auto cells = sweep(dataset, pipeline_config(o), {axis}, factory, opt);
    json rows = json::array();
    int code = kOk;
    for (const auto& cell : cells) {
        const auto& rep = cell.report;
        progress(o, "tau " + cell.params[0].second + ": accuracy " + pct(rep.accuracy) + ", CROP% " +
                        pct(rep.crop_percent()));
        json s = summary_json(rep);
        s["tau"] = cell.params[0].second;
        if (!a.out.empty()) write_text(fs::path(a.out) / ("results_tau_" + cell.params[0].second + ".jsonl"), results_jsonl(rep));
        rows.push_back(std::move(s));
        code = std::max(code, exit_for_report(rep));
    }
    const json doc = {{"tau_grid", rows}};
    if (!a.out.empty()) write_text(fs::path(a.out) / "summary.json", doc.dump(2) + "\n");
    emit(doc);
    return code;
}

struct SweepArgs {
    std::string dataset;
    std::vector<std::string> grid;
    std::string csv;
    std::string out;
};

int cmd_sweep(const Options& o, const SweepArgs& a) {
    const PipelineConfig cfg = pipeline_config(o);
    check_backend_name(o);
    if (a.grid.empty()) return fail(errc::kConfig, "sweep needs at least one --grid key=v1,v2,...", kUsage);
    std::vector<GridAxis> grid;
    std::size_t cells_expected = 1;
    for (const auto& spec : a.grid) {
        grid.push_back(parse_grid_axis(spec));
        cells_expected *= grid.back().values.size();
    }
    const auto dataset = load_dataset(a.dataset);
    EvalOptions opt;
    opt.concurrency = o.concurrency;
    opt.backend_snapshot = backend_snapshot(o);
    progress(o, "sweep: " + std::to_string(cells_expected) + " cells x " + std::to_string(dataset.size()) +
                    " instances");
    const auto cells = sweep(dataset, cfg, grid, backend_factory(o), opt);
    int code = kOk;
    for (const auto& c : cells) code = std::max(code, exit_for_report(c.report));
    const json doc = {{"grid", a.grid}, {"cells", sweep_json(cells)}};
    if (!a.csv.empty()) write_text(a.csv, sweep_csv(cells));
    if (!a.out.empty()) {
        fs::create_directories(a.out);
        write_text(fs::path(a.out) / "sweep.json", doc.dump(2) + "\n");
        write_text(fs::path(a.out) / "sweep.csv", sweep_csv(cells));
    }
    emit(doc);
    return code;
}

struct SynthArgs {
    std::string kind;
    std::string out;
    int count = 200;
    std::uint64_t seed = 7;
};

int cmd_synth(const SynthArgs& a) {
    std::string path;
    if (a.kind == "smoke") {
        path = write_smoke_dataset(a.out);
    } else {
        MixedSuiteSpec spec;
        spec.count = a.count;
        spec.seed = a.seed;
        path = write_mixed_suite(a.out, spec);
    }
    emit({{"dataset", path}, {"instances", load_dataset(path).size()}});
    return kOk;
}

// Flags beat environment variables, which beat the config file. CLI11 reads
// the config file before the environment, so environment values are passed
// as flags instead.
std::vector<std::string> with_env(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    const std::pair<const char*, const char*> vars[] = {
        {"UIZOOM_BACKEND", "--backend"}, {"UIZOOM_ENDPOINT", "--endpoint"}, {"UIZOOM_MODEL", "--model"}};
    for (const auto& [var, flag] : vars) {
        const char* value = std::getenv(var);
        if (!value) continue;
        const std::string f = flag;
        bool given = false;
        for (int i = 1; i < argc; ++i) {
            const std::string s = argv[i];
            given = given || s == f || s.rfind(f + "=", 0) == 0;
        }
        if (!given) args.insert(args.begin() + 1, f + "=" + value);
    }
    return args;
}

}  // namespace

int main(int argc, char** argv) {
    Options o;
    CLI::App app{"Uncertainty-gated zoom-in GUI grounding"};
    app.name("uizoom");
    app.require_subcommand(1);
    app.set_config("--config", "", "Config file (TOML keys named after long flags)");

    app.add_option("--n", o.n, "Candidates sampled in the global pass")->capture_default_str()->group("Pipeline");
    app.add_option("--temperature", o.temperature, "Sampling temperature")->capture_default_str()->group("Pipeline");
    app.add_option("--tau", o.tau, "Gate threshold; inf and -inf allowed")->capture_default_str()->group("Pipeline");
    app.add_option("--gamma", o.gamma, "Crop radius in standard deviations")->capture_default_str()->group("Pipeline");
    app.add_option("--min-crop", o.min_crop, "Minimum crop side in image pixels")->capture_default_str()->group("Pipeline");
    app.add_option("--keep-fraction", o.keep_fraction, "Share of candidates kept by the outlier filter")
        ->capture_default_str()
        ->group("Pipeline");
    app.add_option("--strategy", o.strategy, "Boundary handling: shift, clip, shrink")->capture_default_str()->group("Pipeline");
    app.add_option("--square", o.square, "Square crop windows")->capture_default_str()->group("Pipeline");
    app.add_option("--variance-mode", o.variance_mode, "total, inter_only, intra_only")->capture_default_str()->group("Pipeline");
    app.add_option("--gating-mode", o.gating_mode, "both, spatial_only, conf_only")->capture_default_str()->group("Pipeline");
    app.add_option("--fixed-ratio", o.fixed_ratio, "Fixed crop side as a share of the longer image side, or none")
        ->capture_default_str()
        ->group("Pipeline");
    app.add_option("--resize", o.resize, "none, max_pixels:P or max_side:L")->capture_default_str()->group("Pipeline");
    app.add_option("--frame", o.frame, "Coordinate frame of model answers: pixel, normalized, auto")
        ->capture_default_str()
        ->group("Pipeline");
    app.add_option("--prompt", o.prompt, "Prompt template containing {instruction}")->group("Pipeline");
    app.add_option("--vote-iou", o.vote_iou, "IoU above which candidates support each other")->capture_default_str()->group("Pipeline");
    app.add_option("--seed", o.seed, "Sampling seed forwarded to the backend")->group("Pipeline");
    app.add_flag("--no-logprobs", o.no_logprobs, "Do not request token logprobs")->group("Pipeline");
    app.add_option("--concurrency", o.concurrency, "Instances in flight and HTTP requests at once")
        ->capture_default_str()
        ->check(CLI::Range(1, 1024));
    app.add_flag("--quiet,-q", o.quiet, "No progress on stderr");

    app.add_option("--backend", o.backend, "oracle or openai")->capture_default_str()->group("Backend");
    app.add_option("--endpoint", o.endpoint, "Chat-completions base URL [UIZOOM_ENDPOINT]")->capture_default_str()->group("Backend");
    app.add_option("--model", o.model, "Served model name [UIZOOM_MODEL]")->group("Backend");
    app.add_option("--api-key-env", o.api_key_env, "Environment variable holding the API key")
        ->capture_default_str()
        ->group("Backend");
    app.add_option("--timeout", o.timeout, "Request timeout in seconds")->capture_default_str()->group("Backend");
    app.add_option("--retries", o.retries, "Retry budget per request")->capture_default_str()->group("Backend");
    app.add_flag("--split-n", o.split_n, "Send n single-completion requests instead of one n-way request")->group("Backend");
    app.add_option("--max-tokens", o.max_tokens, "Completion token limit")->capture_default_str()->group("Backend");

    app.add_option("--oracle-seed", o.oracle_seed, "Oracle RNG seed")->capture_default_str()->group("Oracle");
    app.add_option("--oracle-target", o.oracle_target, "Hidden target x1,y1,x2,y2 (ground only)")
        ->delimiter(',')
        ->expected(4)
        ->group("Oracle");
    app.add_option("--oracle-center-noise", o.oracle_center_noise, "Center std-dev in pixels")->capture_default_str()->group("Oracle");
    app.add_option("--oracle-size-noise", o.oracle_size_noise, "Fractional size std-dev")->capture_default_str()->group("Oracle");
    app.add_option("--oracle-outlier-rate", o.oracle_outlier_rate)->capture_default_str()->group("Oracle");
    app.add_option("--oracle-parse-failure-rate", o.oracle_parse_failure_rate)->capture_default_str()->group("Oracle");
    app.add_option("--oracle-refine-failure-rate", o.oracle_refine_failure_rate)->capture_default_str()->group("Oracle");
    app.add_option("--oracle-confidence-peak", o.oracle_confidence_peak)->capture_default_str()->group("Oracle");
    app.add_option("--oracle-confidence-floor", o.oracle_confidence_floor)->capture_default_str()->group("Oracle");
    app.add_option("--oracle-confidence-scale", o.oracle_confidence_scale)->capture_default_str()->group("Oracle");
    app.add_option("--oracle-frame", o.oracle_frame, "pixel or normalized")->capture_default_str()->group("Oracle");
    app.add_flag("--oracle-no-logprobs", o.oracle_no_logprobs)->group("Oracle");

    GroundArgs ga;
    auto* ground_cmd = app.add_subcommand("ground", "Ground one instruction on one screenshot");
    ground_cmd->fallthrough();
    ground_cmd->add_option("image", ga.image, "Screenshot (PNG or JPEG)")->required();
    ground_cmd->add_option("instruction", ga.instruction, "Instruction text")->required();
    ground_cmd->add_option("--annotate", ga.annotate, "Write an overlay PNG here");
    ground_cmd->add_flag("--timings", ga.timings, "Include per-stage wall-clock timings");
    ground_cmd->add_option("--gt", ga.gt, "Ground-truth box x1,y1,x2,y2 for scoring and overlay")->delimiter(',')->expected(4);

    EvalArgs ea;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a JSONL dataset");
    eval_cmd->fallthrough();
    eval_cmd->add_option("dataset", ea.dataset, "Dataset JSONL")->required();
    eval_cmd->add_option("--out", ea.out, "Directory for results.jsonl and summary.json");
    eval_cmd->add_option("--tau-grid", ea.tau_grid, "Thresholds, e.g. 0.6,0.8,0.9,0.95,1.0,1.05")->delimiter(',');

    SweepArgs sa;
    auto* sweep_cmd = app.add_subcommand("sweep", "Evaluate every point of a configuration grid");
    sweep_cmd->fallthrough();
    sweep_cmd->add_option("dataset", sa.dataset, "Dataset JSONL")->required();
    sweep_cmd->add_option("--grid", sa.grid, "Axes key=v1,v2,... (tau, gamma, n, temperature, strategy, keep_fraction, "
                                             "removal_ratio, square, variance_mode, gating_mode, fixed_ratio, min_crop)");
    sweep_cmd->add_option("--csv", sa.csv, "Write the table as CSV");
    sweep_cmd->add_option("--out", sa.out, "Directory for sweep.json and sweep.csv");

    SynthArgs ya;
    auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic oracle dataset");
    synth_cmd->add_option("kind", ya.kind, "smoke or mixed")->required()->check(CLI::IsMember({"smoke", "mixed"}));
    synth_cmd->add_option("--out", ya.out, "Output directory")->required();
    synth_cmd->add_option("--count", ya.count, "Instances (mixed)")->capture_default_str()->check(CLI::PositiveNumber);
    synth_cmd->add_option("--seed", ya.seed, "Layout seed (mixed)")->capture_default_str();

    auto args = with_env(argc, argv);
    std::reverse(args.begin(), args.end());
    args.pop_back();  // program name
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what(), kUsage);
    }

    try {
        if (*ground_cmd) return cmd_ground(o, ga);
        if (*eval_cmd) return cmd_eval(o, ea);
        if (*sweep_cmd) return cmd_sweep(o, sa);
        if (*synth_cmd) return cmd_synth(ya);
    } catch (const Error& e) {
        const std::string code = e.code();
        if (code == errc::kConfig) return fail(code, e.what(), kUsage);
        if (unreachable_code(code)) return fail(code, e.what(), kUnreachable);
        if (code == errc::kDatasetUnreadable || code == errc::kDatasetFormat) return fail(code, e.what(), kUsage);
        return fail(code, e.what(), kInstanceFailure);
    } catch (const std::exception& e) {
        return fail("internal", e.what(), kInstanceFailure);
    }
    return kUsage;
}
