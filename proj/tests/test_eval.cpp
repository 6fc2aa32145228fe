#include <filesystem>
#include <fstream>
#include <limits>

#include <gtest/gtest.h>

#include "uizoom/eval.hpp"
#include "uizoom/synthetic.hpp"

namespace uizoom {
namespace {

// Expected accuracy of the default pipeline on the 200-instance mixed suite,
// from tests/oracle/pipeline_accuracy_mc.py (20k trials, se 0.0011).
constexpr double kMixedSuiteExpected = 0.9744;

class EvalTest : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = std::filesystem::temp_directory_path() / ("uizoom_eval_" + std::to_string(::getpid()));
        smoke_ = write_smoke_dataset((dir_ / "smoke").string());
        mixed_ = write_mixed_suite((dir_ / "mixed").string());
    }
    static void TearDownTestSuite() { std::filesystem::remove_all(dir_); }

    static PipelineConfig seeded() {
        PipelineConfig c;
        c.seed = 1;
        return c;
    }
    static OracleConfig base_oracle() {
        OracleConfig c;
        c.hidden_target = {0, 0, 1, 1};
        c.rng_seed = 5;
        return c;
    }

    static inline std::filesystem::path dir_;
    static inline std::string smoke_, mixed_;
};

TEST(Score, InclusiveContainment) {
    const ImageDims d{100, 100};
    const PixelBox gt{10, 10, 20, 20};
    EXPECT_TRUE(score({0.15, 0.15}, gt, d));
    EXPECT_FALSE(score({0, 0}, gt, d));
    EXPECT_TRUE(score({0.2, 0.1}, gt, d));
    EXPECT_FALSE(score({0.2001, 0.15}, gt, d));
}

TEST_F(EvalTest, LoadsDataset) {
    const auto ds = load_dataset(smoke_);
    ASSERT_EQ(ds.size(), 20u);
    EXPECT_EQ(ds[0].id, "smoke-0");
    EXPECT_TRUE(std::filesystem::exists(ds[0].image_path));
    EXPECT_TRUE(ds[0].gt_box.valid());
    EXPECT_FALSE(ds[0].group.empty());
    EXPECT_TRUE(ds[0].ui_type == "text" || ds[0].ui_type == "icon");
}

TEST_F(EvalTest, DatasetErrors) {
    try {
        load_dataset((dir_ / "nope.jsonl").string());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), errc::kDatasetUnreadable);
    }
    const auto bad = (dir_ / "bad.jsonl").string();
    std::ofstream(bad) << "{\"id\": 1, \"image\": \"a.png\", \"instruction\": \"x\", \"bbox\": [1, 2, 3]}\n";
    try {
        load_dataset(bad);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), errc::kDatasetFormat);
        EXPECT_NE(std::string(e.what()).find(":1"), std::string::npos);
    }
}

TEST_F(EvalTest, AllPassExactOracleScoresPerfectly) {
    auto ds = load_dataset(smoke_);
    for (auto& inst : ds) inst.oracle = json{{"center_noise", 0.0}};
    const auto rep = run_eval(ds, seeded(), oracle_factory(base_oracle()));
    EXPECT_EQ(rep.accuracy, 1.0);
    EXPECT_EQ(rep.crop_percent(), 0.0);
    EXPECT_EQ(rep.trigger_rate(Branch::pass), 1.0);
}

TEST_F(EvalTest, SmokeDatasetIsExactAcrossBothBranches) {
    const auto rep = run_eval(load_dataset(smoke_), seeded(), oracle_factory(base_oracle()));
    EXPECT_EQ(rep.accuracy, 1.0);
    EXPECT_GT(rep.routed_pass.total, 0);
    EXPECT_GT(rep.routed_zoom.total, 0);
}

TEST_F(EvalTest, InfiniteTauZoomsEverything) {
    PipelineConfig cfg = seeded();
    cfg.tau = std::numeric_limits<double>::infinity();
    const auto rep = run_eval(load_dataset(smoke_), cfg, oracle_factory(base_oracle()));
    EXPECT_EQ(rep.crop_percent(), 1.0);
    EXPECT_EQ(rep.gated, 20);
}

TEST_F(EvalTest, ReportInvariants) {
    const auto rep = run_eval(load_dataset(mixed_), seeded(), oracle_factory(base_oracle()));
    ASSERT_EQ(rep.total, 200);
    int correct = 0;
    for (const auto& r : rep.rows) correct += r.correct;
    EXPECT_EQ(rep.correct, correct);
    EXPECT_EQ(rep.accuracy, static_cast<double>(correct) / 200);
    double rates = 0;
    for (auto b : {Branch::pass, Branch::crop, Branch::fallback_global, Branch::failure}) rates += rep.trigger_rate(b);
    EXPECT_NEAR(rates, 1.0, 1e-12);
    int by_group = 0, by_kind = 0;
    for (const auto& [k, c] : rep.by_group) by_group += c.total;
    for (const auto& [k, c] : rep.by_ui_type) by_kind += c.total;
    EXPECT_EQ(by_group, 200);
    EXPECT_EQ(by_kind, 200);
    const auto s = summary_json(rep);
    EXPECT_EQ(s["total"], 200);
    EXPECT_TRUE(s["config"]["pipeline"].contains("tau"));
}

TEST_F(EvalTest, MixedSuiteMatchesMonteCarloExpectation) {
    const auto rep = run_eval(load_dataset(mixed_), seeded(), oracle_factory(base_oracle()));
    EXPECT_NEAR(rep.accuracy, kMixedSuiteExpected, 0.03) << "observed " << rep.accuracy;
}

TEST_F(EvalTest, LoadFailuresAreRecorded) {
    auto ds = load_dataset(smoke_);
    ds.resize(3);
    ds[1].image_path = (dir_ / "missing.png").string();
    ds[2].gt_box = {1900, 1000, 2000, 1100};
    const auto rep = run_eval(ds, seeded(), oracle_factory(base_oracle()));
    EXPECT_EQ(rep.total, 3);
    EXPECT_EQ(rep.rows[1].result.branch, Branch::failure);
    EXPECT_EQ(rep.rows[1].result.error->code, errc::kImageNotFound);
    EXPECT_EQ(rep.rows[2].result.error->code, errc::kGtOutOfBounds);
    EXPECT_EQ(rep.by_branch.at("failure").total, 2);
}

TEST_F(EvalTest, ResultsJsonlIsReproducible) {
    const auto ds = load_dataset(smoke_);
    const auto a = results_jsonl(run_eval(ds, seeded(), oracle_factory(base_oracle())));
    EvalOptions opt;
    opt.concurrency = 3;
    const auto b = results_jsonl(run_eval(ds, seeded(), oracle_factory(base_oracle()), opt));
    EXPECT_EQ(a, b);
    EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 21);
    EXPECT_EQ(json::parse(a.substr(0, a.find('\n')))["type"], "config");
}

TEST_F(EvalTest, StrategySweepOnlyTouchesZoomBranch) {
    const auto ds = load_dataset(mixed_);
    const auto cells = sweep(ds, seeded(), {parse_grid_axis("strategy=shift,clip,shrink")}, oracle_factory(base_oracle()));
    ASSERT_EQ(cells.size(), 3u);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& r0 = cells[0].report.rows[i];
        for (const auto& c : cells) {
            const auto& r = c.report.rows[i];
            ASSERT_EQ(candidate_digest(r.result), candidate_digest(r0.result));
            if (r0.result.branch == Branch::pass) {
                ASSERT_EQ(to_json(r.result).dump(), to_json(r0.result).dump());
            }
        }
    }
}

TEST_F(EvalTest, KeepFractionSweepChangesOnlyPlans) {
    const auto ds = load_dataset(mixed_);
    const auto cells =
        sweep(ds, seeded(), {parse_grid_axis("keep_fraction=0.5,0.75,1.0")}, oracle_factory(base_oracle()));
    ASSERT_EQ(cells.size(), 3u);
    int differing = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& a = cells[0].report.rows[i].result;
        for (const auto& c : cells) {
            const auto& b = c.report.rows[i].result;
            ASSERT_EQ(candidate_digest(a), candidate_digest(b));
            ASSERT_EQ(a.gating.has_value(), b.gating.has_value());
            if (a.gating) {
                ASSERT_EQ(a.gating->score, b.gating->score);
            }
            ASSERT_EQ(a.plan.has_value(), b.plan.has_value());
            if (a.plan && b.plan) {
                differing += a.plan->kept_indices != b.plan->kept_indices;
                if (a.plan->kept_indices == b.plan->kept_indices) {
                    ASSERT_EQ(a.plan->window, b.plan->window);
                }
            }
        }
    }
    EXPECT_GT(differing, 0);
}

TEST_F(EvalTest, TauSweepCropPercentIsMonotone) {
    const auto cells = sweep(load_dataset(mixed_), seeded(), {parse_grid_axis("tau=-inf,0.6,0.8,0.9,0.95,1.0,1.05,inf")},
                             oracle_factory(base_oracle()));
    ASSERT_EQ(cells.size(), 8u);
    EXPECT_EQ(cells.front().report.crop_percent(), 0.0);
    EXPECT_EQ(cells.back().report.crop_percent(), 1.0);
    for (std::size_t i = 1; i < cells.size(); ++i)
        EXPECT_GE(cells[i].report.crop_percent(), cells[i - 1].report.crop_percent());
    const auto csv = sweep_csv(cells);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 9);
    EXPECT_EQ(csv.rfind("tau,instances,accuracy,crop_percent", 0), 0u);
}

TEST_F(EvalTest, MultiAxisGridOrder) {
    auto ds = load_dataset(smoke_);
    ds.resize(2);
    const auto cells = sweep(ds, seeded(), {parse_grid_axis("gamma=2,3"), parse_grid_axis("square=true,false")},
                             oracle_factory(base_oracle()));
    ASSERT_EQ(cells.size(), 4u);
    EXPECT_EQ(cells[1].params, (std::vector<std::pair<std::string, std::string>>{{"gamma", "2"}, {"square", "false"}}));
    EXPECT_EQ(sweep_json(cells).size(), 4u);
}

TEST(Sweep, GridValidation) {
    EXPECT_THROW(sweep({}, PipelineConfig{}, {}, nullptr), Error);
    EXPECT_THROW(parse_grid_axis("tau"), Error);
    EXPECT_THROW(parse_grid_axis("tau="), Error);
    EXPECT_THROW(parse_grid_axis("colour=red"), Error);
    EXPECT_THROW(parse_grid_axis("strategy=shift,warp"), Error);
    EXPECT_EQ(parse_grid_axis("removal_ratio=0.25").values.size(), 1u);
    PipelineConfig c;
    apply_setting(c, "removal_ratio", "0.25");
    EXPECT_EQ(c.crop.keep_fraction, 0.75);
    apply_setting(c, "fixed_ratio", "0.3");
    EXPECT_EQ(c.crop.fixed_ratio, 0.3);
    apply_setting(c, "fixed_ratio", "none");
    EXPECT_FALSE(c.crop.fixed_ratio);
}

}  // namespace
}  // namespace uizoom
