#pragma once

// Synthetic datasets for the simulated backend: a small bundled smoke set
// with rendered screens, and a larger mixed-noise suite on a blank canvas.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <opencv2/imgproc.hpp>

#include "uizoom/eval.hpp"
#include "uizoom/imaging.hpp"

namespace uizoom {

namespace detail {

struct Widget {
    PixelBox box;
    std::string label;
    std::string kind;  // "text" or "icon"
};

inline std::vector<Widget> render_screen(Screenshot& shot, int variant) {
    static const char* kLabels[] = {"Save", "Open", "Export", "Undo", "Redo", "Search", "Settings", "Help",
                                    "Share", "Print", "Zoom", "Layers", "Brush", "Crop", "Render", "Close"};
    const ImageDims d = shot.dims();
    cv::Mat& m = shot.pixels;
    const cv::Scalar bg(235 - 10 * variant, 238 - 6 * variant, 242);
    m.setTo(bg);
    cv::rectangle(m, cv::Rect(0, 0, d.width, 56), cv::Scalar(52, 58, 70), cv::FILLED);
    cv::rectangle(m, cv::Rect(0, 56, 260, d.height - 56), cv::Scalar(210, 214, 222), cv::FILLED);
    cv::rectangle(m, cv::Rect(300, 120, d.width - 360, d.height - 200), cv::Scalar(255, 255, 255), cv::FILLED);

    std::vector<Widget> widgets;
    for (int i = 0; i < 5; ++i) {
        const int idx = (variant * 5 + i) % 16;
        const bool icon = i % 2 == 1;
        const double x = icon ? 24 + 52 * i + 280 * (variant % 2) : 320 + 260 * i;
        const double y = icon ? 12 : 160 + 140 * ((variant + i) % 5);
        const double w = icon ? 32 : 180, h = icon ? 32 : 48;
        const PixelBox b{x, y, x + w, y + h};
        const cv::Rect r(static_cast<int>(x), static_cast<int>(y), static_cast<int>(w), static_cast<int>(h));
        cv::rectangle(m, r, icon ? cv::Scalar(90, 170, 250) : cv::Scalar(40, 110, 220), cv::FILLED);
        if (!icon)
            cv::putText(m, kLabels[idx], cv::Point(r.x + 16, r.y + 33), cv::FONT_HERSHEY_SIMPLEX, 0.9,
                        cv::Scalar(255, 255, 255), 2, cv::LINE_8);
        widgets.push_back({b, kLabels[idx], icon ? "icon" : "text"});
    }
    return widgets;
}

inline void write_jsonl(const std::string& path, const std::vector<json>& lines) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(errc::kDatasetUnreadable, "cannot write " + path);
    for (const auto& l : lines) out << l.dump() << '\n';
}

}  // namespace detail

/// Writes the 20-instance smoke dataset (4 rendered 1920x1080 screens) to
/// `dir`/smoke.jsonl. Even instances are noiseless and confident, odd ones
/// noisy and unconfident, so both gate branches run; all are exact.
inline std::string write_smoke_dataset(const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::vector<json> lines;
    int id = 0;
    for (int screen = 0; screen < 4; ++screen) {
        Screenshot shot = Screenshot::blank({1920, 1080});
        const auto widgets = detail::render_screen(shot, screen);
        const std::string name = "screen_" + std::to_string(screen) + ".png";
        save_png(shot, (std::filesystem::path(dir) / name).string());
        for (const auto& w : widgets) {
            json o = id % 2 == 0 ? json{{"center_noise", 0.0}, {"size_noise", 0.0}}
                                 : json{{"center_noise", 40.0},
                                        {"size_noise", 0.1},
                                        {"confidence", {{"peak", 0.35}, {"floor", 0.2}}}};
            lines.push_back({{"id", "smoke-" + std::to_string(id)},
                             {"image", name},
                             {"instruction", w.kind == "icon" ? "click the " + w.label + " icon"
                                                              : "click the " + w.label + " button"},
                             {"bbox", box_json(w.box)},
                             {"group", screen % 2 ? "web" : "desktop"},
                             {"ui_type", w.kind},
                             {"oracle", o}});
            ++id;
        }
    }
    const std::string path = (std::filesystem::path(dir) / "smoke.jsonl").string();
    detail::write_jsonl(path, lines);
    return path;
}

struct MixedSuiteSpec {
    int count = 200;
    std::uint64_t seed = 7;
    ImageDims canvas{1920, 1080};
    std::vector<double> noise_levels{3.0, 10.0, 25.0, 60.0, 120.0};
    double size_noise = 0.15;
    double outlier_rate = 0.10;
    double parse_failure_rate = 0.05;
    double refine_failure_rate = 0.05;
};

/// Mixed-noise suite: target boxes w ~ U{16..80}, h ~ U{12..40} placed
/// uniformly; instance i uses noise_levels[i % size]. All instances share
/// one blank canvas image written to `dir`.
inline std::string write_mixed_suite(const std::string& dir, const MixedSuiteSpec& spec = {}) {
    std::filesystem::create_directories(dir);
    const std::string canvas = "canvas.png";
    save_png(Screenshot::blank(spec.canvas), (std::filesystem::path(dir) / canvas).string());
    std::mt19937_64 rng(spec.seed);
    std::uniform_int_distribution<int> wdist(16, 80), hdist(12, 40);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<json> lines;
    for (int i = 0; i < spec.count; ++i) {
        const double w = wdist(rng), h = hdist(rng);
        const double x = unit(rng) * (spec.canvas.width - w), y = unit(rng) * (spec.canvas.height - h);
        const double noise = spec.noise_levels[static_cast<std::size_t>(i) % spec.noise_levels.size()];
        lines.push_back({{"id", "mixed-" + std::to_string(i)},
                         {"image", canvas},
                         {"instruction", "click target " + std::to_string(i)},
                         {"bbox", json::array({x, y, x + w, y + h})},
                         {"group", "noise_" + std::to_string(static_cast<int>(noise))},
                         {"ui_type", w * h < 900 ? "icon" : "text"},
                         {"oracle",
                          {{"center_noise", noise},
                           {"size_noise", spec.size_noise},
                           {"outlier_rate", spec.outlier_rate},
                           {"parse_failure_rate", spec.parse_failure_rate},
                           {"refine_failure_rate", spec.refine_failure_rate}}}});
    }
    const std::string path = (std::filesystem::path(dir) / "mixed.jsonl").string();
    detail::write_jsonl(path, lines);
    return path;
}

}  // namespace uizoom
