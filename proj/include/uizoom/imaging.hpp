#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "uizoom/error.hpp"
#include "uizoom/geometry.hpp"

namespace uizoom {

/// Owned 8-bit, 3-channel raster (RGB order). Operations never share pixel
/// storage between their input and output.
struct Screenshot {
    cv::Mat pixels;  // CV_8UC3
    std::string source_path;

    ImageDims dims() const { return {pixels.cols, pixels.rows}; }

    static Screenshot blank(ImageDims d, cv::Scalar rgb = cv::Scalar(255, 255, 255)) {
        return {cv::Mat(d.height, d.width, CV_8UC3, rgb), {}};
    }
};

inline bool same_pixels(const Screenshot& a, const Screenshot& b) {
    if (a.pixels.size() != b.pixels.size() || a.pixels.type() != b.pixels.type()) return false;
    return cv::countNonZero(a.pixels.reshape(1) != b.pixels.reshape(1)) == 0;
}

struct ResizePolicy {
    enum class Mode { none, max_pixels, max_side };
    Mode mode = Mode::max_pixels;
    // Pixel budget of the Qwen2.5-VL image processor; override per server.
    long long max_pixels = 12845056;
    int max_side = 0;

    static ResizePolicy none() { return {Mode::none, 0, 0}; }
    static ResizePolicy pixels(long long p) { return {Mode::max_pixels, p, 0}; }
    static ResizePolicy side(int l) { return {Mode::max_side, 0, l}; }

    void validate() const {
        if (mode == Mode::max_pixels && max_pixels < 1) throw Error(errc::kConfig, "max_pixels must be positive");
        if (mode == Mode::max_side && max_side < 1) throw Error(errc::kConfig, "max_side must be positive");
    }

    /// "none", "max_pixels:<P>" or "max_side:<L>".
    static ResizePolicy parse(const std::string& s) {
        if (s == "none") return none();
        const auto colon = s.find(':');
        if (colon != std::string::npos) {
            const std::string kind = s.substr(0, colon);
            try {
                const long long v = std::stoll(s.substr(colon + 1));
                ResizePolicy p = kind == "max_pixels" ? pixels(v) : kind == "max_side" ? side(static_cast<int>(v)) : none();
                if (kind == "max_pixels" || kind == "max_side") {
                    p.validate();
                    return p;
                }
            } catch (const std::logic_error&) {
            }
        }
        throw Error(errc::kConfig, "bad resize policy '" + s + "'");
    }

    std::string str() const {
        switch (mode) {
            case Mode::max_pixels: return "max_pixels:" + std::to_string(max_pixels);
            case Mode::max_side: return "max_side:" + std::to_string(max_side);
            case Mode::none: break;
        }
        return "none";
    }
};

struct Resized {
    Screenshot image;
    double sx = 1.0;  // new width / old width
    double sy = 1.0;
};

inline Screenshot decode_image(const std::vector<std::uint8_t>& bytes, std::string source = {}) {
    cv::Mat bgr = cv::imdecode(bytes, cv::IMREAD_COLOR);
    if (bgr.empty()) throw Error(errc::kImageDecode, "cannot decode image " + source);
    Screenshot s;
    cv::cvtColor(bgr, s.pixels, cv::COLOR_BGR2RGB);
    s.source_path = std::move(source);
    return s;
}

inline Screenshot load_image(const std::string& path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec))
        throw Error(errc::kImageNotFound, "image not found: " + path);
    cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
    if (bgr.empty()) throw Error(errc::kImageDecode, "cannot decode image " + path);
    Screenshot s;
    cv::cvtColor(bgr, s.pixels, cv::COLOR_BGR2RGB);
    s.source_path = path;
    return s;
}

inline std::vector<std::uint8_t> encode_png(const Screenshot& img) {
    cv::Mat bgr;
    cv::cvtColor(img.pixels, bgr, cv::COLOR_RGB2BGR);
    std::vector<std::uint8_t> out;
    if (!cv::imencode(".png", bgr, out)) throw Error(errc::kImageDecode, "PNG encoding failed");
    return out;
}

inline void save_png(const Screenshot& img, const std::string& path) {
    cv::Mat bgr;
    cv::cvtColor(img.pixels, bgr, cv::COLOR_RGB2BGR);
    if (!cv::imwrite(path, bgr)) throw Error(errc::kImageDecode, "cannot write " + path);
}

/// Integer raster window actually sliced for `window`: corners rounded half
/// away from zero, then intersected with the image.
inline PixelBox raster_window(const PixelBox& window, ImageDims dims) {
    const double x1 = std::clamp<long>(round_half_away(window.x1), 0, dims.width);
    const double y1 = std::clamp<long>(round_half_away(window.y1), 0, dims.height);
    const double x2 = std::clamp<long>(round_half_away(window.x2), 0, dims.width);
    const double y2 = std::clamp<long>(round_half_away(window.y2), 0, dims.height);
    return {x1, y1, std::max(x1, x2), std::max(y1, y2)};
}

inline Screenshot crop(const Screenshot& img, const PixelBox& window) {
    const PixelBox r = raster_window(window, img.dims());
    if (r.width() < 1.0 || r.height() < 1.0) throw Error(errc::kEmptyWindow, "crop window does not overlap the image");
    const cv::Rect roi(static_cast<int>(r.x1), static_cast<int>(r.y1), static_cast<int>(r.width()),
                       static_cast<int>(r.height()));
    return {img.pixels(roi).clone(), img.source_path};
}

/// Uniform bilinear downscale under `policy`. Never upscales. The returned
/// factors are the realized size ratios per axis.
inline Resized resize(const Screenshot& img, const ResizePolicy& policy) {
    const ImageDims d = img.dims();
    double f = 1.0;
    int nw = d.width, nh = d.height;
    if (policy.mode == ResizePolicy::Mode::max_side) {
        const int longer = std::max(d.width, d.height);
        if (longer > policy.max_side) {
            f = static_cast<double>(policy.max_side) / longer;
            nw = std::max(1, static_cast<int>(std::lround(d.width * f)));
            nh = std::max(1, static_cast<int>(std::lround(d.height * f)));
        }
    } else if (policy.mode == ResizePolicy::Mode::max_pixels) {
        const long long area = static_cast<long long>(d.width) * d.height;
        if (area > policy.max_pixels) {
            f = std::sqrt(static_cast<double>(policy.max_pixels) / static_cast<double>(area));
            nw = std::max(1, static_cast<int>(std::floor(d.width * f)));
            nh = std::max(1, static_cast<int>(std::floor(d.height * f)));
        }
    }
    if (nw == d.width && nh == d.height) return {{img.pixels.clone(), img.source_path}, 1.0, 1.0};
    Resized out;
    cv::resize(img.pixels, out.image.pixels, cv::Size(nw, nh), 0, 0, cv::INTER_LINEAR);
    out.image.source_path = img.source_path;
    out.sx = static_cast<double>(nw) / d.width;
    out.sy = static_cast<double>(nh) / d.height;
    return out;
}

enum class LayerKind { candidate, crop_region, ground_truth, prediction };

struct Layer {
    PixelBox box;  // a prediction layer is drawn at the box center
    LayerKind kind = LayerKind::candidate;
};

inline cv::Scalar layer_color(LayerKind k) {
    switch (k) {
        case LayerKind::candidate: return {40, 90, 255};     // blue
        case LayerKind::crop_region: return {230, 30, 30};   // red
        case LayerKind::ground_truth: return {20, 200, 60};  // green
        case LayerKind::prediction: return {255, 215, 0};    // yellow
    }
    return {0, 0, 0};
}

/// Overlay of candidates, crop window, ground truth and final point.
inline Screenshot annotate(const Screenshot& img, const std::vector<Layer>& layers) {
    Screenshot out{img.pixels.clone(), img.source_path};
    const ImageDims d = img.dims();
    const int thickness = std::max(1, std::min(d.width, d.height) / 540);
    auto px = [](double v) { return static_cast<int>(round_half_away(v)); };
    for (const auto& layer : layers) {
        const cv::Scalar color = layer_color(layer.kind);
        if (layer.kind == LayerKind::prediction) {
            const PixelPoint c = center(layer.box);
            const cv::Point p(px(c.x), px(c.y));
            const int r = 4 * thickness + 2;
            cv::circle(out.pixels, p, r, color, cv::FILLED, cv::LINE_8);
            cv::circle(out.pixels, p, r, cv::Scalar(0, 0, 0), thickness, cv::LINE_8);
            continue;
        }
        cv::rectangle(out.pixels, cv::Point(px(layer.box.x1), px(layer.box.y1)),
                      cv::Point(px(layer.box.x2), px(layer.box.y2)), color, thickness, cv::LINE_8);
    }
    return out;
}

}  // namespace uizoom
