#pragma once

#include <algorithm>
#include <cmath>
#include <compare>

namespace uizoom {

struct ImageDims {
    int width = 1;
    int height = 1;

    bool valid() const { return width >= 1 && height >= 1; }
    friend bool operator==(const ImageDims&, const ImageDims&) = default;
};

struct PixelPoint {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

/// Click location as fractions of image width and height, each in [0,1].
struct NormPoint {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const NormPoint&, const NormPoint&) = default;
};

/// Axis-aligned rectangle in a pixel frame. Coordinates are continuous;
/// zero-extent boxes are legal and stand for point predictions.
struct PixelBox {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }
    bool valid() const { return x1 <= x2 && y1 <= y2; }

    bool contains(PixelPoint p) const {
        return p.x >= x1 && p.x <= x2 && p.y >= y1 && p.y <= y2;
    }

    /// Corner-ordered box from two arbitrary corners.
    static PixelBox from_corners(double ax, double ay, double bx, double by) {
        return {std::min(ax, bx), std::min(ay, by), std::max(ax, bx), std::max(ay, by)};
    }

    static PixelBox centered(PixelPoint c, double w, double h) {
        return {c.x - w / 2.0, c.y - h / 2.0, c.x + w / 2.0, c.y + h / 2.0};
    }

    static PixelBox full(ImageDims d) {
        return {0.0, 0.0, static_cast<double>(d.width), static_cast<double>(d.height)};
    }

    friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

inline PixelPoint center(const PixelBox& b) {
    return {(b.x1 + b.x2) / 2.0, (b.y1 + b.y2) / 2.0};
}

inline double intersection_area(const PixelBox& a, const PixelBox& b) {
    const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

/// Intersection over union. A zero union (two zero-extent boxes, even when
/// coincident) yields 0, so point predictions never count as agreeing.
inline double iou(const PixelBox& a, const PixelBox& b) {
    const double inter = intersection_area(a, b);
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

inline PixelBox clamp_to(const PixelBox& b, ImageDims d) {
    const double w = d.width, h = d.height;
    return {std::clamp(b.x1, 0.0, w), std::clamp(b.y1, 0.0, h),
            std::clamp(b.x2, 0.0, w), std::clamp(b.y2, 0.0, h)};
}

inline PixelBox scaled(const PixelBox& b, double sx, double sy) {
    return {b.x1 * sx, b.y1 * sy, b.x2 * sx, b.y2 * sy};
}

inline PixelBox translated(const PixelBox& b, double dx, double dy) {
    return {b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy};
}

inline NormPoint to_norm_point(PixelPoint p, ImageDims d) {
    return {std::clamp(p.x / d.width, 0.0, 1.0), std::clamp(p.y / d.height, 0.0, 1.0)};
}

inline PixelPoint to_pixel_point(NormPoint p, ImageDims d) {
    return {p.x * d.width, p.y * d.height};
}

/// Rounds half away from zero, the rule used whenever a continuous window
/// becomes a raster slice.
inline long round_half_away(double v) { return std::lround(v); }

}  // namespace uizoom
