#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "triggerlab/image.hpp"
#include "triggerlab/rng.hpp"

namespace triggerlab {
namespace detail {

struct Segment {
    double x0, y0, x1, y1;
};

inline double segment_distance(const Segment& s, double px, double py) {
    const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
    const double len2 = dx * dx + dy * dy;
    double t = 0.0;
    if (len2 > 0.0) {
        t = ((px - s.x0) * dx + (py - s.y0) * dy) / len2;
        t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
    }
    const double ex = px - (s.x0 + t * dx), ey = py - (s.y0 + t * dy);
    return std::sqrt(ex * ex + ey * ey);
}

inline void add_segment(std::vector<Segment>& out, double x0, double y0, double x1, double y1) {
    out.push_back({x0, y0, x1, y1});
}

// Elliptic arc sampled into segments. Angles in degrees; 0 points right and
// 90 points down (screen coordinates).
inline void add_arc(std::vector<Segment>& out, double cx, double cy, double rx, double ry,
                    double a0, double a1, int steps = 20) {
    const double rad = 3.14159265358979323846 / 180.0;
    double px = cx + rx * std::cos(a0 * rad), py = cy + ry * std::sin(a0 * rad);
    for (int i = 1; i <= steps; ++i) {
        const double a = a0 + (a1 - a0) * i / steps;
        const double qx = cx + rx * std::cos(a * rad), qy = cy + ry * std::sin(a * rad);
        add_segment(out, px, py, qx, qy);
        px = qx;
        py = qy;
    }
}

// Stroke skeletons of the ten digits in a unit box (x right, y down).
inline const std::vector<std::vector<Segment>>& digit_glyphs() {
    static const std::vector<std::vector<Segment>> glyphs = [] {
        std::vector<std::vector<Segment>> g(10);
        add_arc(g[0], 0.50, 0.50, 0.26, 0.36, 0, 360, 28);

        add_segment(g[1], 0.55, 0.12, 0.55, 0.88);
        add_segment(g[1], 0.38, 0.28, 0.55, 0.12);
        add_segment(g[1], 0.40, 0.88, 0.70, 0.88);

        add_arc(g[2], 0.50, 0.30, 0.24, 0.20, 185, 355);
        add_segment(g[2], 0.72, 0.33, 0.28, 0.88);
        add_segment(g[2], 0.28, 0.88, 0.74, 0.88);

        add_arc(g[3], 0.48, 0.30, 0.24, 0.20, 200, 450);
        add_arc(g[3], 0.48, 0.66, 0.26, 0.22, 270, 520);

        add_segment(g[4], 0.62, 0.12, 0.22, 0.62);
        add_segment(g[4], 0.22, 0.62, 0.80, 0.62);
        add_segment(g[4], 0.62, 0.12, 0.62, 0.88);

        add_segment(g[5], 0.70, 0.12, 0.30, 0.12);
        add_segment(g[5], 0.30, 0.12, 0.30, 0.48);
        add_arc(g[5], 0.46, 0.66, 0.26, 0.22, 245, 515);

        add_segment(g[6], 0.66, 0.12, 0.46, 0.34);
        add_segment(g[6], 0.46, 0.34, 0.34, 0.56);
        add_arc(g[6], 0.50, 0.66, 0.22, 0.21, 0, 360, 28);

        add_segment(g[7], 0.24, 0.14, 0.76, 0.14);
        add_segment(g[7], 0.76, 0.14, 0.42, 0.88);

        add_arc(g[8], 0.50, 0.30, 0.20, 0.18, 0, 360, 24);
        add_arc(g[8], 0.50, 0.66, 0.24, 0.21, 0, 360, 24);

        add_arc(g[9], 0.50, 0.34, 0.22, 0.21, 0, 360, 28);
        add_segment(g[9], 0.71, 0.38, 0.62, 0.70);
        add_segment(g[9], 0.62, 0.70, 0.45, 0.88);
        return g;
    }();
    return glyphs;
}

}  // namespace detail

/// Renders one digit with a randomized affine placement (scale, rotation,
/// shear, translation), stroke thickness, foreground level, and background
/// noise. Pure function of the stream.
inline Image render_synthetic_digit(int digit, int height, int width, Rng& rng) {
    const std::vector<detail::Segment>& strokes = detail::digit_glyphs()[digit];
    const double scale = rng.uniform(0.82, 1.12);
    const double angle = rng.uniform(-0.18, 0.18);
    const double shear = rng.uniform(-0.15, 0.15);
    const double tx = rng.uniform(-2.2, 2.2);
    const double ty = rng.uniform(-2.2, 2.2);
    const double thickness = rng.uniform(0.055, 0.085);
    const double fg = rng.uniform(170.0, 255.0);
    const double cosr = std::cos(angle), sinr = std::sin(angle);
    const double ext = std::max(height, width);
    const double aa = 0.5 / ext;

    Image img = Image::zeros(1, height, width);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double u = (x + 0.5 - width / 2.0 - tx) / (width * scale);
            const double v = (y + 0.5 - height / 2.0 - ty) / (height * scale);
            const double ur = cosr * u + sinr * v;
            const double vr = -sinr * u + cosr * v;
            const double gx = 0.5 + ur - shear * vr;
            const double gy = 0.5 + vr;
            double dist = 1e9;
            for (const detail::Segment& s : strokes)
                dist = std::min(dist, detail::segment_distance(s, gx, gy));
            double coverage = (thickness - dist) / aa + 0.5;
            coverage = coverage < 0.0 ? 0.0 : (coverage > 1.0 ? 1.0 : coverage);
            const double background = static_cast<double>(rng.below(19));
            img.at(0, y, x) = requantize(background + coverage * (fg - background));
        }
    }
    return img;
}

/// Deterministic labeled corpus of procedural digits. Item i depends only on
/// (seed, i), so any prefix of a larger corpus is reproducible.
inline LabeledDataset generate_synthetic_digits(std::size_t count, std::uint64_t seed,
                                                int height = 28, int width = 28) {
    LabeledDataset ds;
    ds.num_classes = 10;
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng(derive_stream(seed, i));
        const int digit = static_cast<int>(rng.below(10));
        ds.push_back(render_synthetic_digit(digit, height, width, rng), digit);
    }
    return ds;
}

}  // namespace triggerlab
