#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "mgsms/core.hpp"
#include "mgsms/grid.hpp"
#include "mgsms/png.hpp"

namespace mgsms {

/// Piecewise-linear blue-to-red contour scale (the classic FEM look):
/// dark blue, blue, cyan, yellow, red, dark red at t = 0 .. 1.
inline Rgb colormap(double t) {
    static const double stops[6] = {0.0, 0.125, 0.375, 0.625, 0.875, 1.0};
    static const Rgb colors[6] = {{0, 0, 143},     {0, 0, 255},   {0, 255, 255},
                                  {255, 255, 0},   {255, 0, 0},   {128, 0, 0}};
    t = std::clamp(t, 0.0, 1.0);
    int k = 0;
    while (k < 4 && t > stops[k + 1]) ++k;
    double f = (t - stops[k]) / (stops[k + 1] - stops[k]);
    auto mix = [&](std::uint8_t a, std::uint8_t b) {
        return static_cast<std::uint8_t>(std::lround(a + f * (b - a)));
    };
    return {mix(colors[k].r, colors[k + 1].r), mix(colors[k].g, colors[k + 1].g),
            mix(colors[k].b, colors[k + 1].b)};
}

namespace render_detail {

/// 5x7 glyphs, one byte per row, low five bits used (bit 4 = left column).
/// Covers digits, the punctuation used in numeric labels, and lowercase.
inline const std::uint8_t* glyph(char c) {
    static const std::uint8_t font[][7] = {
        /* ' ' */ {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00},
        /* '+' */ {0x00, 0x04, 0x04, 0x1f, 0x04, 0x04, 0x00},
        /* '-' */ {0x00, 0x00, 0x00, 0x1f, 0x00, 0x00, 0x00},
        /* '.' */ {0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c},
        /* '/' */ {0x01, 0x02, 0x02, 0x04, 0x08, 0x08, 0x10},
        /* '0' */ {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e},
        /* '1' */ {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e},
        /* '2' */ {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f},
        /* '3' */ {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e},
        /* '4' */ {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02},
        /* '5' */ {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e},
        /* '6' */ {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e},
        /* '7' */ {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},
        /* '8' */ {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e},
        /* '9' */ {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c},
        /* ':' */ {0x00, 0x0c, 0x0c, 0x00, 0x0c, 0x0c, 0x00},
        /* '[' */ {0x0e, 0x08, 0x08, 0x08, 0x08, 0x08, 0x0e},
        /* ']' */ {0x0e, 0x02, 0x02, 0x02, 0x02, 0x02, 0x0e},
        /* 'a' */ {0x00, 0x00, 0x0e, 0x01, 0x0f, 0x11, 0x0f},
        /* 'b' */ {0x10, 0x10, 0x1e, 0x11, 0x11, 0x11, 0x1e},
        /* 'c' */ {0x00, 0x00, 0x0e, 0x10, 0x10, 0x11, 0x0e},
        /* 'd' */ {0x01, 0x01, 0x0f, 0x11, 0x11, 0x11, 0x0f},
        /* 'e' */ {0x00, 0x00, 0x0e, 0x11, 0x1f, 0x10, 0x0e},
        /* 'f' */ {0x06, 0x09, 0x08, 0x1c, 0x08, 0x08, 0x08},
        /* 'g' */ {0x00, 0x0f, 0x11, 0x11, 0x0f, 0x01, 0x0e},
        /* 'h' */ {0x10, 0x10, 0x1e, 0x11, 0x11, 0x11, 0x11},
        /* 'i' */ {0x04, 0x00, 0x0c, 0x04, 0x04, 0x04, 0x0e},
        /* 'j' */ {0x02, 0x00, 0x06, 0x02, 0x02, 0x12, 0x0c},
        /* 'k' */ {0x10, 0x10, 0x12, 0x14, 0x18, 0x14, 0x12},
        /* 'l' */ {0x0c, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0e},
        /* 'm' */ {0x00, 0x00, 0x1a, 0x15, 0x15, 0x15, 0x15},
        /* 'n' */ {0x00, 0x00, 0x1e, 0x11, 0x11, 0x11, 0x11},
        /* 'o' */ {0x00, 0x00, 0x0e, 0x11, 0x11, 0x11, 0x0e},
        /* 'p' */ {0x00, 0x00, 0x1e, 0x11, 0x1e, 0x10, 0x10},
        /* 'q' */ {0x00, 0x00, 0x0f, 0x11, 0x0f, 0x01, 0x01},
        /* 'r' */ {0x00, 0x00, 0x16, 0x19, 0x10, 0x10, 0x10},
        /* 's' */ {0x00, 0x00, 0x0f, 0x10, 0x0e, 0x01, 0x1e},
        /* 't' */ {0x08, 0x08, 0x1c, 0x08, 0x08, 0x09, 0x06},
        /* 'u' */ {0x00, 0x00, 0x11, 0x11, 0x11, 0x13, 0x0d},
        /* 'v' */ {0x00, 0x00, 0x11, 0x11, 0x11, 0x0a, 0x04},
        /* 'w' */ {0x00, 0x00, 0x11, 0x15, 0x15, 0x15, 0x0a},
        /* 'x' */ {0x00, 0x00, 0x11, 0x0a, 0x04, 0x0a, 0x11},
        /* 'y' */ {0x00, 0x00, 0x11, 0x11, 0x0f, 0x01, 0x0e},
        /* 'z' */ {0x00, 0x00, 0x1f, 0x02, 0x04, 0x08, 0x1f},
    };
    static const char order[] = " +-./0123456789:[]abcdefghijklmnopqrstuvwxyz";
    const char* p = std::strchr(order, c);
    return p && c != '\0' ? font[p - order] : font[0];
}

}  // namespace render_detail

/// Draws 5x7 text with one blank column between glyphs; uppercase is folded
/// to lowercase, unknown characters print as blanks.
inline void draw_text(PixelImage& img, int x, int y, const std::string& text, Rgb color) {
    for (char raw : text) {
        char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
        const std::uint8_t* rows = render_detail::glyph(c);
        for (int r = 0; r < 7; ++r)
            for (int b = 0; b < 5; ++b)
                if (rows[r] & (0x10 >> b)) img.set(x + b, y + r, color);
        x += 6;
    }
}

inline int text_width(const std::string& text) { return 6 * static_cast<int>(text.size()); }

/// Bresenham segment with a square pen of the given half-width.
inline void draw_line(PixelImage& img, int x0, int y0, int x1, int y1, Rgb color, int half = 0) {
    int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        for (int oy = -half; oy <= half; ++oy)
            for (int ox = -half; ox <= half; ++ox) img.set(x0 + ox, y0 + oy, color);
        if (x0 == x1 && y0 == y1) break;
        int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

inline void draw_rect(PixelImage& img, int x0, int y0, int x1, int y1, Rgb color) {
    draw_line(img, x0, y0, x1, y0, color);
    draw_line(img, x1, y0, x1, y1, color);
    draw_line(img, x1, y1, x0, y1, color);
    draw_line(img, x0, y1, x0, y0, color);
}

/// Physical rectangle -> plot-area pixel transform (y axis points up).
struct PlotFrame {
    int px0 = 0, py0 = 0;  // top-left pixel of the plot area
    int pw = 1, ph = 1;    // plot area size in pixels
    Vec2 lo{0, 0}, hi{1, 1};

    int x(double v) const {
        return px0 + static_cast<int>(std::lround((v - lo.x()) / (hi.x() - lo.x()) * (pw - 1)));
    }
    int y(double v) const {
        return py0 + ph - 1 -
               static_cast<int>(std::lround((v - lo.y()) / (hi.y() - lo.y()) * (ph - 1)));
    }
    Vec2 physical(int px, int py) const {
        double tx = pw > 1 ? static_cast<double>(px - px0) / (pw - 1) : 0.0;
        double ty = ph > 1 ? static_cast<double>(py0 + ph - 1 - py) / (ph - 1) : 0.0;
        return Vec2(lo.x() + tx * (hi.x() - lo.x()), lo.y() + ty * (hi.y() - lo.y()));
    }
};

namespace render_detail {

constexpr int kMarginLeft = 64;
constexpr int kMarginRight = 88;
constexpr int kMarginTop = 24;
constexpr int kMarginBottom = 36;
constexpr Rgb kBlack{0, 0, 0};
constexpr Rgb kWhite{255, 255, 255};

inline PlotFrame make_frame(const PixelImage& img, Vec2 lo, Vec2 hi, bool colorbar) {
    PlotFrame f;
    f.px0 = kMarginLeft;
    f.py0 = kMarginTop;
    f.pw = img.width - kMarginLeft - (colorbar ? kMarginRight : 24);
    f.ph = img.height - kMarginTop - kMarginBottom;
    f.lo = lo;
    f.hi = hi;
    require(f.pw > 10 && f.ph > 10, "render: image too small for the plot margins");
    return f;
}

inline void draw_axes(PixelImage& img, const PlotFrame& f, const std::string& title) {
    draw_rect(img, f.px0 - 1, f.py0 - 1, f.px0 + f.pw, f.py0 + f.ph, kBlack);
    for (int k = 0; k < 3; ++k) {
        double tx = f.lo.x() + k * (f.hi.x() - f.lo.x()) / 2.0;
        double ty = f.lo.y() + k * (f.hi.y() - f.lo.y()) / 2.0;
        int px = f.x(tx), py = f.y(ty);
        draw_line(img, px, f.py0 + f.ph, px, f.py0 + f.ph + 3, kBlack);
        std::string lx = format("%.3g", tx);
        draw_text(img, px - text_width(lx) / 2, f.py0 + f.ph + 6, lx, kBlack);
        draw_line(img, f.px0 - 4, py, f.px0 - 1, py, kBlack);
        std::string ly = format("%.3g", ty);
        draw_text(img, f.px0 - 6 - text_width(ly), py - 3, ly, kBlack);
    }
    draw_text(img, f.px0, f.py0 - 14, title, kBlack);
}

inline void draw_colorbar(PixelImage& img, const PlotFrame& f, double vmin, double vmax) {
    int bx0 = f.px0 + f.pw + 16, bw = 14;
    for (int py = 0; py < f.ph; ++py) {
        double t = f.ph > 1 ? 1.0 - static_cast<double>(py) / (f.ph - 1) : 0.0;
        Rgb c = colormap(t);
        for (int b = 0; b < bw; ++b) img.set(bx0 + b, f.py0 + py, c);
    }
    draw_rect(img, bx0 - 1, f.py0 - 1, bx0 + bw, f.py0 + f.ph, kBlack);
    for (int k = 0; k < 3; ++k) {
        double v = vmin + k * (vmax - vmin) / 2.0;
        int py = f.py0 + f.ph - 1 - static_cast<int>(std::lround(k / 2.0 * (f.ph - 1)));
        draw_text(img, bx0 + bw + 4, py - 3, format("%.3g", v), kBlack);
    }
}

inline void draw_overlays(PixelImage& img, const PlotFrame& f,
                          const std::vector<std::vector<Vec2>>& paths,
                          const std::vector<Vec2>& points, Rgb path_color, Rgb point_color) {
    for (const auto& path : paths)
        for (std::size_t k = 0; k + 1 < path.size(); ++k)
            draw_line(img, f.x(path[k].x()), f.y(path[k].y()), f.x(path[k + 1].x()),
                      f.y(path[k + 1].y()), path_color, 1);
    for (const Vec2& p : points) {
        int px = f.x(p.x()), py = f.y(p.y());
        draw_line(img, px - 3, py, px + 3, py, point_color);
        draw_line(img, px, py - 3, px, py + 3, point_color);
    }
}

}  // namespace render_detail

/// Contour raster of a scalar field over the grid with axes, title and
/// colorbar. `values` has one entry per node (bilinear interpolation) or one
/// per element (flat cells). Optional crack paths (white) and sample points
/// (black crosses) are drawn in the grid's physical frame.
inline PixelImage render_field(const StructuredGrid& grid, const std::vector<double>& values,
                               const std::string& title,
                               const std::vector<std::vector<Vec2>>& paths = {},
                               const std::vector<Vec2>& points = {}, int width = 640,
                               int height = 560) {
    bool nodal = static_cast<int>(values.size()) == grid.node_count();
    require(nodal || static_cast<int>(values.size()) == grid.element_count(),
            "render_field: values must be per-node or per-element");
    for (double v : values) require(std::isfinite(v), "render_field: non-finite value");

    double vmin = *std::min_element(values.begin(), values.end());
    double vmax = *std::max_element(values.begin(), values.end());
    double span = vmax - vmin;
    bool flat = span <= 1e-300 * (1.0 + std::abs(vmax));

    PixelImage img(width, height);
    PlotFrame f = render_detail::make_frame(img, grid.origin, grid.origin + grid.extent, true);

    for (int py = f.py0; py < f.py0 + f.ph; ++py)
        for (int px = f.px0; px < f.px0 + f.pw; ++px) {
            Vec2 p = f.physical(px, py);
            double v;
            if (nodal) {
                auto [i, j] = grid.locate(p);
                Vec2 o = grid.element_origin(i, j);
                double tx = (p.x() - o.x()) / grid.hx(), ty = (p.y() - o.y()) / grid.hy();
                v = (1 - tx) * (1 - ty) * values[grid.node_id(i, j)] +
                    tx * (1 - ty) * values[grid.node_id(i + 1, j)] +
                    tx * ty * values[grid.node_id(i + 1, j + 1)] +
                    (1 - tx) * ty * values[grid.node_id(i, j + 1)];
            } else {
                auto [i, j] = grid.locate(p);
                v = values[grid.element_id(i, j)];
            }
            img.at(px, py) = colormap(flat ? 0.5 : (v - vmin) / span);
        }

    render_detail::draw_overlays(img, f, paths, points, render_detail::kWhite,
                                 render_detail::kBlack);
    render_detail::draw_axes(img, f, title);
    render_detail::draw_colorbar(img, f, vmin, vmax);
    return img;
}

/// Plain white domain plot (no field): black frame, red crack paths, blue
/// sample-point crosses.
inline PixelImage render_domain(const StructuredGrid& grid, const std::string& title,
                                const std::vector<std::vector<Vec2>>& paths = {},
                                const std::vector<Vec2>& points = {}, int width = 640,
                                int height = 560) {
    PixelImage img(width, height);
    PlotFrame f = render_detail::make_frame(img, grid.origin, grid.origin + grid.extent, false);
    render_detail::draw_overlays(img, f, paths, points, Rgb{200, 30, 30}, Rgb{30, 60, 200});
    render_detail::draw_axes(img, f, title);
    return img;
}

/// x-y line plot with axes and tick labels.
inline PixelImage render_curve(const std::vector<double>& xs, const std::vector<double>& ys,
                               const std::string& title, int width = 640, int height = 480) {
    require(xs.size() == ys.size(), "render_curve: x/y length mismatch");
    require(xs.size() >= 2, "render_curve: need at least two points");
    for (std::size_t k = 0; k < xs.size(); ++k)
        require(std::isfinite(xs[k]) && std::isfinite(ys[k]), "render_curve: non-finite point");

    auto [xlo_it, xhi_it] = std::minmax_element(xs.begin(), xs.end());
    auto [ylo_it, yhi_it] = std::minmax_element(ys.begin(), ys.end());
    double xlo = *xlo_it, xhi = *xhi_it, ylo = *ylo_it, yhi = *yhi_it;
    if (xhi - xlo <= 0.0) xhi = xlo + 1.0;
    if (yhi - ylo <= 0.0) yhi = ylo + 1.0;
    // A little headroom so the curve does not hug the frame.
    double pad = 0.04 * (yhi - ylo);
    ylo -= pad;
    yhi += pad;

    PixelImage img(width, height);
    PlotFrame f = render_detail::make_frame(img, Vec2(xlo, ylo), Vec2(xhi, yhi), false);
    for (std::size_t k = 0; k + 1 < xs.size(); ++k)
        draw_line(img, f.x(xs[k]), f.y(ys[k]), f.x(xs[k + 1]), f.y(ys[k + 1]), Rgb{30, 60, 200},
                  1);
    render_detail::draw_axes(img, f, title);
    return img;
}

}  // namespace mgsms
