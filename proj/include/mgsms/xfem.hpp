#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mgsms/core.hpp"
#include "mgsms/crack_extract.hpp"
#include "mgsms/fem.hpp"
#include "mgsms/grid.hpp"
#include "mgsms/material.hpp"

// 2D multi-crack XFEM on the structured plane-stress grid: Heaviside
// enrichment on fully cut elements, four-branch tip enrichment on tip
// elements, subdivision quadrature, interaction-integral stress intensity
// factors, and asynchronous propagation by maximum energy release rate.

namespace mgsms {

// ---------------------------------------------------------------------------
// Crack set

struct TipState {
    double k1 = 0.0;       // Pa*sqrt(m)
    double k2 = 0.0;       // Pa*sqrt(m)
    double g = 0.0;        // J/m^2
    bool active = true;    // above threshold at the last selection
    bool arrested = false; // hit a boundary or merged; never grows again
};

struct XfemCrack {
    std::vector<Vec2> points;          // polyline in grid coordinates
    std::array<TipState, 2> tips{};    // [0] = points.front(), [1] = points.back()

    double arc_length() const {
        double s = 0.0;
        for (std::size_t k = 1; k < points.size(); ++k) s += (points[k] - points[k - 1]).norm();
        return s;
    }
    Vec2 tip_point(int end) const { return end == 0 ? points.front() : points.back(); }
    /// Unit vector pointing out of the material, beyond the tip.
    Vec2 tip_direction(int end) const {
        std::size_t n = points.size();
        Vec2 d = (end == 0) ? points[0] - points[1] : points[n - 1] - points[n - 2];
        double len = d.norm();
        require(len > 0.0, "crack: repeated polyline point at a tip");
        return d / len;
    }
};

struct TipRef {
    int crack = -1;
    int end = -1;
    bool operator==(const TipRef&) const = default;
};

namespace xfem_detail {

inline bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d,
                               double& t, double& s) {
    Vec2 r = b - a, q = d - c;
    double denom = r.x() * q.y() - r.y() * q.x();
    if (std::abs(denom) < 1e-300) return false;
    Vec2 ca = c - a;
    t = (ca.x() * q.y() - ca.y() * q.x()) / denom;
    s = (ca.x() * r.y() - ca.y() * r.x()) / denom;
    return t >= 0.0 && t <= 1.0 && s >= 0.0 && s <= 1.0;
}

}  // namespace xfem_detail

struct CrackSet {
    std::vector<XfemCrack> cracks;

    int tip_count() const { return 2 * static_cast<int>(cracks.size()); }
    const TipState& tip(TipRef t) const { return cracks[t.crack].tips[t.end]; }
    TipState& tip(TipRef t) { return cracks[t.crack].tips[t.end]; }

    /// Polylines must be simple (no self-intersection) and tips must lie in
    /// the grid unless flagged as having reached the boundary.
    void validate(const StructuredGrid& grid) const {
        for (std::size_t c = 0; c < cracks.size(); ++c) {
            const auto& pts = cracks[c].points;
            require(pts.size() >= 2, format("crack %zu: needs at least two points", c));
            for (std::size_t k = 1; k < pts.size(); ++k)
                require((pts[k] - pts[k - 1]).norm() > 0.0,
                        format("crack %zu: repeated consecutive point", c));
            for (std::size_t i = 0; i + 1 < pts.size(); ++i)
                for (std::size_t j = i + 2; j + 1 < pts.size(); ++j) {
                    if (i == 0 && j + 2 == pts.size() && pts.size() > 3) {
                        // first and last segment may share no vertex; still check
                    }
                    double t, s;
                    if (xfem_detail::segments_intersect(pts[i], pts[i + 1], pts[j], pts[j + 1], t,
                                                        s))
                        fail("crack %zu: polyline intersects itself", c);
                }
            for (int end = 0; end < 2; ++end) {
                Vec2 p = cracks[c].tip_point(end);
                if (!grid.contains(p) && !cracks[c].tips[end].arrested)
                    fail("crack %zu tip %d: outside the grid and not flagged arrested", c, end);
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Geometry helpers

namespace xfem_detail {

/// Liang-Barsky clip of segment a->b against [lo, hi]; on hit returns the
/// parameter window [t0, t1] of the inside portion.
inline bool clip_segment(const Vec2& a, const Vec2& b, const Vec2& lo, const Vec2& hi, double& t0,
                         double& t1) {
    t0 = 0.0;
    t1 = 1.0;
    Vec2 d = b - a;
    for (int axis = 0; axis < 2; ++axis) {
        double p = d[axis];
        double qlo = lo[axis] - a[axis], qhi = hi[axis] - a[axis];
        if (std::abs(p) < 1e-300) {
            if (a[axis] < lo[axis] || a[axis] > hi[axis]) return false;
            continue;
        }
        double ta = qlo / p, tb = qhi / p;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) return false;
    }
    return t1 > t0;
}

/// Signed distance of p to the polyline, extended tangentially beyond the
/// tips so the side is defined everywhere near the crack.  Sign is positive
/// on the left of the walking direction.  At kinks ties resolve to the
/// segment whose side call is more decisive.
inline double polyline_signed_distance(const std::vector<Vec2>& pts, const Vec2& p) {
    double best_d2 = std::numeric_limits<double>::infinity();
    double best_side = 0.0, best_decisive = -1.0;
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        Vec2 a = pts[k], b = pts[k + 1];
        Vec2 ab = b - a;
        double len2 = ab.squaredNorm();
        double t = (p - a).dot(ab) / len2;
        double tc = std::clamp(t, 0.0, 1.0);
        if (k == 0) tc = std::min(tc, std::clamp(t, -1e18, 1.0));
        if (k + 2 == pts.size()) tc = std::max(tc, std::clamp(t, 0.0, 1e18));
        Vec2 closest = a + tc * ab;
        double d2 = (p - closest).squaredNorm();
        double cross = ab.x() * (p.y() - a.y()) - ab.y() * (p.x() - a.x());
        double decisive = std::abs(cross) / std::sqrt(len2);
        // The tie window must scale with the distances themselves, or domains
        // much smaller than unity would see every segment as equidistant.
        if (d2 < best_d2 - 1e-300 || (std::abs(d2 - best_d2) <= 1e-9 * (d2 + best_d2) &&
                                      decisive > best_decisive)) {
            best_d2 = d2;
            best_side = cross >= 0.0 ? 1.0 : -1.0;
            best_decisive = decisive;
        }
    }
    return best_side * std::sqrt(best_d2);
}

inline double heaviside_sign(const std::vector<Vec2>& pts, const Vec2& p) {
    return polyline_signed_distance(pts, p) >= 0.0 ? 1.0 : -1.0;
}

/// How one crack passes through one element.
struct Passage {
    int crack = -1;
    enum class Kind { through, tip, complex_cut } kind = Kind::through;
    int tip_end = -1;  // set for Kind::tip
    Vec2 entry{0, 0};  // boundary point where the crack enters (through/tip)
    Vec2 exit{0, 0};   // boundary point where it leaves (through only)
};

// Branch functions F_a(r, theta), a = 0..3:
//   sqrt(r) sin(t/2), sqrt(r) cos(t/2), sqrt(r) sin(t/2) sin(t), sqrt(r) cos(t/2) sin(t)
struct BranchEval {
    std::array<double, 4> f;
    std::array<Vec2, 4> grad;  // global frame
};

inline BranchEval branch_functions(const Vec2& p, const Vec2& tip, const Vec2& tangent,
                                   double theta_override = std::numeric_limits<double>::quiet_NaN()) {
    Vec2 normal(-tangent.y(), tangent.x());
    Vec2 d = p - tip;
    double x = d.dot(tangent), y = d.dot(normal);
    double r = std::max(std::hypot(x, y), 1e-300);
    double theta = std::isnan(theta_override) ? std::atan2(y, x) : theta_override;
    double sr = std::sqrt(r);
    double st2 = std::sin(theta / 2), ct2 = std::cos(theta / 2);
    double st = std::sin(theta), ct = std::cos(theta);

    BranchEval out;
    out.f = {sr * st2, sr * ct2, sr * st2 * st, sr * ct2 * st};
    // d/dr and d/dtheta per function, then to local Cartesian and global.
    double dr[4] = {st2 / (2 * sr), ct2 / (2 * sr), st2 * st / (2 * sr), ct2 * st / (2 * sr)};
    double dt[4] = {sr * ct2 / 2, -sr * st2 / 2, sr * (0.5 * ct2 * st + st2 * ct),
                    sr * (-0.5 * st2 * st + ct2 * ct)};
    for (int a = 0; a < 4; ++a) {
        double gx = dr[a] * ct - dt[a] * st / r;
        double gy = dr[a] * st + dt[a] * ct / r;
        out.grad[a] = gx * tangent + gy * normal;
    }
    return out;
}

// Quadrature

struct QuadPoint {
    Vec2 p;
    double w = 0.0;  // includes the Jacobian (physical area weight)
};

/// Strang 7-point degree-5 rule mapped onto triangle (a, b, c).
inline void triangle_rule(const Vec2& a, const Vec2& b, const Vec2& c,
                          std::vector<QuadPoint>& out) {
    static constexpr double w0 = 0.225;
    static constexpr double w1 = 0.13239415278850618;
    static constexpr double w2 = 0.12593918054482715;
    static constexpr double g1 = 0.47014206410511509, h1 = 0.05971587178976982;
    static constexpr double g2 = 0.10128650732345634, h2 = 0.79742698535308732;
    static constexpr double bary[7][3] = {
        {1.0 / 3, 1.0 / 3, 1.0 / 3}, {h1, g1, g1}, {g1, h1, g1}, {g1, g1, h1},
        {h2, g2, g2},                {g2, h2, g2}, {g2, g2, h2}};
    static constexpr double wts[7] = {w0, w1, w1, w1, w2, w2, w2};
    double area2 = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
    double area = 0.5 * std::abs(area2);
    if (area < 1e-300) return;
    for (int q = 0; q < 7; ++q)
        out.push_back({bary[q][0] * a + bary[q][1] * b + bary[q][2] * c, wts[q] * area});
}

inline void tensor_rule(const Vec2& lo, const Vec2& hi, int n, std::vector<QuadPoint>& out) {
    // Gauss-Legendre nodes for n in {2..5}; larger n builds from n=5 panels.
    static const std::vector<std::vector<double>> nodes = {
        {},
        {0.0},
        {-0.5773502691896257, 0.5773502691896257},
        {-0.7745966692414834, 0.0, 0.7745966692414834},
        {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563, 0.8611363115940526},
        {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831, 0.9061798459386640}};
    static const std::vector<std::vector<double>> weights = {
        {},
        {2.0},
        {1.0, 1.0},
        {5.0 / 9, 8.0 / 9, 5.0 / 9},
        {0.3478548451374538, 0.6521451548625461, 0.6521451548625461, 0.3478548451374538},
        {0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665,
         0.2369268850561891}};
    if (n <= 5) {
        Vec2 c = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                out.push_back({Vec2(c.x() + half.x() * nodes[n][i], c.y() + half.y() * nodes[n][j]),
                               weights[n][i] * weights[n][j] * half.x() * half.y()});
        return;
    }
    int panels = (n + 4) / 5;
    Vec2 step = (hi - lo) / panels;
    for (int i = 0; i < panels; ++i)
        for (int j = 0; j < panels; ++j) {
            Vec2 plo = lo + Vec2(i * step.x(), j * step.y());
            tensor_rule(plo, plo + step, 5, out);
        }
}

/// Perimeter parameter of a point on the rectangle boundary, in [0, 4):
/// edge 0 = bottom (toward +x), 1 = right, 2 = top (toward -x), 3 = left.
inline double boundary_param(const Vec2& p, const Vec2& lo, const Vec2& hi) {
    double dx = hi.x() - lo.x(), dy = hi.y() - lo.y();
    double dist_bottom = std::abs(p.y() - lo.y());
    double dist_right = std::abs(p.x() - hi.x());
    double dist_top = std::abs(p.y() - hi.y());
    double dist_left = std::abs(p.x() - lo.x());
    double m = std::min({dist_bottom, dist_right, dist_top, dist_left});
    if (m == dist_bottom) return std::clamp((p.x() - lo.x()) / dx, 0.0, 1.0);
    if (m == dist_right) return 1.0 + std::clamp((p.y() - lo.y()) / dy, 0.0, 1.0);
    if (m == dist_top) return 2.0 + std::clamp((hi.x() - p.x()) / dx, 0.0, 1.0);
    return 3.0 + std::clamp((hi.y() - p.y()) / dy, 0.0, 1.0);
}

inline Vec2 boundary_point(double s, const Vec2& lo, const Vec2& hi) {
    s = std::fmod(s, 4.0);
    if (s < 1.0) return Vec2(lo.x() + s * (hi.x() - lo.x()), lo.y());
    if (s < 2.0) return Vec2(hi.x(), lo.y() + (s - 1.0) * (hi.y() - lo.y()));
    if (s < 3.0) return Vec2(hi.x() - (s - 2.0) * (hi.x() - lo.x()), hi.y());
    return Vec2(lo.x(), hi.y() - (s - 3.0) * (hi.y() - lo.y()));
}

/// Corner parameters strictly between s_from and s_to walking counterclockwise.
inline std::vector<double> corners_between(double s_from, double s_to) {
    std::vector<double> out;
    double span = s_to - s_from;
    if (span <= 0.0) span += 4.0;
    for (int k = 1; k <= 4; ++k) {
        double c = std::ceil(s_from);
        if (c == s_from) c += 1.0;
        double corner = c + (k - 1);
        double rel = corner - s_from;
        if (rel > 1e-12 && rel < span - 1e-12) out.push_back(std::fmod(corner, 4.0));
    }
    return out;
}

/// The two boundary polygons the chord entry->exit cuts the rectangle into.
/// A graze whose chord hugs one edge yields a degenerate (< 3 vertex) piece.
inline std::array<std::vector<Vec2>, 2> chord_pieces(const Vec2& lo, const Vec2& hi,
                                                     const Vec2& entry, const Vec2& exit) {
    double s0 = boundary_param(entry, lo, hi), s1 = boundary_param(exit, lo, hi);
    std::array<std::vector<Vec2>, 2> pieces;
    for (int piece = 0; piece < 2; ++piece) {
        double from = piece == 0 ? s1 : s0;
        double to = piece == 0 ? s0 : s1;
        std::vector<Vec2>& poly = pieces[piece];
        poly = {piece == 0 ? entry : exit, piece == 0 ? exit : entry};
        for (double c : corners_between(from, to)) poly.push_back(boundary_point(c, lo, hi));
    }
    return pieces;
}

inline double polygon_area(const std::vector<Vec2>& poly) {
    if (poly.size() < 3) return 0.0;
    double twice = 0.0;
    for (std::size_t k = 0; k < poly.size(); ++k) {
        const Vec2& a = poly[k];
        const Vec2& b = poly[(k + 1) % poly.size()];
        twice += a.x() * b.y() - a.y() * b.x();
    }
    return 0.5 * std::abs(twice);
}

/// Rectangle split by the chord entry->exit: fan-triangulates both convex
/// pieces.  Degenerate slivers fall back to treating the element as uncut.
inline bool chord_split_rule(const Vec2& lo, const Vec2& hi, const Vec2& entry, const Vec2& exit,
                             std::vector<QuadPoint>& out) {
    if (std::abs((exit - entry).norm()) < 1e-12 * (hi - lo).norm()) return false;
    for (const auto& poly : chord_pieces(lo, hi, entry, exit)) {
        if (poly.size() < 3) continue;
        for (std::size_t k = 1; k + 1 < poly.size(); ++k)
            triangle_rule(poly[0], poly[k], poly[k + 1], out);
    }
    return true;
}

/// Tip element: fan from the tip around the whole boundary, slit along
/// tip->entry.  Each fan triangle is split once radially toward the tip so
/// the sqrt(r) terms are integrated on graded cells.
inline bool tip_fan_rule(const Vec2& lo, const Vec2& hi, const Vec2& tip, const Vec2& entry,
                         std::vector<QuadPoint>& out) {
    double s0 = boundary_param(entry, lo, hi);
    std::vector<Vec2> loop = {entry};
    for (double c : corners_between(s0, s0 + 4.0)) loop.push_back(boundary_point(c, lo, hi));
    loop.push_back(entry);
    double h = (hi - lo).norm();
    for (std::size_t k = 0; k + 1 < loop.size(); ++k) {
        Vec2 v0 = loop[k], v1 = loop[k + 1];
        if ((v1 - v0).norm() < 1e-12 * h) continue;
        Vec2 m0 = tip + 0.2 * (v0 - tip), m1 = tip + 0.2 * (v1 - tip);
        Vec2 n0 = tip + 0.55 * (v0 - tip), n1 = tip + 0.55 * (v1 - tip);
        triangle_rule(tip, m0, m1, out);
        triangle_rule(m0, n0, n1, out);
        triangle_rule(m0, n1, m1, out);
        triangle_rule(n0, v0, v1, out);
        triangle_rule(n0, v1, n1, out);
    }
    return true;
}

}  // namespace xfem_detail

// ---------------------------------------------------------------------------
// Enrichment

struct EnrichedDofMap {
    int std_dofs = 0;
    int total_dofs = 0;
    CrackSet cracks;  // working copy; may be perturbed away from mesh lines
    std::vector<std::string> warnings;

    // crack -> (node -> first of 2 dofs); tip (2*crack+end) -> (node -> first of 8)
    std::vector<std::map<int, int>> heaviside;
    std::vector<std::map<int, int>> branch;
    std::vector<std::map<int, double>> node_h;                  // crack -> node -> sign
    std::vector<std::map<int, std::array<double, 4>>> node_b;   // tip -> node -> values
    std::vector<std::array<Vec2, 2>> tip_frame;                 // tip -> {origin, tangent}

    std::vector<std::vector<xfem_detail::Passage>> elem_passages;  // per element

    int enriched_dofs() const { return total_dofs - std_dofs; }
    bool element_enriched(const StructuredGrid& grid, int e) const {
        if (!elem_passages[e].empty()) return true;
        for (int n : grid.element_nodes(e))
            for (const auto& m : branch)
                if (m.count(n)) return true;
        return false;
    }
};

namespace xfem_detail {

/// Collects how crack `c` passes through element `e`, walking the clipped
/// polyline portions in order.  Returns false when the element is untouched.
inline bool classify_element(const StructuredGrid& grid, const std::vector<Vec2>& pts, int c,
                             int e, bool tip0_meshed, bool tip1_meshed, Passage& out) {
    int ei = e % grid.nx, ej = e / grid.nx;
    Vec2 lo = grid.element_origin(ei, ej);
    Vec2 hi = lo + Vec2(grid.hx(), grid.hy());
    double tol = 1e-12 * std::max(grid.hx(), grid.hy());

    struct Portion {
        Vec2 a, b;
        bool starts_inside, ends_inside;
    };
    std::vector<Portion> portions;
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        double t0, t1;
        if (!clip_segment(pts[k], pts[k + 1], lo, hi, t0, t1)) continue;
        Vec2 a = pts[k] + t0 * (pts[k + 1] - pts[k]);
        Vec2 b = pts[k] + t1 * (pts[k + 1] - pts[k]);
        if ((b - a).norm() < tol) continue;
        portions.push_back({a, b, t0 <= 0.0 && k > 0, t1 >= 1.0 && k + 2 < pts.size()});
    }
    // Merge the chain: portions are already in polyline order.
    if (portions.empty()) return false;

    auto inside_open = [&](const Vec2& p) {
        return p.x() > lo.x() + tol && p.x() < hi.x() - tol && p.y() > lo.y() + tol &&
               p.y() < hi.y() - tol;
    };
    bool tip0_here = tip0_meshed && inside_open(pts.front());
    bool tip1_here = tip1_meshed && inside_open(pts.back());

    out.crack = c;
    if (tip0_here && tip1_here) {
        out.kind = Passage::Kind::complex_cut;  // sub-element crack; caller warns
        out.tip_end = -2;
        return true;
    }
    if (tip0_here || tip1_here) {
        out.kind = Passage::Kind::tip;
        out.tip_end = tip0_here ? 0 : 1;
        // Walk away from the tip to the first boundary exit.
        if (tip0_here) {
            for (const auto& pr : portions)
                if (!pr.ends_inside) {
                    out.entry = pr.b;
                    return true;
                }
            out.entry = portions.back().b;
        } else {
            for (auto it = portions.rbegin(); it != portions.rend(); ++it)
                if (!it->starts_inside) {
                    out.entry = it->a;
                    return true;
                }
            out.entry = portions.front().a;
        }
        return true;
    }
    // Through passage: single continuous chain from boundary to boundary.
    bool continuous = true;
    for (std::size_t k = 0; k + 1 < portions.size(); ++k)
        if ((portions[k].b - portions[k + 1].a).norm() > 10 * tol) continuous = false;
    out.entry = portions.front().a;
    out.exit = portions.back().b;
    if (!continuous || (out.exit - out.entry).norm() < 10 * tol) {
        out.kind = Passage::Kind::complex_cut;
        return true;
    }
    out.kind = Passage::Kind::through;
    return true;
}

inline bool near_mesh_line(const StructuredGrid& grid, const Vec2& p, double tol) {
    double fx = (p.x() - grid.origin.x()) / grid.hx();
    double fy = (p.y() - grid.origin.y()) / grid.hy();
    return std::abs(fx - std::round(fx)) * grid.hx() < tol ||
           std::abs(fy - std::round(fy)) * grid.hy() < tol;
}

/// True if any grid node lies within tol of the polyline.  Segment interiors
/// can run through a node even when every vertex is clear of the mesh lines
/// (rational slopes do this), which leaves that node's crack side undefined.
/// First and last segments are checked with a short tangential extension
/// because the Heaviside side near a tip uses the extended path.
inline bool node_on_polyline(const StructuredGrid& grid, const std::vector<Vec2>& pts,
                             double tol) {
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        Vec2 a = pts[k], b = pts[k + 1];
        Vec2 ab = b - a;
        double len = ab.norm();
        if (len <= 0.0) continue;
        double ext = 2.0 * std::max(grid.hx(), grid.hy()) / len;
        double tlo = k == 0 ? -ext : 0.0;
        double thi = k + 2 == pts.size() ? 1.0 + ext : 1.0;
        Vec2 plo = a + tlo * ab, phi = a + thi * ab;
        int ilo = std::max(0, static_cast<int>(std::floor(
                                  (std::min(plo.x(), phi.x()) - grid.origin.x()) / grid.hx())));
        int ihi = std::min(grid.nx, static_cast<int>(std::ceil(
                                        (std::max(plo.x(), phi.x()) - grid.origin.x()) / grid.hx())));
        int jlo = std::max(0, static_cast<int>(std::floor(
                                  (std::min(plo.y(), phi.y()) - grid.origin.y()) / grid.hy())));
        int jhi = std::min(grid.ny, static_cast<int>(std::ceil(
                                        (std::max(plo.y(), phi.y()) - grid.origin.y()) / grid.hy())));
        for (int j = jlo; j <= jhi; ++j)
            for (int i = ilo; i <= ihi; ++i) {
                Vec2 n = grid.node_coord(grid.node_id(i, j));
                double t = std::clamp((n - a).dot(ab) / (len * len), tlo, thi);
                if ((n - (a + t * ab)).norm() < tol) return true;
            }
    }
    return false;
}

}  // namespace xfem_detail

/// Classifies elements against each crack, perturbing any polyline that runs
/// along a mesh line, then assigns Heaviside dofs to nodes of fully cut
/// elements and four branch-function dofs to nodes of tip elements.
inline EnrichedDofMap build_enrichment(const StructuredGrid& grid, const MaterialParams& mat,
                                       const CrackSet& crack_set) {
    mat.validate();
    crack_set.validate(grid);
    EnrichedDofMap map;
    map.std_dofs = 2 * grid.node_count();
    map.cracks = crack_set;

    double h = std::min(grid.hx(), grid.hy());
    double coincidence_tol = 1e-9 * h;
    // Vertices sitting on mesh lines make intersection tests ambiguous, and a
    // segment interior running through a node leaves that node's side
    // undefined; shift the whole polyline by a sub-resolution offset and note
    // it.
    for (std::size_t c = 0; c < map.cracks.cracks.size(); ++c) {
        auto& pts = map.cracks.cracks[c].points;
        for (int attempt = 0; attempt < 4; ++attempt) {
            bool coincident = xfem_detail::node_on_polyline(grid, pts, coincidence_tol);
            for (const Vec2& p : pts)
                if (xfem_detail::near_mesh_line(grid, p, coincidence_tol)) coincident = true;
            if (!coincident) break;
            if (attempt == 3) fail("crack %zu: cannot perturb away from mesh lines", c);
            double scale = 1e-6 * h * std::pow(3.0, attempt);
            for (Vec2& p : pts) p += Vec2(scale, 1.37 * scale);
            map.warnings.push_back(
                format("crack %zu coincides with a mesh line; polyline shifted by %.3g", c,
                       scale));
        }
    }

    int ncracks = static_cast<int>(map.cracks.cracks.size());
    map.heaviside.resize(ncracks);
    map.branch.resize(2 * ncracks);
    map.node_h.resize(ncracks);
    map.node_b.resize(2 * ncracks);
    map.tip_frame.resize(2 * ncracks);
    map.elem_passages.assign(grid.element_count(), {});

    double btol = 1e-9 * h;
    auto tip_meshed = [&](const XfemCrack& cr, int end) {
        Vec2 p = cr.tip_point(end);
        // A tip on the grid boundary is a crack mouth, not a singular tip.
        return grid.contains(p) && p.x() > grid.origin.x() + btol &&
               p.x() < grid.origin.x() + grid.extent.x() - btol &&
               p.y() > grid.origin.y() + btol &&
               p.y() < grid.origin.y() + grid.extent.y() - btol;
    };

    std::vector<std::vector<int>> through_nodes(ncracks);
    for (int c = 0; c < ncracks; ++c) {
        const XfemCrack& cr = map.cracks.cracks[c];
        bool t0 = tip_meshed(cr, 0), t1 = tip_meshed(cr, 1);
        for (int end = 0; end < 2; ++end)
            map.tip_frame[2 * c + end] = {cr.tip_point(end), cr.tip_direction(end)};

        bool outside_everywhere = true;
        for (int e = 0; e < grid.element_count(); ++e) {
            xfem_detail::Passage pass;
            if (!xfem_detail::classify_element(grid, cr.points, c, e, t0, t1, pass)) continue;
            outside_everywhere = false;
            if (pass.tip_end == -2) {
                map.warnings.push_back(
                    format("crack %d is below mesh resolution and carries no enrichment", c));
                continue;
            }
            map.elem_passages[e].push_back(pass);
            auto nodes = grid.element_nodes(e);
            if (pass.kind == xfem_detail::Passage::Kind::tip) {
                int t = 2 * c + pass.tip_end;
                for (int n : nodes) map.node_b[t].emplace(n, std::array<double, 4>{});
            } else {
                for (int n : nodes) through_nodes[c].push_back(n);
            }
        }
        if (outside_everywhere) fail("crack %d lies entirely outside the grid", c);
    }

    // The shifted Heaviside function of a node lives only on the minor side
    // of the crack within the node's support; a corner graze leaves (near-)
    // zero area there and hence a zero stiffness column.  Measure the side
    // areas exactly as the quadrature will see them and keep the node
    // unenriched when the minor side nearly vanishes.
    auto minor_side_fraction = [&](int c, int n) {
        const auto& pts = map.cracks.cracks[c].points;
        double area_pos = 0.0, area_neg = 0.0;
        int ni = n % (grid.nx + 1), nj = n / (grid.nx + 1);
        double cell = grid.hx() * grid.hy();
        for (int ej = nj - 1; ej <= nj; ++ej)
            for (int ei = ni - 1; ei <= ni; ++ei) {
                if (ei < 0 || ei >= grid.nx || ej < 0 || ej >= grid.ny) continue;
                int e = grid.element_id(ei, ej);
                const xfem_detail::Passage* pc = nullptr;
                for (const auto& pass : map.elem_passages[e])
                    if (pass.crack == c) pc = &pass;
                Vec2 lo = grid.element_origin(ei, ej);
                Vec2 hi = lo + Vec2(grid.hx(), grid.hy());
                if (pc && pc->kind == xfem_detail::Passage::Kind::through) {
                    for (const auto& poly : xfem_detail::chord_pieces(lo, hi, pc->entry, pc->exit)) {
                        double a = xfem_detail::polygon_area(poly);
                        if (a <= 0.0) continue;
                        Vec2 centroid = Vec2::Zero();
                        for (const Vec2& p : poly) centroid += p;
                        centroid /= static_cast<double>(poly.size());
                        (xfem_detail::heaviside_sign(pts, centroid) > 0.0 ? area_pos
                                                                          : area_neg) += a;
                    }
                } else if (pc) {
                    // Tip passage of this crack: sample the sign coarsely.
                    for (int sj = 0; sj < 4; ++sj)
                        for (int si = 0; si < 4; ++si) {
                            Vec2 p = lo + Vec2((si + 0.5) / 4.0 * grid.hx(),
                                               (sj + 0.5) / 4.0 * grid.hy());
                            (xfem_detail::heaviside_sign(pts, p) > 0.0 ? area_pos : area_neg) +=
                                cell / 16.0;
                        }
                } else {
                    Vec2 center = 0.5 * (lo + hi);
                    (xfem_detail::heaviside_sign(pts, center) > 0.0 ? area_pos : area_neg) += cell;
                }
            }
        double total = area_pos + area_neg;
        return total > 0.0 ? std::min(area_pos, area_neg) / total : 0.0;
    };

    // Heaviside set = through-element nodes minus the same crack's tip nodes
    // and minus the degenerate-support nodes above.
    for (int c = 0; c < ncracks; ++c) {
        std::sort(through_nodes[c].begin(), through_nodes[c].end());
        through_nodes[c].erase(std::unique(through_nodes[c].begin(), through_nodes[c].end()),
                               through_nodes[c].end());
        for (int n : through_nodes[c]) {
            if (map.node_b[2 * c].count(n) || map.node_b[2 * c + 1].count(n)) continue;
            if (minor_side_fraction(c, n) < 1e-4) continue;
            map.heaviside[c].emplace(n, -1);
        }
    }

    // Nodal enrichment values (for the shifted basis) and dof numbering;
    // maps iterate in node order, so numbering is deterministic.
    int next = map.std_dofs;
    for (int c = 0; c < ncracks; ++c) {
        const auto& pts = map.cracks.cracks[c].points;
        for (auto& [n, dof] : map.heaviside[c]) {
            double s = xfem_detail::polyline_signed_distance(pts, grid.node_coord(n));
            require(std::abs(s) > 0.0, "enrichment: node exactly on a crack after perturbation");
            map.node_h[c][n] = s >= 0.0 ? 1.0 : -1.0;
            dof = next;
            next += 2;
        }
    }
    for (int t = 0; t < 2 * ncracks; ++t) {
        for (auto& [n, vals] : map.node_b[t]) {
            auto be = xfem_detail::branch_functions(grid.node_coord(n), map.tip_frame[t][0],
                                                    map.tip_frame[t][1]);
            vals = be.f;
            map.branch[t].emplace(n, -1);
        }
        for (auto& [n, dof] : map.branch[t]) {
            dof = next;
            next += 8;
        }
    }
    map.total_dofs = next;
    return map;
}

// ---------------------------------------------------------------------------
// Enriched solve

/// One scalar basis term: dof base index (x component; y is base+1), value,
/// and gradient.  The displacement ansatz is sum of term.value * (a_x, a_y).
namespace xfem_detail {
struct BasisTerm {
    int dof = -1;
    double value = 0.0;
    Vec2 grad{0.0, 0.0};
};

struct EvalOverride {
    int crack = -1;
    double side = 0.0;  // +1/-1: force the Heaviside sign and theta = +/- pi
};

/// All basis terms of element e at point p.  Skips identically-zero shifted
/// Heaviside columns on elements that crack does not cut through.
inline void element_basis(const StructuredGrid& grid, const EnrichedDofMap& map, int e,
                          const Vec2& p, std::vector<BasisTerm>& out,
                          const EvalOverride* ov = nullptr) {
    out.clear();
    int ei = e % grid.nx, ej = e / grid.nx;
    Vec2 lo = grid.element_origin(ei, ej);
    double xi = 2.0 * (p.x() - lo.x()) / grid.hx() - 1.0;
    double eta = 2.0 * (p.y() - lo.y()) / grid.hy() - 1.0;
    static constexpr double XS[4] = {-1, 1, 1, -1};
    static constexpr double ES[4] = {-1, -1, 1, 1};
    auto nodes = grid.element_nodes(e);
    double N[4];
    Vec2 dN[4];
    for (int k = 0; k < 4; ++k) {
        N[k] = 0.25 * (1 + xi * XS[k]) * (1 + eta * ES[k]);
        dN[k] = Vec2(0.5 * XS[k] * (1 + eta * ES[k]) / grid.hx(),
                     0.5 * ES[k] * (1 + xi * XS[k]) / grid.hy());
        out.push_back({2 * nodes[k], N[k], dN[k]});
    }

    // Heaviside terms exist only where the crack actually cuts.
    for (const auto& pass : map.elem_passages[e]) {
        int c = pass.crack;
        if (map.heaviside[c].empty()) continue;
        const auto& pts = map.cracks.cracks[c].points;
        double hp = (ov && ov->crack == c) ? ov->side : heaviside_sign(pts, p);
        for (int k = 0; k < 4; ++k) {
            auto it = map.heaviside[c].find(nodes[k]);
            if (it == map.heaviside[c].end()) continue;
            double shift = hp - map.node_h[c].at(nodes[k]);
            if (shift == 0.0 && !(ov && ov->crack == c)) {
                // keep the column; zero value still contributes zero
            }
            out.push_back({it->second, N[k] * shift, dN[k] * shift});
        }
    }

    // Branch terms act on every element that touches an enriched node.
    for (int t = 0; t < static_cast<int>(map.branch.size()); ++t) {
        if (map.branch[t].empty()) continue;
        bool touches = false;
        for (int k = 0; k < 4 && !touches; ++k) touches = map.branch[t].count(nodes[k]) > 0;
        if (!touches) continue;
        double theta_ov = std::numeric_limits<double>::quiet_NaN();
        if (ov && ov->crack == t / 2) theta_ov = ov->side * M_PI;
        auto be = branch_functions(p, map.tip_frame[t][0], map.tip_frame[t][1], theta_ov);
        for (int k = 0; k < 4; ++k) {
            auto it = map.branch[t].find(nodes[k]);
            if (it == map.branch[t].end()) continue;
            const auto& fv = map.node_b[t].at(nodes[k]);
            for (int a = 0; a < 4; ++a) {
                double shifted = be.f[a] - fv[a];
                out.push_back({it->second + 2 * a, N[k] * shifted,
                               dN[k] * shifted + N[k] * be.grad[a]});
            }
        }
    }
}

/// Quadrature for one element under the current enrichment.
inline std::vector<QuadPoint> element_quadrature(const StructuredGrid& grid,
                                                 const EnrichedDofMap& map, int e) {
    int ei = e % grid.nx, ej = e / grid.nx;
    Vec2 lo = grid.element_origin(ei, ej);
    Vec2 hi = lo + Vec2(grid.hx(), grid.hy());
    std::vector<QuadPoint> pts;
    const auto& passes = map.elem_passages[e];
    if (passes.size() == 1 && passes[0].kind == Passage::Kind::through) {
        if (chord_split_rule(lo, hi, passes[0].entry, passes[0].exit, pts)) return pts;
    } else if (passes.size() == 1 && passes[0].kind == Passage::Kind::tip) {
        Vec2 tip = map.tip_frame[2 * passes[0].crack + passes[0].tip_end][0];
        if (tip_fan_rule(lo, hi, tip, passes[0].entry, pts)) return pts;
    }
    if (!passes.empty()) {
        tensor_rule(lo, hi, 16, pts);  // several cracks or a degenerate cut
        return pts;
    }
    bool blending = false;
    auto nodes = grid.element_nodes(e);
    for (int k = 0; k < 4 && !blending; ++k)
        for (const auto& m : map.branch)
            if (m.count(nodes[k])) {
                blending = true;
                break;
            }
    tensor_rule(lo, hi, blending ? 10 : 2, pts);
    return pts;
}

}  // namespace xfem_detail

struct EnrichedSolution {
    StructuredGrid grid;
    MaterialParams mat;
    EnrichedDofMap map;
    Eigen::VectorXd u;         // all dofs, standard first
    DisplacementField field;   // standard nodal part (shifted basis keeps it nodal)
    Eigen::Matrix3d D;

    int locate_element(const Vec2& p) const {
        auto [i, j] = grid.locate(p);
        return grid.element_id(i, j);
    }

    /// Displacement at p; `ov` forces the side of one crack (for face values).
    Vec2 displacement(const Vec2& p, const xfem_detail::EvalOverride* ov = nullptr) const {
        std::vector<xfem_detail::BasisTerm> terms;
        xfem_detail::element_basis(grid, map, locate_element(p), p, terms, ov);
        Vec2 out = Vec2::Zero();
        for (const auto& t : terms) out += t.value * Vec2(u(t.dof), u(t.dof + 1));
        return out;
    }

    /// Displacement gradient d u_i / d x_j at p.
    Eigen::Matrix2d gradient(const Vec2& p, const xfem_detail::EvalOverride* ov = nullptr) const {
        std::vector<xfem_detail::BasisTerm> terms;
        xfem_detail::element_basis(grid, map, locate_element(p), p, terms, ov);
        Eigen::Matrix2d g = Eigen::Matrix2d::Zero();
        for (const auto& t : terms) {
            g(0, 0) += u(t.dof) * t.grad.x();
            g(0, 1) += u(t.dof) * t.grad.y();
            g(1, 0) += u(t.dof + 1) * t.grad.x();
            g(1, 1) += u(t.dof + 1) * t.grad.y();
        }
        return g;
    }

    Eigen::Vector3d stress(const Vec2& p, const xfem_detail::EvalOverride* ov = nullptr) const {
        Eigen::Matrix2d g = gradient(p, ov);
        return D * Eigen::Vector3d(g(0, 0), g(1, 1), g(0, 1) + g(1, 0));
    }

    /// Displacement jump across crack c at a point on its path (upper minus
    /// lower side with respect to the walking direction).
    Vec2 crack_opening(int c, const Vec2& p) const {
        xfem_detail::EvalOverride up{c, 1.0}, dn{c, -1.0};
        return displacement(p, &up) - displacement(p, &dn);
    }
};

/// Assembles and solves the enriched system.  Standard dofs keep their nodal
/// meaning; enriched dofs of constrained nodes are pinned to zero so cracks
/// cannot open through a Dirichlet boundary.
inline EnrichedSolution solve_with_cracks(const StructuredGrid& grid, const MaterialParams& mat,
                                          const std::vector<BoundaryCondition>& bcs,
                                          const CrackSet& crack_set) {
    using namespace fem_detail;
    using namespace xfem_detail;
    EnrichedSolution sol;
    sol.grid = grid;
    sol.mat = mat;
    sol.map = build_enrichment(grid, mat, crack_set);
    sol.D = plane_stress_D(mat);

    int ndof = sol.map.total_dofs;
    ConstraintMap cons = build_constraints(grid, bcs);
    check_rigid_modes(grid, cons);
    // Pin enriched dofs on nodes with any constrained component.
    auto pin_enriched = [&](const std::map<int, int>& m, int per_node) {
        for (const auto& [n, base] : m)
            if (cons.constrained(2 * n) || cons.constrained(2 * n + 1))
                for (int k = 0; k < per_node; ++k) cons.values.emplace(base + k, 0.0);
    };
    for (const auto& m : sol.map.heaviside) pin_enriched(m, 2);
    for (const auto& m : sol.map.branch) pin_enriched(m, 8);

    Eigen::VectorXd F = Eigen::VectorXd::Zero(ndof);
    add_traction_loads(grid, bcs, F);

    Eigen::Matrix<double, 8, 8> Ke_plain = quad_stiffness(grid.hx(), grid.hy(), sol.D);
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(grid.element_count()) * 64);
    std::vector<BasisTerm> terms;
    for (int e = 0; e < grid.element_count(); ++e) {
        Eigen::MatrixXd Ke;
        std::vector<int> dofs;
        if (!sol.map.element_enriched(grid, e)) {
            auto nodes = grid.element_nodes(e);
            dofs.resize(8);
            for (int k = 0; k < 4; ++k) {
                dofs[2 * k] = 2 * nodes[k];
                dofs[2 * k + 1] = 2 * nodes[k] + 1;
            }
            Ke = Ke_plain;
        } else {
            auto qpts = element_quadrature(grid, sol.map, e);
            // Dof list from the basis at any interior point.
            element_basis(grid, sol.map, e, qpts.front().p, terms);
            dofs.clear();
            for (const auto& t : terms) {
                dofs.push_back(t.dof);
                dofs.push_back(t.dof + 1);
            }
            int nd = static_cast<int>(dofs.size());
            Ke = Eigen::MatrixXd::Zero(nd, nd);
            Eigen::MatrixXd B(3, nd);
            for (const auto& qp : qpts) {
                element_basis(grid, sol.map, e, qp.p, terms);
                require(2 * static_cast<int>(terms.size()) == nd,
                        "xfem assembly: basis layout changed between quadrature points");
                B.setZero();
                for (std::size_t k = 0; k < terms.size(); ++k) {
                    B(0, 2 * k) = terms[k].grad.x();
                    B(1, 2 * k + 1) = terms[k].grad.y();
                    B(2, 2 * k) = terms[k].grad.y();
                    B(2, 2 * k + 1) = terms[k].grad.x();
                }
                Ke.noalias() += qp.w * B.transpose() * sol.D * B;
            }
        }
        int nd = static_cast<int>(dofs.size());
        for (int a = 0; a < nd; ++a) {
            int ra = dofs[a];
            if (cons.constrained(ra)) continue;
            for (int b = 0; b < nd; ++b) {
                int cb = dofs[b];
                if (cons.constrained(cb))
                    F(ra) -= Ke(a, b) * cons.values.at(cb);
                else
                    trips.emplace_back(ra, cb, Ke(a, b));
            }
        }
    }
    for (const auto& [dof, v] : cons.values) {
        trips.emplace_back(dof, dof, 1.0);
        F(dof) = v;
    }

    Eigen::SparseMatrix<double> K(ndof, ndof);
    K.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(K);
    if (solver.info() != Eigen::Success)
        fail("xfem solve: factorization failed; a crack may isolate an unconstrained region");
    sol.u = solver.solve(F);
    double fnorm = F.norm();
    if (fnorm > 0.0) {
        double res = (K * sol.u - F).norm() / fnorm;
        if (!(res < 1e-8) || !sol.u.allFinite())
            fail("xfem solve: residual %.3e; a crack may isolate an unconstrained region", res);
    }

    sol.field.grid = grid;
    sol.field.nodal_u.resize(grid.node_count());
    for (int n = 0; n < grid.node_count(); ++n)
        sol.field.nodal_u[n] = Vec2(sol.u(2 * n), sol.u(2 * n + 1));
    return sol;
}

/// Total strain energy of the enriched solution, integrated on the same
/// subdivision quadrature the assembly uses.
inline double strain_energy(const EnrichedSolution& sol) {
    using namespace xfem_detail;
    double energy = 0.0;
    std::vector<BasisTerm> terms;
    for (int e = 0; e < sol.grid.element_count(); ++e) {
        auto qpts = element_quadrature(sol.grid, sol.map, e);
        for (const auto& qp : qpts) {
            element_basis(sol.grid, sol.map, e, qp.p, terms);
            Eigen::Vector3d eps = Eigen::Vector3d::Zero();
            for (const auto& t : terms) {
                eps(0) += sol.u(t.dof) * t.grad.x();
                eps(1) += sol.u(t.dof + 1) * t.grad.y();
                eps(2) += sol.u(t.dof) * t.grad.y() + sol.u(t.dof + 1) * t.grad.x();
            }
            energy += 0.5 * qp.w * eps.dot(sol.D * eps);
        }
    }
    return energy;
}

// ---------------------------------------------------------------------------
// Stress intensity factors: domain-form interaction integral

namespace xfem_detail {

/// Westergaard near-tip auxiliary field for unit K of the given mode, in the
/// tip frame (crack along the negative x axis).  Plane stress.
struct AuxField {
    Eigen::Matrix2d stress;    // sigma_ij
    Eigen::Matrix2d strain;    // eps_ij
    Vec2 du_dx1;               // d u_i / d x_1
};

inline AuxField aux_tip_field(int mode, double r, double theta, const MaterialParams& m) {
    double E = m.youngs_modulus, nu = m.poisson_ratio;
    double mu = E / (2.0 * (1.0 + nu));
    double kappa = (3.0 - nu) / (1.0 + nu);
    double fs = 1.0 / std::sqrt(2.0 * M_PI * r);
    double fr = std::sqrt(r / (2.0 * M_PI));
    double st2 = std::sin(theta / 2), ct2 = std::cos(theta / 2);
    double st = std::sin(theta), ct = std::cos(theta);
    double s3t2 = std::sin(3 * theta / 2), c3t2 = std::cos(3 * theta / 2);

    AuxField out;
    double s11, s22, s12, u1, u2, du1_dt, du2_dt;
    if (mode == 1) {
        s11 = fs * ct2 * (1 - st2 * s3t2);
        s22 = fs * ct2 * (1 + st2 * s3t2);
        s12 = fs * st2 * ct2 * c3t2;
        u1 = fr / (2 * mu) * ct2 * (kappa - ct);
        u2 = fr / (2 * mu) * st2 * (kappa - ct);
        du1_dt = fr / (2 * mu) * (-0.5 * st2 * (kappa - ct) + ct2 * st);
        du2_dt = fr / (2 * mu) * (0.5 * ct2 * (kappa - ct) + st2 * st);
    } else {
        s11 = -fs * st2 * (2 + ct2 * c3t2);
        s22 = fs * st2 * ct2 * c3t2;
        s12 = fs * ct2 * (1 - st2 * s3t2);
        u1 = fr / (2 * mu) * st2 * (kappa + 2 + ct);
        u2 = -fr / (2 * mu) * ct2 * (kappa - 2 + ct);
        du1_dt = fr / (2 * mu) * (0.5 * ct2 * (kappa + 2 + ct) - st2 * st);
        du2_dt = fr / (2 * mu) * (0.5 * st2 * (kappa - 2 + ct) + ct2 * st);
    }
    out.stress << s11, s12, s12, s22;
    out.strain << (s11 - nu * s22) / E, s12 * (1 + nu) / E, s12 * (1 + nu) / E,
        (s22 - nu * s11) / E;
    // d/dx1 = cos(t) d/dr - sin(t)/r d/dtheta; u ~ sqrt(r) so du/dr = u/(2r).
    out.du_dx1 = Vec2(ct * u1 / (2 * r) - st / r * du1_dt, ct * u2 / (2 * r) - st / r * du2_dt);
    return out;
}

}  // namespace xfem_detail

struct Sifs {
    double k1 = 0.0;
    double k2 = 0.0;
    double radius_used = 0.0;  // after any automatic shrink
};

/// Mixed-mode SIFs at a tip from the domain-form interaction integral.  The
/// weight q is 1 on a plateau disk of the given radius and falls to 0 over a
/// ramp ring 1.2 element sizes wide beyond it, so the tip element never sits
/// inside the ramp (where its stress error would pollute the integral).  If
/// another crack intersects the domain the radius shrinks; below 1.2 element
/// sizes the computation refuses.
inline Sifs compute_sifs(const EnrichedSolution& sol, TipRef tip, double radius,
                         bool allow_overlap = false) {
    using namespace xfem_detail;
    require(tip.crack >= 0 && tip.crack < static_cast<int>(sol.map.cracks.cracks.size()) &&
                (tip.end == 0 || tip.end == 1),
            "compute_sifs: bad tip reference");
    require(radius > 0.0, "compute_sifs: radius must be positive");
    int t = 2 * tip.crack + tip.end;
    require(!sol.map.branch[t].empty(), "compute_sifs: tip is not enriched (on a boundary?)");
    const Vec2 tip_p = sol.map.tip_frame[t][0];
    const Vec2 tangent = sol.map.tip_frame[t][1];
    const Vec2 normal(-tangent.y(), tangent.x());
    double h = std::min(sol.grid.hx(), sol.grid.hy());
    const double ramp = 1.2 * std::max(sol.grid.hx(), sol.grid.hy());

    // Shrink until no other crack crosses the integration disk (plateau+ramp).
    double r1 = radius;
    for (;;) {
        bool clean = true;
        for (std::size_t c = 0; c < sol.map.cracks.cracks.size(); ++c) {
            if (static_cast<int>(c) == tip.crack) continue;
            const auto& pts = sol.map.cracks.cracks[c].points;
            for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
                Vec2 a = pts[k], ab = pts[k + 1] - pts[k];
                double s = std::clamp((tip_p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
                if ((a + s * ab - tip_p).norm() < r1 + ramp) clean = false;
            }
        }
        if (clean || allow_overlap) break;
        r1 *= 0.7;
        if (r1 < 1.2 * h)
            fail("compute_sifs: another crack intersects every admissible domain at tip (%d,%d)",
                 tip.crack, tip.end);
    }
    double r2 = r1 + ramp;

    double I1 = 0.0, I2 = 0.0;
    std::vector<BasisTerm> terms;
    int ilo = std::max(0, static_cast<int>((tip_p.x() - sol.grid.origin.x() - r2) / sol.grid.hx()) - 1);
    int ihi = std::min(sol.grid.nx - 1,
                       static_cast<int>((tip_p.x() - sol.grid.origin.x() + r2) / sol.grid.hx()) + 1);
    int jlo = std::max(0, static_cast<int>((tip_p.y() - sol.grid.origin.y() - r2) / sol.grid.hy()) - 1);
    int jhi = std::min(sol.grid.ny - 1,
                       static_cast<int>((tip_p.y() - sol.grid.origin.y() + r2) / sol.grid.hy()) + 1);
    for (int j = jlo; j <= jhi; ++j)
        for (int i = ilo; i <= ihi; ++i) {
            int e = sol.grid.element_id(i, j);
            // The ramp ring cuts arbitrarily through elements, so plain ones
            // need a denser rule here than the assembly's 2x2.
            std::vector<QuadPoint> qpts;
            if (sol.map.elem_passages[e].empty()) {
                Vec2 elo = sol.grid.element_origin(i, j);
                tensor_rule(elo, elo + Vec2(sol.grid.hx(), sol.grid.hy()), 8, qpts);
            } else {
                qpts = element_quadrature(sol.grid, sol.map, e);
            }
            for (const auto& qp : qpts) {
                Vec2 d = qp.p - tip_p;
                double r = d.norm();
                if (r <= r1 || r >= r2) continue;  // the ramp ring is all that contributes
                // q falls from 1 to 0 over the ring as a smoothstep, so its
                // gradient is continuous and quadrature-friendly.
                double t = (r - r1) / (r2 - r1);
                double dq_dr = -6.0 * t * (1.0 - t) / (r2 - r1);
                Vec2 gq_glob = dq_dr * d / r;
                Vec2 gq(gq_glob.dot(tangent), gq_glob.dot(normal));

                // Numeric stress and displacement gradient, rotated tip-local.
                element_basis(sol.grid, sol.map, e, qp.p, terms);
                Eigen::Matrix2d gu = Eigen::Matrix2d::Zero();
                for (const auto& tm : terms) {
                    gu(0, 0) += sol.u(tm.dof) * tm.grad.x();
                    gu(0, 1) += sol.u(tm.dof) * tm.grad.y();
                    gu(1, 0) += sol.u(tm.dof + 1) * tm.grad.x();
                    gu(1, 1) += sol.u(tm.dof + 1) * tm.grad.y();
                }
                Eigen::Vector3d sv =
                    sol.D * Eigen::Vector3d(gu(0, 0), gu(1, 1), gu(0, 1) + gu(1, 0));
                Eigen::Matrix2d R;
                R << tangent.x(), normal.x(), tangent.y(), normal.y();
                Eigen::Matrix2d sig;
                sig << sv(0), sv(2), sv(2), sv(1);
                Eigen::Matrix2d sig_l = R.transpose() * sig * R;
                Eigen::Matrix2d gu_l = R.transpose() * gu * R;

                double x1 = d.dot(tangent), x2 = d.dot(normal);
                double theta = std::atan2(x2, x1);
                for (int mode = 1; mode <= 2; ++mode) {
                    AuxField aux = aux_tip_field(mode, r, theta, sol.mat);
                    double w_int = sig_l(0, 0) * aux.strain(0, 0) + sig_l(1, 1) * aux.strain(1, 1) +
                                   2.0 * sig_l(0, 1) * aux.strain(0, 1);
                    double term = 0.0;
                    for (int jj = 0; jj < 2; ++jj) {
                        double v = 0.0;
                        for (int ii = 0; ii < 2; ++ii)
                            v += sig_l(ii, jj) * aux.du_dx1[ii] +
                                 aux.stress(ii, jj) * gu_l(ii, 0);
                        if (jj == 0) v -= w_int;
                        term += v * gq[jj];
                    }
                    (mode == 1 ? I1 : I2) += qp.w * term;
                }
            }
        }

    double eprime = sol.mat.youngs_modulus;  // plane stress
    Sifs out;
    out.k1 = 0.5 * eprime * I1;
    out.k2 = 0.5 * eprime * I2;
    out.radius_used = r1;
    return out;
}

// ---------------------------------------------------------------------------
// Tip selection and propagation

struct TipSelection {
    enum class Outcome { grow, all_below_threshold, all_arrested } outcome =
        Outcome::all_arrested;
    TipRef tip;
    double g = 0.0;
};

/// Energy release rate per tip from the stored SIFs (G = (K1^2 + K2^2) / E,
/// plane stress); picks the maximum among non-arrested tips, growing only if
/// it reaches g_c.  Ties resolve to the lowest tip index.
inline TipSelection select_active_tip(CrackSet& set, const MaterialParams& mat, double g_c) {
    mat.validate();
    require(g_c >= 0.0, "select_active_tip: g_c must be non-negative");
    TipSelection sel;
    bool any_live = false;
    for (int c = 0; c < static_cast<int>(set.cracks.size()); ++c)
        for (int end = 0; end < 2; ++end) {
            TipState& ts = set.cracks[c].tips[end];
            if (ts.arrested) continue;
            ts.g = (ts.k1 * ts.k1 + ts.k2 * ts.k2) / mat.youngs_modulus;
            ts.active = ts.g >= g_c;
            if (!any_live || ts.g > sel.g) {
                sel.tip = {c, end};
                sel.g = ts.g;
            }
            any_live = true;
        }
    if (!any_live) {
        sel.outcome = TipSelection::Outcome::all_arrested;
        return sel;
    }
    sel.outcome = sel.g >= g_c ? TipSelection::Outcome::grow
                               : TipSelection::Outcome::all_below_threshold;
    return sel;
}

/// Kink angle of the maximum hoop stress criterion, relative to the current
/// tip direction.  Pure mode I grows straight; the kink opposes K2's sign.
inline double hoop_stress_angle(double k1, double k2) {
    if (std::abs(k2) < 1e-12 * std::max(std::abs(k1), 1e-300)) return 0.0;
    double rho = k1 / k2;
    double s = k2 > 0.0 ? 1.0 : -1.0;
    return 2.0 * std::atan((rho - s * std::sqrt(rho * rho + 8.0)) / 4.0);
}

struct PropagateOutcome {
    CrackSet set;
    bool merged = false;
    int merged_crack = -1;    // surviving index after a merge
    bool hit_boundary = false;
};

namespace xfem_detail {

/// Sub-polyline of pts from the split point (segment k, parameter s) to one
/// end; `towards_back` selects which end.
inline std::vector<Vec2> polyline_side(const std::vector<Vec2>& pts, std::size_t k, double s,
                                       bool towards_back) {
    Vec2 split = pts[k] + s * (pts[k + 1] - pts[k]);
    std::vector<Vec2> out{split};
    if (towards_back)
        for (std::size_t i = k + 1; i < pts.size(); ++i) out.push_back(pts[i]);
    else
        for (std::size_t i = k + 1; i-- > 0;) out.push_back(pts[i]);
    // A split landing on a vertex leaves a zero-length lead segment.
    if (out.size() >= 2 && (out[1] - out[0]).norm() < 1e-12 * (pts[k + 1] - pts[k]).norm())
        out.erase(out.begin());
    return out;
}

inline double polyline_length(const std::vector<Vec2>& pts) {
    double s = 0.0;
    for (std::size_t k = 1; k < pts.size(); ++k) s += (pts[k] - pts[k - 1]).norm();
    return s;
}

}  // namespace xfem_detail

/// Extends one tip by `da` along the hoop-stress direction.  A step through
/// the grid boundary is clamped there and arrests the tip; a step crossing
/// another crack joins the two polylines (the struck crack keeps its longer
/// side) and arrests nothing else.
inline PropagateOutcome propagate_step(const StructuredGrid& grid, CrackSet set, TipRef tip,
                                       double da) {
    using namespace xfem_detail;
    require(tip.crack >= 0 && tip.crack < static_cast<int>(set.cracks.size()) &&
                (tip.end == 0 || tip.end == 1),
            "propagate_step: bad tip reference");
    require(da > 0.0, "propagate_step: step size must be positive");
    double h = std::min(grid.hx(), grid.hy());
    require(da <= 2.0 * h, "propagate_step: step larger than two element sizes");
    XfemCrack& cr = set.cracks[tip.crack];
    TipState& ts = cr.tips[tip.end];
    require(!ts.arrested, "propagate_step: tip is arrested");

    double theta = hoop_stress_angle(ts.k1, ts.k2);
    Vec2 dir = cr.tip_direction(tip.end);
    Vec2 ndir(dir.x() * std::cos(theta) - dir.y() * std::sin(theta),
              dir.x() * std::sin(theta) + dir.y() * std::cos(theta));
    Vec2 old_tip = cr.tip_point(tip.end);
    Vec2 new_tip = old_tip + da * ndir;

    PropagateOutcome out;
    // Clamp at the grid boundary.
    Vec2 lo = grid.origin, hi = grid.origin + grid.extent;
    if (new_tip.x() < lo.x() || new_tip.x() > hi.x() || new_tip.y() < lo.y() ||
        new_tip.y() > hi.y()) {
        double t0, t1;
        if (clip_segment(old_tip, new_tip, lo, hi, t0, t1) && t1 > 1e-9)
            new_tip = old_tip + t1 * (new_tip - old_tip);
        else
            new_tip = old_tip;  // already on the boundary; freeze
        ts.arrested = true;
        ts.active = false;
        out.hit_boundary = true;
    }

    // First crossing with any other crack along the new segment.
    int hit_crack = -1;
    std::size_t hit_seg = 0;
    double hit_t = 2.0, hit_s = 0.0;
    for (int c = 0; c < static_cast<int>(set.cracks.size()); ++c) {
        if (c == tip.crack) continue;
        const auto& pts = set.cracks[c].points;
        for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
            double t, s;
            if (segments_intersect(old_tip, new_tip, pts[k], pts[k + 1], t, s) && t > 1e-9 &&
                t < hit_t) {
                hit_t = t;
                hit_s = s;
                hit_crack = c;
                hit_seg = k;
            }
        }
    }

    if (hit_crack < 0) {
        if (tip.end == 0)
            cr.points.insert(cr.points.begin(), new_tip);
        else
            cr.points.push_back(new_tip);
        out.set = std::move(set);
        return out;
    }

    // Merge: grown path up to the crossing, then the struck crack's longer side.
    Vec2 cross = old_tip + hit_t * (new_tip - old_tip);
    std::vector<Vec2> grown = cr.points;
    if (tip.end == 0) std::reverse(grown.begin(), grown.end());
    grown.push_back(cross);

    const auto& struck = set.cracks[hit_crack].points;
    auto side_front = polyline_side(struck, hit_seg, hit_s, false);
    auto side_back = polyline_side(struck, hit_seg, hit_s, true);
    bool keep_back = polyline_length(side_back) >= polyline_length(side_front);
    const auto& kept = keep_back ? side_back : side_front;

    XfemCrack merged;
    merged.points = grown;
    for (std::size_t k = 1; k < kept.size(); ++k) merged.points.push_back(kept[k]);
    merged.tips[0] = cr.tips[1 - tip.end];
    merged.tips[1] = set.cracks[hit_crack].tips[keep_back ? 1 : 0];

    int lo_idx = std::min(tip.crack, hit_crack), hi_idx = std::max(tip.crack, hit_crack);
    set.cracks.erase(set.cracks.begin() + hi_idx);
    set.cracks.erase(set.cracks.begin() + lo_idx);
    set.cracks.push_back(std::move(merged));
    out.merged = true;
    out.merged_crack = static_cast<int>(set.cracks.size()) - 1;
    out.set = std::move(set);
    return out;
}

// ---------------------------------------------------------------------------
// Propagation driver

struct PropagationParams {
    double da = 0.0;          // step length; 0 = 0.75 * element size
    double g_c = 0.0;         // J/m^2 growth threshold
    double sif_radius = 0.0;  // 0 = 2.5 * element size
    int max_steps = 200;
    bool track_energy = false;

    void validate() const {
        require(g_c >= 0.0 && std::isfinite(g_c), "propagation: g_c must be non-negative");
        require(max_steps >= 1, "propagation: max_steps must be at least 1");
    }
};

struct PropagationStep {
    int step = 0;
    TipRef tip;
    double g = 0.0, k1 = 0.0, k2 = 0.0;
    bool merged = false;
    double energy = 0.0;  // filled when track_energy is on
};

struct PropagationResult {
    CrackSet set;
    std::vector<PropagationStep> steps;
    int solves = 0;
    std::string stop_reason;
};

/// Grows the crack set one tip at a time (the maximum-G tip) until every tip
/// is arrested or below threshold.  Tips whose integration domain cannot
/// exclude a neighboring crack fall back to a tight overlapping domain; they
/// are about to merge anyway.
inline PropagationResult propagate_to_arrest(const StructuredGrid& grid,
                                             const MaterialParams& mat,
                                             const std::vector<BoundaryCondition>& bcs,
                                             CrackSet set, const PropagationParams& prm_in) {
    PropagationParams prm = prm_in;
    prm.validate();
    double h = std::min(grid.hx(), grid.hy());
    if (prm.da <= 0.0) prm.da = 0.75 * h;
    if (prm.sif_radius <= 0.0) prm.sif_radius = 2.5 * h;

    PropagationResult out;
    bool touched_boundary = false;
    for (int step = 0; step < prm.max_steps; ++step) {
        EnrichedSolution sol;
        try {
            sol = solve_with_cracks(grid, mat, bcs, set);
        } catch (const Error&) {
            // A crack that reached the boundary can sever the plate and set a
            // piece free; that is the end of propagation, not a failure.
            if (touched_boundary) {
                out.stop_reason = "specimen severed";
                break;
            }
            throw;
        }
        ++out.solves;
        // The solve's working copy may be perturbed; propagate on it so
        // geometry stays consistent with the SIFs.
        set = sol.map.cracks;
        for (int c = 0; c < static_cast<int>(set.cracks.size()); ++c)
            for (int end = 0; end < 2; ++end) {
                TipState& ts = set.cracks[c].tips[end];
                if (ts.arrested) continue;
                if (sol.map.branch[2 * c + end].empty()) {
                    // Mouth on the boundary or unresolved tip: cannot grow.
                    ts.arrested = true;
                    ts.active = false;
                    continue;
                }
                Sifs s;
                try {
                    s = compute_sifs(sol, {c, end}, prm.sif_radius);
                } catch (const Error&) {
                    s = compute_sifs(sol, {c, end}, 1.5 * h, /*allow_overlap=*/true);
                }
                ts.k1 = s.k1;
                ts.k2 = s.k2;
            }

        TipSelection sel = select_active_tip(set, mat, prm.g_c);
        if (sel.outcome != TipSelection::Outcome::grow) {
            out.stop_reason = sel.outcome == TipSelection::Outcome::all_arrested
                                  ? "all tips arrested"
                                  : "all tips below threshold";
            break;
        }

        PropagationStep rec;
        rec.step = step;
        rec.tip = sel.tip;
        rec.g = sel.g;
        rec.k1 = set.tip(sel.tip).k1;
        rec.k2 = set.tip(sel.tip).k2;
        if (prm.track_energy) rec.energy = strain_energy(sol);

        PropagateOutcome po = propagate_step(grid, std::move(set), sel.tip, prm.da);
        set = std::move(po.set);
        rec.merged = po.merged;
        touched_boundary = touched_boundary || po.hit_boundary;
        out.steps.push_back(rec);
        if (static_cast<int>(out.steps.size()) == prm.max_steps)
            out.stop_reason = "step limit reached";
    }
    if (out.stop_reason.empty()) out.stop_reason = "step limit reached";
    out.set = std::move(set);
    return out;
}

// ---------------------------------------------------------------------------
// Screening and upscaling

struct InitiationCandidate {
    int sample = -1;
    std::optional<CrackPolyline> crack;
};

/// Keeps candidates whose extracted polyline is at least `min_length` long
/// (same units as the polyline), preserving input order.
inline std::vector<InitiationCandidate> screen_initiations(
    const std::vector<InitiationCandidate>& results, double min_length) {
    require(min_length >= 0.0 && std::isfinite(min_length),
            "screen_initiations: min_length must be non-negative");
    std::vector<InitiationCandidate> out;
    for (const auto& r : results) {
        if (!r.crack || r.crack->points.size() < 2) continue;
        double len = 0.0;
        for (std::size_t k = 1; k < r.crack->points.size(); ++k)
            len += (r.crack->points[k] - r.crack->points[k - 1]).norm();
        if (len >= min_length) out.push_back(r);
    }
    return out;
}

/// Maps the longest crack of a finished set from the sub-model frame
/// [0, child_extent] into parent cell (i, j).  The map is affine and, because
/// sub-models tile parent cells, isotropic: angles are preserved.
inline CrackPolyline upscale_main_crack(const CrackSet& final_set, const Vec2& child_extent,
                                        const StructuredGrid& parent_grid, int ci, int cj,
                                        ScaleTag out_tag) {
    require(child_extent.x() > 0.0 && child_extent.y() > 0.0,
            "upscale_main_crack: child extent must be positive");
    require(ci >= 0 && ci < parent_grid.nx && cj >= 0 && cj < parent_grid.ny,
            "upscale_main_crack: parent cell outside the grid");
    if (final_set.cracks.empty()) fail("upscale_main_crack: no initiation (empty crack set)");

    double sx = parent_grid.hx() / child_extent.x();
    double sy = parent_grid.hy() / child_extent.y();
    require(nearly_equal(sx, sy, 1e-9),
            "upscale_main_crack: sub-model does not tile the parent cell isotropically");

    const XfemCrack* main = &final_set.cracks.front();
    for (const auto& c : final_set.cracks)
        if (c.arc_length() > main->arc_length()) main = &c;

    Vec2 cell_origin = parent_grid.element_origin(ci, cj);
    CrackPolyline out;
    out.scale_tag = out_tag;
    out.points.reserve(main->points.size());
    for (const Vec2& p : main->points)
        out.points.push_back(cell_origin + Vec2(p.x() * sx, p.y() * sy));
    return out;
}

}  // namespace mgsms
