#pragma once
// Image-recognition crack extraction from MD dump frames.
//
// The chain: per-atom coordination counts -> select under-coordinated atoms
// away from the free boundaries -> rasterise to a binary image -> dilate by
// the atom footprint -> median denoise -> skeletonise -> trace the longest
// path through the largest skeleton component -> map pixels back to physical
// coordinates.  Every step is deterministic; there is no renderer in the
// loop.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "mgsms/core.hpp"
#include "mgsms/dump.hpp"
#include "mgsms/neighbor.hpp"

namespace mgsms {

// ---------------------------------------------------------------------------
// Raster image

/// Binary image tied to a physical window: pixel (0,0) covers the square with
/// corner (origin_x, origin_y); row 0 is at the BOTTOM so that y grows upward
/// in both pixel and physical space.
struct RasterImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data;  // row-major, values 0/1
    double extent_x = 0.0, extent_y = 0.0;
    double origin_x = 0.0, origin_y = 0.0;

    RasterImage() = default;
    RasterImage(int w, int h) : width(w), height(h) {
        require(w >= 1 && h >= 1, "raster image: dimensions must be at least 1x1");
        data.assign(std::size_t(w) * std::size_t(h), 0);
    }

    std::uint8_t& at(int x, int y) { return data[std::size_t(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return data[std::size_t(y) * width + x]; }
    bool inside(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }

    std::size_t count_set() const {
        std::size_t n = 0;
        for (std::uint8_t v : data) n += (v != 0);
        return n;
    }

    /// Physical position of a (possibly fractional) pixel coordinate.
    Vec2 to_physical(double px, double py) const {
        return Vec2(px * (extent_x / width) + origin_x, py * (extent_y / height) + origin_y);
    }
};

// ---------------------------------------------------------------------------
// Coordination analysis

/// Number of neighbours within `cutoff` (inclusive) for every atom, honouring
/// the frame's periodic flags.
inline std::vector<int> coordination(const DumpFrame& frame, double cutoff) {
    require(cutoff > 0.0, "coordination: cutoff must be positive");
    AtomSystem sys;
    sys.box = frame.box;
    sys.pos = frame.pos;
    NeighborList nl;
    nl.build(sys, cutoff, 0.0);
    std::vector<int> count(frame.size());
    for (std::size_t i = 0; i < frame.size(); ++i) count[i] = static_cast<int>(nl.full[i].size());
    return count;
}

/// Indices of atoms with coordination strictly below `threshold` that also lie
/// at least `margin` away from every free (non-periodic) box face.  The margin
/// removes the free-surface skin whose coordination is low for geometric
/// reasons unrelated to damage.
inline std::vector<int> select_crack_atoms(const DumpFrame& frame, const std::vector<int>& coord,
                                           int threshold, double margin) {
    require(threshold > 0, "select_crack_atoms: threshold must be positive");
    require(margin >= 0.0, "select_crack_atoms: margin must be non-negative");
    if (coord.size() != frame.size())
        fail("select_crack_atoms: %zu coordination entries for %zu atoms", coord.size(), frame.size());
    const SimulationBox& b = frame.box;
    if (!b.periodic_x && 2.0 * margin >= b.lx)
        fail("select_crack_atoms: margin %g covers the whole box (lx = %g)", margin, b.lx);
    if (!b.periodic_y && 2.0 * margin >= b.ly)
        fail("select_crack_atoms: margin %g covers the whole box (ly = %g)", margin, b.ly);
    if (!b.periodic_z && 2.0 * margin >= b.lz)
        fail("select_crack_atoms: margin %g covers the whole box (lz = %g)", margin, b.lz);

    std::vector<int> keep;
    for (std::size_t i = 0; i < frame.size(); ++i) {
        if (coord[i] >= threshold) continue;
        const Vec3& p = frame.pos[i];
        if (!b.periodic_x && (p.x() < margin || p.x() > b.lx - margin)) continue;
        if (!b.periodic_y && (p.y() < margin || p.y() > b.ly - margin)) continue;
        if (!b.periodic_z && (p.z() < margin || p.z() > b.lz - margin)) continue;
        keep.push_back(static_cast<int>(i));
    }
    return keep;
}

/// Most frequent coordination count — on a mostly intact crystal this is the
/// bulk value, which anchors relative selection thresholds.
inline int modal_coordination(const std::vector<int>& coord) {
    require(!coord.empty(), "modal_coordination: empty input");
    int hi = *std::max_element(coord.begin(), coord.end());
    std::vector<int> histogram(static_cast<std::size_t>(hi) + 1, 0);
    for (int c : coord) ++histogram[static_cast<std::size_t>(c)];
    int best = 0;
    for (int c = 0; c <= hi; ++c)
        if (histogram[static_cast<std::size_t>(c)] > histogram[static_cast<std::size_t>(best)]) best = c;
    return best;
}

// ---------------------------------------------------------------------------
// Rasterisation and morphology

/// Project the selected atoms onto the x-y plane: pixel = floor(pos/extent*n),
/// set to 1 iff at least one atom lands in it.  The image covers the whole box
/// cross-section with origin (0,0).
inline RasterImage rasterize(const DumpFrame& frame, const std::vector<int>& subset, int nx, int ny) {
    RasterImage img(nx, ny);
    img.extent_x = frame.box.lx;
    img.extent_y = frame.box.ly;
    for (int i : subset) {
        if (i < 0 || static_cast<std::size_t>(i) >= frame.size())
            fail("rasterize: atom index %d out of range (%zu atoms)", i, frame.size());
        int ix = static_cast<int>(std::floor(frame.pos[i].x() / frame.box.lx * nx));
        int iy = static_cast<int>(std::floor(frame.pos[i].y() / frame.box.ly * ny));
        if (img.inside(ix, iy)) img.at(ix, iy) = 1;
    }
    return img;
}

/// Euclidean disk dilation by `radius` pixels.  A point-mapped atom cloud is
/// sparse (lattice columns are several pixels apart at the default image
/// size); growing each hit by the physical atom footprint produces a solid
/// region, the deterministic counterpart of rendering atoms as finite disks.
inline RasterImage dilate(const RasterImage& img, int radius) {
    require(radius >= 0, "dilate: radius must be non-negative");
    if (radius == 0) return img;
    std::vector<std::array<int, 2>> offsets;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            if (dx * dx + dy * dy <= radius * radius) offsets.push_back({dx, dy});
    RasterImage out = img;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            if (!img.at(x, y)) continue;
            for (const auto& d : offsets)
                if (out.inside(x + d[0], y + d[1])) out.at(x + d[0], y + d[1]) = 1;
        }
    return out;
}

/// Set every background region that does not reach the image border to 1.
/// The selected-atom band encloses the open crack core; filling it makes the
/// band simply connected, so thinning yields a line instead of a ring.
inline RasterImage fill_enclosed(const RasterImage& img) {
    std::vector<char> outside(img.data.size(), 0);
    std::vector<int> stack;
    auto push = [&](int x, int y) {
        if (!img.inside(x, y) || img.at(x, y)) return;
        int idx = y * img.width + x;
        if (!outside[static_cast<std::size_t>(idx)]) {
            outside[static_cast<std::size_t>(idx)] = 1;
            stack.push_back(idx);
        }
    };
    for (int x = 0; x < img.width; ++x) {
        push(x, 0);
        push(x, img.height - 1);
    }
    for (int y = 0; y < img.height; ++y) {
        push(0, y);
        push(img.width - 1, y);
    }
    while (!stack.empty()) {
        int cur = stack.back();
        stack.pop_back();
        int cx = cur % img.width, cy = cur / img.width;
        push(cx + 1, cy);
        push(cx - 1, cy);
        push(cx, cy + 1);
        push(cx, cy - 1);
    }
    RasterImage out = img;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        if (!out.data[i] && !outside[i]) out.data[i] = 1;
    return out;
}

/// Median filter with an odd square window; borders are handled by clamping
/// the sample coordinates (edge replication).  On a binary image this is a
/// majority vote.
inline RasterImage denoise_median(const RasterImage& img, int window) {
    require(window >= 3 && window % 2 == 1, "denoise_median: window must be odd and >= 3");
    RasterImage out = img;
    int r = window / 2;
    int majority = (window * window) / 2 + 1;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            int ones = 0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    int sx = std::clamp(x + dx, 0, img.width - 1);
                    int sy = std::clamp(y + dy, 0, img.height - 1);
                    ones += img.at(sx, sy);
                }
            out.at(x, y) = (ones >= majority) ? 1 : 0;
        }
    return out;
}

namespace crack_detail {

// Ring neighbours in cyclic order starting straight up:
// N, NE, E, SE, S, SW, W, NW.  Off-image samples read as 0.
inline void ring(const RasterImage& img, int x, int y, std::array<int, 8>& p) {
    static constexpr int dx[8] = {0, 1, 1, 1, 0, -1, -1, -1};
    static constexpr int dy[8] = {1, 1, 0, -1, -1, -1, 0, 1};
    for (int k = 0; k < 8; ++k) {
        int sx = x + dx[k], sy = y + dy[k];
        p[k] = img.inside(sx, sy) ? img.at(sx, sy) : 0;
    }
}

}  // namespace crack_detail

/// Zhang-Suen thinning to a 1-pixel-wide, 8-connected skeleton.  Each
/// subiteration screens its candidates against a frozen copy of the image
/// (the classic parallel rules, so opposite borders erode in alternating
/// subiterations), then removes them one at a time, re-checking only the
/// connectivity guard (exactly one foreground arc in the ring, 2 <= B <= 6)
/// against the current image.  A pixel passing that guard is 8-simple, so a
/// deletion can neither split a component nor erase its last two pixels.
/// The loop runs to a fixed point, which makes the operation idempotent.
inline RasterImage skeletonize(RasterImage img) {
    for (std::uint8_t v : img.data)
        if (v > 1) fail("skeletonize: image is not binary");
    auto arc_count = [](const std::array<int, 8>& p) {
        int a = 0;
        for (int k = 0; k < 8; ++k)
            if (p[k] == 0 && p[(k + 1) % 8] == 1) ++a;
        return a;
    };
    std::array<int, 8> p{};
    std::vector<std::array<int, 2>> candidates;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int pass = 0; pass < 2; ++pass) {
            candidates.clear();
            for (int y = 0; y < img.height; ++y)
                for (int x = 0; x < img.width; ++x) {
                    if (!img.at(x, y)) continue;
                    crack_detail::ring(img, x, y, p);
                    int b = 0;
                    for (int v : p) b += v;
                    if (b < 2 || b > 6 || arc_count(p) != 1) continue;
                    int n = p[0], e = p[2], s = p[4], w = p[6];
                    bool ok = (pass == 0) ? (n * e * s == 0 && e * s * w == 0)
                                          : (n * e * w == 0 && n * s * w == 0);
                    if (ok) candidates.push_back({x, y});
                }
            for (const auto& c : candidates) {
                crack_detail::ring(img, c[0], c[1], p);
                int b = 0;
                for (int v : p) b += v;
                if (b < 2 || b > 6 || arc_count(p) != 1) continue;
                img.at(c[0], c[1]) = 0;
                changed = true;
            }
        }
    }
    return img;
}

/// Remove skeleton branches shorter than `max_len` that dead-end off a
/// junction — the short diagonal whiskers thinning grows into sharp band
/// corners.  A branch is walked from its endpoint through degree-2 pixels;
/// it is deleted only when a junction (degree >= 3) is reached within the
/// budget, so a free-standing line is never shortened.
inline RasterImage prune_spurs(RasterImage img, int max_len) {
    require(max_len >= 0, "prune_spurs: length must be non-negative");
    if (max_len == 0) return img;
    // Circularly consecutive ring: N, NE, E, SE, S, SW, W, NW.
    static constexpr int dx[8] = {0, 1, 1, 1, 0, -1, -1, -1};
    static constexpr int dy[8] = {1, 1, 0, -1, -1, -1, 0, 1};
    std::vector<std::uint8_t> on_walk(img.data.size(), 0);
    auto degree = [&](int x, int y) {
        int n = 0;
        for (int k = 0; k < 8; ++k) {
            int sx = x + dx[k], sy = y + dy[k];
            if (img.inside(sx, sy) && img.at(sx, sy)) ++n;
        }
        return n;
    };
    bool changed = true;
    while (changed) {
        changed = false;
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                if (!img.at(x, y) || degree(x, y) != 1) continue;
                // Walk inward from the endpoint.  The junction test counts
                // circular runs of lit ring neighbours with the pixels we
                // already walked masked out: a line interior shows one run, a
                // fork two or more.  This keeps the branch's base pixel in the
                // spur even when it touches the through-line diagonally.
                std::vector<std::array<int, 2>> walk;
                std::array<int, 2> cur = {x, y};
                bool junction = false;
                for (;;) {
                    bool lit[8];
                    int count = 0;
                    for (int k = 0; k < 8; ++k) {
                        int sx = cur[0] + dx[k], sy = cur[1] + dy[k];
                        lit[k] = img.inside(sx, sy) && img.at(sx, sy) &&
                                 !on_walk[static_cast<std::size_t>(sy) * img.width + sx];
                        if (lit[k]) ++count;
                    }
                    if (count == 0) break;  // a bare segment: keep it
                    int runs = 0;
                    for (int k = 0; k < 8; ++k) runs += (!lit[k] && lit[(k + 1) % 8]) ? 1 : 0;
                    if (runs >= 2) {
                        junction = static_cast<int>(walk.size()) <= max_len;
                        break;
                    }
                    walk.push_back(cur);
                    on_walk[static_cast<std::size_t>(cur[1]) * img.width + cur[0]] = 1;
                    if (static_cast<int>(walk.size()) > max_len) break;  // too long: keep
                    int next = -1;
                    for (int k = 0; k < 8 && next < 0; k += 2)
                        if (lit[k]) next = k;  // prefer the orthogonal neighbour
                    for (int k = 1; k < 8 && next < 0; k += 2)
                        if (lit[k]) next = k;
                    cur = {cur[0] + dx[next], cur[1] + dy[next]};
                }
                for (const auto& p : walk) {
                    on_walk[static_cast<std::size_t>(p[1]) * img.width + p[0]] = 0;
                    if (junction) img.at(p[0], p[1]) = 0;
                }
                changed = changed || (junction && !walk.empty());
            }
    }
    return img;
}

// ---------------------------------------------------------------------------
// Skeleton tracing

namespace crack_detail {

struct Components {
    std::vector<int> label;  // -1 for background
    std::vector<std::size_t> size;
};

inline Components label_components(const RasterImage& img) {
    Components c;
    c.label.assign(img.data.size(), -1);
    static constexpr int dx[8] = {0, 1, 1, 1, 0, -1, -1, -1};
    static constexpr int dy[8] = {1, 1, 0, -1, -1, -1, 0, 1};
    std::vector<int> stack;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            int idx = y * img.width + x;
            if (!img.data[static_cast<std::size_t>(idx)] || c.label[static_cast<std::size_t>(idx)] >= 0) continue;
            int id = static_cast<int>(c.size.size());
            c.size.push_back(0);
            stack.assign(1, idx);
            c.label[static_cast<std::size_t>(idx)] = id;
            while (!stack.empty()) {
                int cur = stack.back();
                stack.pop_back();
                ++c.size[static_cast<std::size_t>(id)];
                int cx = cur % img.width, cy = cur / img.width;
                for (int k = 0; k < 8; ++k) {
                    int sx = cx + dx[k], sy = cy + dy[k];
                    if (!img.inside(sx, sy) || !img.at(sx, sy)) continue;
                    int sidx = sy * img.width + sx;
                    if (c.label[static_cast<std::size_t>(sidx)] >= 0) continue;
                    c.label[static_cast<std::size_t>(sidx)] = id;
                    stack.push_back(sidx);
                }
            }
        }
    return c;
}

// Single-source geodesic distances within one labelled component; 8-connected
// moves cost 1 or sqrt(2).
struct Geodesic {
    std::vector<double> dist;
    std::vector<int> prev;
};

inline Geodesic geodesic_from(const RasterImage& img, const std::vector<int>& label, int id, int source) {
    Geodesic g;
    g.dist.assign(img.data.size(), std::numeric_limits<double>::infinity());
    g.prev.assign(img.data.size(), -1);
    static constexpr int dx[8] = {0, 1, 1, 1, 0, -1, -1, -1};
    static constexpr int dy[8] = {1, 1, 0, -1, -1, -1, 0, 1};
    static const double step[8] = {1, std::sqrt(2.0), 1, std::sqrt(2.0), 1, std::sqrt(2.0), 1, std::sqrt(2.0)};
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    g.dist[static_cast<std::size_t>(source)] = 0.0;
    heap.emplace(0.0, source);
    while (!heap.empty()) {
        auto [d, cur] = heap.top();
        heap.pop();
        if (d > g.dist[static_cast<std::size_t>(cur)]) continue;
        int cx = cur % img.width, cy = cur / img.width;
        for (int k = 0; k < 8; ++k) {
            int sx = cx + dx[k], sy = cy + dy[k];
            if (!img.inside(sx, sy)) continue;
            int sidx = sy * img.width + sx;
            if (label[static_cast<std::size_t>(sidx)] != id) continue;
            double nd = d + step[k];
            if (nd < g.dist[static_cast<std::size_t>(sidx)] - 1e-12) {
                g.dist[static_cast<std::size_t>(sidx)] = nd;
                g.prev[static_cast<std::size_t>(sidx)] = cur;
                heap.emplace(nd, sidx);
            }
        }
    }
    return g;
}

inline int farthest_in(const Geodesic& g, const std::vector<int>& candidates) {
    int best = -1;
    double best_d = -1.0;
    for (int c : candidates) {
        double d = g.dist[static_cast<std::size_t>(c)];
        if (std::isfinite(d) && (d > best_d + 1e-12 || (std::abs(d - best_d) <= 1e-12 && (best < 0 || c < best)))) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

}  // namespace crack_detail

/// Trace the largest skeleton component end to end and resample the trace at
/// `samples` equal arc-length stations (for a mostly horizontal crack this is
/// also an approximately even spacing in x).  `trim` pixels of arc are cut
/// from both ends first when the trace is long enough — the last pixels of a
/// thinned band curl toward its corners and misstate the tip.  Returns
/// fractional pixel coordinates ordered so that net x increases;
/// std::nullopt when the image holds no trace worth reporting (empty, or a
/// single isolated pixel).
inline std::optional<std::vector<Vec2>> extract_polyline(const RasterImage& skeleton, int samples,
                                                         double trim = 0.0) {
    require(samples >= 2, "extract_polyline: need at least two sample points");
    require(trim >= 0.0, "extract_polyline: trim must be non-negative");
    using namespace crack_detail;
    Components comps = label_components(skeleton);
    if (comps.size.empty()) return std::nullopt;
    int id = 0;
    for (int c = 1; c < static_cast<int>(comps.size.size()); ++c)
        if (comps.size[static_cast<std::size_t>(c)] > comps.size[static_cast<std::size_t>(id)]) id = c;
    if (comps.size[static_cast<std::size_t>(id)] < 2) return std::nullopt;

    std::vector<int> members;
    for (std::size_t i = 0; i < comps.label.size(); ++i)
        if (comps.label[i] == id) members.push_back(static_cast<int>(i));

    // End pixels have exactly one neighbour inside the component.  A closed
    // loop has none; fall back to a two-sweep diameter estimate there.
    std::vector<int> endpoints;
    static constexpr int dx[8] = {0, 1, 1, 1, 0, -1, -1, -1};
    static constexpr int dy[8] = {1, 1, 0, -1, -1, -1, 0, 1};
    for (int idx : members) {
        int cx = idx % skeleton.width, cy = idx / skeleton.width;
        int deg = 0;
        for (int k = 0; k < 8; ++k) {
            int sx = cx + dx[k], sy = cy + dy[k];
            if (skeleton.inside(sx, sy) && comps.label[static_cast<std::size_t>(sy * skeleton.width + sx)] == id) ++deg;
        }
        if (deg == 1) endpoints.push_back(idx);
    }

    int from = -1, to = -1;
    if (endpoints.empty()) {
        Geodesic g0 = geodesic_from(skeleton, comps.label, id, members.front());
        from = farthest_in(g0, members);
        Geodesic g1 = geodesic_from(skeleton, comps.label, id, from);
        to = farthest_in(g1, members);
    } else {
        double best = -1.0;
        for (int e : endpoints) {
            Geodesic g = geodesic_from(skeleton, comps.label, id, e);
            int f = farthest_in(g, endpoints);
            if (f >= 0 && g.dist[static_cast<std::size_t>(f)] > best + 1e-12) {
                best = g.dist[static_cast<std::size_t>(f)];
                from = e;
                to = f;
            }
        }
    }
    if (from < 0 || to < 0 || from == to) return std::nullopt;

    Geodesic g = geodesic_from(skeleton, comps.label, id, from);
    std::vector<Vec2> path;
    for (int cur = to; cur >= 0; cur = g.prev[static_cast<std::size_t>(cur)])
        path.emplace_back(cur % skeleton.width, cur / skeleton.width);
    std::reverse(path.begin(), path.end());
    if (path.back().x() < path.front().x()) std::reverse(path.begin(), path.end());

    std::vector<double> cum(path.size(), 0.0);
    for (std::size_t k = 1; k < path.size(); ++k) cum[k] = cum[k - 1] + (path[k] - path[k - 1]).norm();
    double total = cum.back();
    if (total <= 0.0) return std::nullopt;
    double lo = 0.0, span_len = total;
    if (2.0 * trim < total) {
        lo = trim;
        span_len = total - 2.0 * trim;
    }

    std::vector<Vec2> out(static_cast<std::size_t>(samples));
    std::size_t seg = 0;
    for (int k = 0; k < samples; ++k) {
        double target = lo + span_len * k / (samples - 1);
        while (seg + 1 < cum.size() && cum[seg + 1] < target) ++seg;
        double span = cum[seg + 1] - cum[seg];
        double t = (span > 0.0) ? (target - cum[seg]) / span : 0.0;
        out[static_cast<std::size_t>(k)] = path[seg] + t * (path[seg + 1] - path[seg]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Physical mapping and crack CSV

enum class ScaleTag { micro, meso, macro };

inline const char* to_string(ScaleTag tag) {
    switch (tag) {
        case ScaleTag::micro: return "micro";
        case ScaleTag::meso: return "meso";
        case ScaleTag::macro: return "macro";
    }
    fail("unknown scale tag");
}

inline ScaleTag scale_from_string(const std::string& s) {
    if (s == "micro") return ScaleTag::micro;
    if (s == "meso") return ScaleTag::meso;
    if (s == "macro") return ScaleTag::macro;
    fail("unknown scale tag '%s' (expected micro, meso or macro)", s.c_str());
}

/// Crack path in the physical units of its scale.
struct CrackPolyline {
    std::vector<Vec2> points;
    ScaleTag scale_tag = ScaleTag::micro;
};

/// Map fractional pixel coordinates to physical ones:
///   x = x_r * (l_x / n_x) + x0,   y = y_r * (l_y / n_y) + y0.
inline CrackPolyline pixel_to_physical(const std::vector<Vec2>& pixels, const RasterImage& geometry,
                                       ScaleTag tag) {
    require(pixels.size() >= 2, "pixel_to_physical: a polyline needs at least two points");
    require(geometry.width >= 1 && geometry.height >= 1, "pixel_to_physical: bad image geometry");
    require(geometry.extent_x > 0.0 && geometry.extent_y > 0.0,
            "pixel_to_physical: image has no physical extent");
    CrackPolyline out;
    out.scale_tag = tag;
    out.points.reserve(pixels.size());
    for (const Vec2& p : pixels) {
        Vec2 q = geometry.to_physical(p.x(), p.y());
        if (!out.points.empty() && out.points.back() == q)
            fail("pixel_to_physical: repeated point at (%g, %g)", q.x(), q.y());
        out.points.push_back(q);
    }
    return out;
}

/// CSV layout: one row per point, `index,x,y,scale`, with index restarting at
/// 1 on each new crack — that restart is the crack separator on read.
inline void write_crack_csv(const std::string& path, const std::vector<CrackPolyline>& cracks) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) fail("cannot open '%s' for writing", path.c_str());
    std::fprintf(f, "index,x,y,scale\n");
    for (const CrackPolyline& c : cracks) {
        for (std::size_t k = 0; k < c.points.size(); ++k)
            std::fprintf(f, "%zu,%.17g,%.17g,%s\n", k + 1, c.points[k].x(), c.points[k].y(),
                         to_string(c.scale_tag));
    }
    if (std::fclose(f) != 0) fail("failed to write '%s'", path.c_str());
}

inline std::vector<CrackPolyline> read_crack_csv(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "r");
    if (!f) fail("cannot open '%s'", path.c_str());
    std::vector<CrackPolyline> cracks;
    char line[512];
    int line_no = 0;
    long prev_index = 0;
    while (std::fgets(line, sizeof line, f)) {
        ++line_no;
        if (line_no == 1) continue;  // header
        long index = 0;
        double x = 0.0, y = 0.0;
        char tag[16] = {0};
        if (std::sscanf(line, "%ld,%lf,%lf,%15s", &index, &x, &y, tag) != 4) {
            std::fclose(f);
            fail("%s:%d: malformed crack CSV row", path.c_str(), line_no);
        }
        if (index == 1) {
            cracks.emplace_back();
            cracks.back().scale_tag = scale_from_string(tag);
        } else if (cracks.empty() || index != prev_index + 1) {
            std::fclose(f);
            fail("%s:%d: point index %ld does not continue the previous crack", path.c_str(), line_no,
                 index);
        } else if (scale_from_string(tag) != cracks.back().scale_tag) {
            std::fclose(f);
            fail("%s:%d: scale tag changes mid-crack", path.c_str(), line_no);
        }
        cracks.back().points.emplace_back(x, y);
        prev_index = index;
    }
    std::fclose(f);
    for (const CrackPolyline& c : cracks)
        if (c.points.size() < 2) fail("%s: crack with fewer than two points", path.c_str());
    return cracks;
}

// ---------------------------------------------------------------------------
// One-call front end

struct ExtractParams {
    double cutoff = 7.6;              // coordination radius
    int threshold = 115;              // absolute coordination threshold
    double relative_threshold = 0.0;  // if > 0, threshold = fraction * modal coordination
    double margin = 10.0;             // free-boundary crop
    int image_width = 330;
    int image_height = 330;
    int dilate_px = 4;                // atom footprint when rasterising (the
                                      // nearest-neighbour spacing at 330 px / 200 units)
    bool fill_enclosed_regions = true;
    int median_window = 3;
    int prune_px = 16;                // spur-pruning budget after thinning
    double trim_px = 9.0;             // arc trimmed from both trace ends
    int samples = 10;

    void validate() const {
        require(cutoff > 0.0, "extract params: cutoff must be positive");
        require(relative_threshold > 0.0 ? relative_threshold < 1.0 : threshold > 0,
                "extract params: need a positive threshold or a relative fraction in (0,1)");
        require(margin >= 0.0, "extract params: margin must be non-negative");
        require(image_width >= 1 && image_height >= 1, "extract params: image size must be positive");
        require(dilate_px >= 0, "extract params: dilation radius must be non-negative");
        require(median_window >= 3 && median_window % 2 == 1,
                "extract params: median window must be odd and >= 3");
        require(prune_px >= 0, "extract params: prune length must be non-negative");
        require(trim_px >= 0.0, "extract params: trim must be non-negative");
        require(samples >= 2, "extract params: need at least two sample points");
    }
};

struct ExtractResult {
    std::vector<int> coordination;
    int threshold_used = 0;
    std::vector<int> selected;
    RasterImage raw;
    RasterImage denoised;
    RasterImage skeleton;
    std::optional<std::vector<Vec2>> pixels;  // resampled trace, pixel coords
    std::optional<CrackPolyline> crack;       // same trace in physical coords
};

inline ExtractResult extract_crack(const DumpFrame& frame, const ExtractParams& prm,
                                   ScaleTag tag = ScaleTag::micro) {
    prm.validate();
    ExtractResult r;
    r.coordination = coordination(frame, prm.cutoff);
    r.threshold_used = prm.relative_threshold > 0.0
                           ? std::max(1, static_cast<int>(std::floor(prm.relative_threshold *
                                                                     modal_coordination(r.coordination))))
                           : prm.threshold;
    r.selected = select_crack_atoms(frame, r.coordination, r.threshold_used, prm.margin);
    r.raw = rasterize(frame, r.selected, prm.image_width, prm.image_height);
    r.denoised = denoise_median(dilate(r.raw, prm.dilate_px), prm.median_window);
    if (prm.fill_enclosed_regions) r.denoised = fill_enclosed(r.denoised);
    r.skeleton = prune_spurs(skeletonize(r.denoised), prm.prune_px);
    r.pixels = extract_polyline(r.skeleton, prm.samples, prm.trim_px);
    if (r.pixels) r.crack = pixel_to_physical(*r.pixels, r.skeleton, tag);
    return r;
}

}  // namespace mgsms
