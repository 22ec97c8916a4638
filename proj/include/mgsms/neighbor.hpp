#pragma once

#include <vector>

#include "mgsms/atoms.hpp"
#include "mgsms/core.hpp"

namespace mgsms {

/// Cell-list neighbor structure. `full[i]` holds every atom j != i within
/// cutoff + skin of atom i (minimum image on periodic axes); each pair
/// appears in both atoms' lists. The skin defers rebuilds until some atom
/// has moved more than skin/2 since the last build.
struct NeighborList {
    double cutoff = 0.0;
    double skin = 0.0;
    std::vector<std::vector<int>> full;
    std::vector<Vec3> ref_pos;

    void build(const AtomSystem& sys, double cutoff_, double skin_) {
        require(cutoff_ > 0.0 && skin_ >= 0.0, "neighbor list: cutoff must be positive");
        const SimulationBox& box = sys.box;
        double reach = cutoff_ + skin_;
        if (box.periodic_x && reach >= box.lx / 2.0)
            fail("neighbor list: cutoff+skin %.3f exceeds half box (x: %.3f)", reach, box.lx / 2.0);
        if (box.periodic_y && reach >= box.ly / 2.0)
            fail("neighbor list: cutoff+skin %.3f exceeds half box (y: %.3f)", reach, box.ly / 2.0);
        if (box.periodic_z && reach >= box.lz / 2.0)
            fail("neighbor list: cutoff+skin %.3f exceeds half box (z: %.3f)", reach, box.lz / 2.0);

        cutoff = cutoff_;
        skin = skin_;
        ref_pos = sys.pos;
        std::size_t n = sys.size();
        full.assign(n, {});
        if (n == 0) return;

        // Grid extents: free axes follow the actual atom spread (atoms may
        // leave the nominal box), periodic axes follow the box.
        Vec3 lo(0, 0, 0), hi(box.lx, box.ly, box.lz);
        for (const Vec3& p : sys.pos) {
            if (!box.periodic_x) {
                lo.x() = std::min(lo.x(), p.x());
                hi.x() = std::max(hi.x(), p.x());
            }
            if (!box.periodic_y) {
                lo.y() = std::min(lo.y(), p.y());
                hi.y() = std::max(hi.y(), p.y());
            }
            if (!box.periodic_z) {
                lo.z() = std::min(lo.z(), p.z());
                hi.z() = std::max(hi.z(), p.z());
            }
        }

        auto ncells = [&](double l) { return std::max(1, static_cast<int>(l / reach)); };
        int nx = ncells(hi.x() - lo.x()), ny = ncells(hi.y() - lo.y()),
            nz = ncells(hi.z() - lo.z());
        auto cell_of = [&](const Vec3& p) {
            auto idx = [](double v, double l0, double l1, int n) {
                int c = static_cast<int>((v - l0) / (l1 - l0) * n);
                return std::clamp(c, 0, n - 1);
            };
            return std::array<int, 3>{idx(p.x(), lo.x(), hi.x(), nx), idx(p.y(), lo.y(), hi.y(), ny),
                                      idx(p.z(), lo.z(), hi.z(), nz)};
        };
        std::vector<std::vector<int>> cells(static_cast<std::size_t>(nx) * ny * nz);
        auto flat = [&](int i, int j, int k) {
            return (static_cast<std::size_t>(k) * ny + j) * nx + i;
        };
        for (std::size_t a = 0; a < n; ++a) {
            auto [i, j, k] = cell_of(sys.pos[a]);
            cells[flat(i, j, k)].push_back(static_cast<int>(a));
        }

        double r2 = reach * reach;
        std::vector<std::size_t> scan;  // deduplicated neighbor cells
        for (std::size_t a = 0; a < n; ++a) {
            auto [ci, cj, ck] = cell_of(sys.pos[a]);
            scan.clear();
            for (int dk = -1; dk <= 1; ++dk)
                for (int dj = -1; dj <= 1; ++dj)
                    for (int di = -1; di <= 1; ++di) {
                        int i = ci + di, j = cj + dj, k = ck + dk;
                        if (box.periodic_x)
                            i = ((i % nx) + nx) % nx;
                        else if (i < 0 || i >= nx)
                            continue;
                        if (box.periodic_y)
                            j = ((j % ny) + ny) % ny;
                        else if (j < 0 || j >= ny)
                            continue;
                        if (box.periodic_z)
                            k = ((k % nz) + nz) % nz;
                        else if (k < 0 || k >= nz)
                            continue;
                        std::size_t c = flat(i, j, k);
                        if (std::find(scan.begin(), scan.end(), c) == scan.end()) scan.push_back(c);
                    }
            auto& list = full[a];
            for (std::size_t c : scan)
                for (int b : cells[c]) {
                    if (b == static_cast<int>(a)) continue;
                    if (box.min_image(sys.pos[a], sys.pos[b]).squaredNorm() <= r2)
                        list.push_back(b);
                }
        }
    }

    /// True when some atom has drifted more than skin/2 since the build.
    bool needs_rebuild(const AtomSystem& sys) const {
        if (sys.size() != ref_pos.size()) return true;
        double limit2 = (skin / 2.0) * (skin / 2.0);
        for (std::size_t i = 0; i < ref_pos.size(); ++i)
            if (sys.box.min_image(sys.pos[i], ref_pos[i]).squaredNorm() > limit2) return true;
        return false;
    }
};

}  // namespace mgsms
