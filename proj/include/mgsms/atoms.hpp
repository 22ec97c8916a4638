#pragma once

#include <cstdint>
#include <vector>

#include "mgsms/core.hpp"

namespace mgsms {

// Atom type codes used across generation, dynamics and dump files.
inline constexpr int kTypeFe = 1;
inline constexpr int kTypeC = 2;
inline constexpr double kMassFe = 55.845;  // amu
inline constexpr double kMassC = 12.011;   // amu

/// Orthogonal simulation box anchored at the origin. The plate problem is
/// free in x and y and periodic in z (thin-slab model).
struct SimulationBox {
    double lx = 0.0, ly = 0.0, lz = 0.0;  // Angstrom
    bool periodic_x = false;
    bool periodic_y = false;
    bool periodic_z = true;

    void validate() const {
        require(lx > 0.0 && ly > 0.0 && lz > 0.0, "box: edge lengths must be positive");
    }

    /// Minimum-image displacement a-b under the box periodicity.
    Vec3 min_image(const Vec3& a, const Vec3& b) const {
        Vec3 d = a - b;
        if (periodic_x) d.x() -= lx * std::round(d.x() / lx);
        if (periodic_y) d.y() -= ly * std::round(d.y() / ly);
        if (periodic_z) d.z() -= lz * std::round(d.z() / lz);
        return d;
    }

    /// Wraps a position into [0, L) along periodic axes only.
    Vec3 wrap(Vec3 p) const {
        auto wrap1 = [](double x, double l) {
            x -= l * std::floor(x / l);
            if (x >= l) x = 0.0;  // guard against x/l rounding to exactly 1
            return x;
        };
        if (periodic_x) p.x() = wrap1(p.x(), lx);
        if (periodic_y) p.y() = wrap1(p.y(), ly);
        if (periodic_z) p.z() = wrap1(p.z(), lz);
        return p;
    }

    bool inside(const Vec3& p) const {
        return p.x() >= 0.0 && p.x() <= lx && p.y() >= 0.0 && p.y() <= ly && p.z() >= 0.0 &&
               p.z() <= lz;
    }
};

/// Structure-of-arrays atom state. Velocities may be empty until dynamics
/// initializes them; grain ids are generation metadata (-1 = not assigned
/// to any lattice grain, e.g. randomly inserted interstitials).
struct AtomSystem {
    SimulationBox box;
    std::vector<int> id;          // 1-based, unique
    std::vector<int> type;        // kTypeFe / kTypeC
    std::vector<Vec3> pos;        // Angstrom
    std::vector<Vec3> vel;        // Angstrom/ps
    std::vector<int> grain;       // grain index or -1
    std::vector<double> mass_by_type = {0.0, kMassFe, kMassC};  // [type] -> amu

    std::size_t size() const { return pos.size(); }

    double mass(std::size_t i) const { return mass_by_type[static_cast<std::size_t>(type[i])]; }

    void validate() const {
        box.validate();
        std::size_t n = pos.size();
        require(id.size() == n && type.size() == n, "atom system: ragged arrays");
        require(vel.empty() || vel.size() == n, "atom system: ragged velocity array");
        require(grain.empty() || grain.size() == n, "atom system: ragged grain array");
        for (std::size_t i = 0; i < n; ++i) {
            require(type[i] >= 1 && type[i] < static_cast<int>(mass_by_type.size()),
                    "atom system: type out of range");
            require(std::isfinite(pos[i].x()) && std::isfinite(pos[i].y()) &&
                        std::isfinite(pos[i].z()),
                    "atom system: non-finite position");
        }
    }
};

}  // namespace mgsms
