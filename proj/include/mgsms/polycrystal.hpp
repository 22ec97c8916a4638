#pragma once

#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Geometry>

#include "mgsms/atoms.hpp"
#include "mgsms/core.hpp"

namespace mgsms {

/// Uniformly distributed random rotation (Shoemake's subgroup algorithm:
/// three uniform variates map to a uniform quaternion on S^3).
inline Eigen::Quaterniond random_rotation(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double u1 = unit(rng), u2 = unit(rng), u3 = unit(rng);
    double s1 = std::sqrt(1.0 - u1), s2 = std::sqrt(u1);
    double a2 = 2.0 * M_PI * u2, a3 = 2.0 * M_PI * u3;
    return Eigen::Quaterniond(s2 * std::cos(a3), s1 * std::sin(a2), s1 * std::cos(a2),
                              s2 * std::sin(a3));
}

/// Index of the Voronoi seed owning point p under the box metric
/// (minimum-image along periodic axes). Distance ties go to the lower index.
inline int voronoi_owner(const Vec3& p, const std::vector<Vec3>& seeds, const SimulationBox& box) {
    require(!seeds.empty(), "voronoi_owner: no seeds");
    int best = 0;
    double best_d2 = box.min_image(p, seeds[0]).squaredNorm();
    for (std::size_t s = 1; s < seeds.size(); ++s) {
        double d2 = box.min_image(p, seeds[s]).squaredNorm();
        if (d2 < best_d2) {
            best_d2 = d2;
            best = static_cast<int>(s);
        }
    }
    return best;
}

/// Distance from p to the nearest Voronoi cell face. Periodic axes are
/// handled by enumerating explicit seed images (the owner's own images
/// count: they bound the cell too). For each image s of a seed other than
/// the owner's nearest image s_a, the bisector-plane distance is
/// (|p-s|^2 - |p-s_a|^2) / (2 |s-s_a|); the cell face distance is the
/// minimum over all of them.
inline double distance_to_voronoi_face(const Vec3& p, const std::vector<Vec3>& seeds,
                                       const SimulationBox& box) {
    require(!seeds.empty(), "distance_to_voronoi_face: no seeds");
    int a = voronoi_owner(p, seeds, box);
    Vec3 sa = p - box.min_image(p, seeds[a]);  // owner's image nearest to p
    double da2 = (p - sa).squaredNorm();

    auto images = [&](bool periodic) {
        return periodic ? std::vector<int>{-2, -1, 0, 1, 2} : std::vector<int>{0};
    };
    std::vector<int> mx = images(box.periodic_x), my = images(box.periodic_y),
                     mz = images(box.periodic_z);

    double best = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < seeds.size(); ++b)
        for (int ix : mx)
            for (int iy : my)
                for (int iz : mz) {
                    Vec3 s = seeds[b] + Vec3(ix * box.lx, iy * box.ly, iz * box.lz);
                    double sep = (s - sa).norm();
                    if (sep < 1e-12) continue;  // the owner image itself
                    double db2 = (p - s).squaredNorm();
                    best = std::min(best, (db2 - da2) / (2.0 * sep));
                }
    return best;
}

enum class CarbonMode {
    interstitial_fraction,    // fraction of host count added at octahedral sites
    substitute_plus_fixed,    // fraction substituted in place + fixed random insertions
};

struct PolycrystalSpec {
    SimulationBox box{200.0, 200.0, 20.0, false, false, true};
    int n_grains = 12;
    double lattice_const = 2.856;       // Angstrom, BCC
    double vacancy_fraction = 0.002;
    CarbonMode carbon_mode = CarbonMode::interstitial_fraction;
    double carbon_fraction = 0.002;     // interstitial_fraction mode
    double substitute_fraction = 0.001; // substitute_plus_fixed mode
    int fixed_interstitials = 68;       // substitute_plus_fixed mode
    double dedup_factor = 0.7;          // grain-boundary overlap cut, x nearest-neighbor dist
    std::uint64_t seed = 0;

    double nn_distance() const { return std::sqrt(3.0) / 2.0 * lattice_const; }

    void validate() const {
        box.validate();
        require(n_grains >= 1, "polycrystal: n_grains must be >= 1");
        require(lattice_const > 0.0, "polycrystal: lattice constant must be positive");
        require(vacancy_fraction >= 0.0 && vacancy_fraction < 1.0,
                "polycrystal: vacancy fraction out of range");
        require(carbon_fraction >= 0.0 && carbon_fraction < 1.0,
                "polycrystal: carbon fraction out of range");
        require(dedup_factor > 0.0 && dedup_factor < 1.0,
                "polycrystal: dedup factor must lie in (0, 1)");
    }
};

struct Polycrystal {
    AtomSystem atoms;
    std::vector<Vec3> seeds;                    // Voronoi seed per grain
    std::vector<Eigen::Quaterniond> orientations;
};

namespace poly_detail {

/// Uniform-grid spatial hash used for the overlap checks during generation.
/// Only z is treated periodically (matching the box).
class InsertionGrid {
public:
    InsertionGrid(const SimulationBox& box, double cell)
        : box_(box),
          nx_(std::max(1, static_cast<int>(box.lx / cell))),
          ny_(std::max(1, static_cast<int>(box.ly / cell))),
          nz_(std::max(1, static_cast<int>(box.lz / cell))),
          cells_(static_cast<std::size_t>(nx_) * ny_ * nz_) {}

    void insert(const Vec3& p, int index) { cells_[cell_of(p)].push_back({p, index}); }

    /// True when some stored point lies within r of p (minimum image in z).
    bool any_within(const Vec3& p, double r) const {
        double r2 = r * r;
        auto [ci, cj, ck] = coords(p);
        int reach_x = span(box_.lx, nx_, r), reach_y = span(box_.ly, ny_, r),
            reach_z = span(box_.lz, nz_, r);
        for (int dk = -reach_z; dk <= reach_z; ++dk)
            for (int dj = -reach_y; dj <= reach_y; ++dj)
                for (int di = -reach_x; di <= reach_x; ++di) {
                    int i = ci + di, j = cj + dj, k = ck + dk;
                    if (i < 0 || i >= nx_ || j < 0 || j >= ny_) continue;
                    k = ((k % nz_) + nz_) % nz_;  // z wraps
                    for (const auto& [q, idx] : cells_[flat(i, j, k)])
                        if (box_.min_image(p, q).squaredNorm() < r2) return true;
                }
        return false;
    }

private:
    static int span(double l, int n, double r) {
        return static_cast<int>(std::ceil(r / (l / n)));
    }
    std::array<int, 3> coords(const Vec3& p) const {
        auto clampi = [](int v, int n) { return std::clamp(v, 0, n - 1); };
        return {clampi(static_cast<int>(p.x() / box_.lx * nx_), nx_),
                clampi(static_cast<int>(p.y() / box_.ly * ny_), ny_),
                clampi(static_cast<int>(p.z() / box_.lz * nz_), nz_)};
    }
    std::size_t flat(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * ny_ + j) * nx_ + i;
    }
    std::size_t cell_of(const Vec3& p) const {
        auto [i, j, k] = coords(p);
        return flat(i, j, k);
    }

    SimulationBox box_;
    int nx_, ny_, nz_;
    std::vector<std::vector<std::pair<Vec3, int>>> cells_;
};

}  // namespace poly_detail

/// Builds a Voronoi-partitioned BCC polycrystal with vacancies and carbon
/// defects. Atoms are generated grain by grain (each grain a randomly
/// oriented BCC lattice anchored at its seed), kept where the grain owns the
/// Voronoi cell, and deduplicated at grain boundaries: an atom is dropped
/// when a previously kept atom (lower grain index wins) lies within
/// dedup_factor x nearest-neighbor distance. Fully deterministic per seed.
inline Polycrystal generate_polycrystal(const PolycrystalSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(splitmix64(spec.seed));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const SimulationBox& box = spec.box;
    const double a = spec.lattice_const;

    Polycrystal out;
    out.atoms.box = box;
    for (int g = 0; g < spec.n_grains; ++g) {
        out.seeds.emplace_back(unit(rng) * box.lx, unit(rng) * box.ly, unit(rng) * box.lz);
        out.orientations.push_back(random_rotation(rng));
    }

    const double r_dedup = spec.dedup_factor * spec.nn_distance();
    poly_detail::InsertionGrid occupied(box, std::max(r_dedup, 1.0));
    AtomSystem& sys = out.atoms;

    for (int g = 0; g < spec.n_grains; ++g) {
        Eigen::Matrix3d R = out.orientations[g].toRotationMatrix();
        Eigen::Matrix3d Rt = R.transpose();
        const Vec3& anchor = out.seeds[g];

        // Lattice-frame bounding range covering the box (plus the basis pad).
        Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
        Vec3 hi = -lo;
        for (int cx : {0, 1})
            for (int cy : {0, 1})
                for (int cz : {0, 1}) {
                    Vec3 corner(cx * box.lx, cy * box.ly, cz * box.lz);
                    Vec3 l = Rt * (corner - anchor) / a;
                    lo = lo.cwiseMin(l);
                    hi = hi.cwiseMax(l);
                }
        auto ilo = [&](int c) { return static_cast<int>(std::floor(lo[c])) - 1; };
        auto ihi = [&](int c) { return static_cast<int>(std::ceil(hi[c])) + 1; };

        static const Vec3 basis[2] = {Vec3(0, 0, 0), Vec3(0.5, 0.5, 0.5)};
        for (int i = ilo(0); i <= ihi(0); ++i)
            for (int j = ilo(1); j <= ihi(1); ++j)
                for (int k = ilo(2); k <= ihi(2); ++k)
                    for (const Vec3& b : basis) {
                        Vec3 p = R * ((Vec3(i, j, k) + b) * a) + anchor;
                        p = box.wrap(p);
                        if (!box.inside(p)) continue;
                        if (voronoi_owner(p, out.seeds, box) != g) continue;
                        if (occupied.any_within(p, r_dedup)) continue;
                        occupied.insert(p, static_cast<int>(sys.pos.size()));
                        sys.pos.push_back(p);
                        sys.type.push_back(kTypeFe);
                        sys.grain.push_back(g);
                    }
    }

    // Vacancies: remove a uniform random subset.
    std::size_t n_vac =
        static_cast<std::size_t>(std::llround(spec.vacancy_fraction * sys.pos.size()));
    if (n_vac > 0) {
        std::vector<std::size_t> order(sys.pos.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<char> dead(sys.pos.size(), 0);
        for (std::size_t v = 0; v < n_vac; ++v) dead[order[v]] = 1;
        std::size_t w = 0;
        for (std::size_t r = 0; r < sys.pos.size(); ++r) {
            if (dead[r]) continue;
            sys.pos[w] = sys.pos[r];
            sys.type[w] = sys.type[r];
            sys.grain[w] = sys.grain[r];
            ++w;
        }
        sys.pos.resize(w);
        sys.type.resize(w);
        sys.grain.resize(w);
    }

    // Carbon defects. Interstitials sit at octahedral sites: offset a/2 along
    // one cube axis (in the host grain's lattice frame) from a host atom.
    auto add_interstitial_near = [&](std::size_t host) -> bool {
        int g = sys.grain[host];
        if (g < 0) return false;
        Eigen::Matrix3d R = out.orientations[g].toRotationMatrix();
        int axis = static_cast<int>(unit(rng) * 3.0) % 3;
        Vec3 off = Vec3::Zero();
        off[axis] = 0.5 * a;
        Vec3 p = box.wrap(sys.pos[host] + R * off);
        if (!box.inside(p)) return false;
        // Reject sites crowded by a foreign grain boundary atom or an
        // already placed interstitial.
        for (std::size_t i = 0; i < sys.pos.size(); ++i)
            if (i != host && box.min_image(p, sys.pos[i]).squaredNorm() < 0.8 * 0.8) return false;
        sys.pos.push_back(p);
        sys.type.push_back(kTypeC);
        sys.grain.push_back(g);
        return true;
    };

    std::size_t n_host = sys.pos.size();
    if (spec.carbon_mode == CarbonMode::interstitial_fraction) {
        std::size_t n_c = static_cast<std::size_t>(std::llround(spec.carbon_fraction * n_host));
        std::size_t placed = 0, attempts = 0, max_attempts = 200 * (n_c + 1);
        while (placed < n_c) {
            if (++attempts > max_attempts)
                fail("polycrystal: could not place %zu interstitials after %zu attempts", n_c,
                     attempts);
            std::size_t host = static_cast<std::size_t>(unit(rng) * n_host) % n_host;
            if (sys.type[host] != kTypeFe) continue;
            if (add_interstitial_near(host)) ++placed;
        }
    } else {
        std::size_t n_sub =
            static_cast<std::size_t>(std::llround(spec.substitute_fraction * n_host));
        std::vector<std::size_t> order(n_host);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t s = 0; s < n_sub; ++s) sys.type[order[s]] = kTypeC;
        std::size_t placed = 0, attempts = 0,
                    max_attempts = 200 * (static_cast<std::size_t>(spec.fixed_interstitials) + 1);
        while (placed < static_cast<std::size_t>(spec.fixed_interstitials)) {
            if (++attempts > max_attempts)
                fail("polycrystal: could not place %d random insertions", spec.fixed_interstitials);
            Vec3 p(unit(rng) * box.lx, unit(rng) * box.ly, unit(rng) * box.lz);
            bool crowded = false;
            for (std::size_t i = 0; i < sys.pos.size() && !crowded; ++i)
                if (box.min_image(p, sys.pos[i]).squaredNorm() < 1.2 * 1.2) crowded = true;
            if (crowded) continue;
            sys.pos.push_back(p);
            sys.type.push_back(kTypeC);
            sys.grain.push_back(-1);
            ++placed;
        }
    }

    sys.id.resize(sys.pos.size());
    std::iota(sys.id.begin(), sys.id.end(), 1);
    sys.validate();
    return out;
}

/// Ideal defect-free atom count for the spec's box and lattice (2 atoms per
/// cubic cell), used as the generation density reference.
inline double ideal_bcc_count(const PolycrystalSpec& spec) {
    double v = spec.box.lx * spec.box.ly * spec.box.lz;
    return 2.0 * v / std::pow(spec.lattice_const, 3);
}

}  // namespace mgsms
