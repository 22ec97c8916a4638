#pragma once

#include <array>
#include <fstream>
#include <memory>
#include <random>
#include <vector>

#include "mgsms/atoms.hpp"
#include "mgsms/core.hpp"
#include "mgsms/fem.hpp"
#include "mgsms/potential.hpp"

namespace mgsms {

// Atom mobility roles: the top and bottom slabs are clamped and carry the
// displacement loading; everything else integrates freely.
enum class AtomRole : std::int8_t { mobile = 0, bottom_fixed = 1, top_fixed = 2 };

struct MobilityTags {
    std::vector<AtomRole> role;
    std::vector<std::int8_t> segment;  // 0..n_segments-1 for fixed atoms, -1 otherwise
    std::size_t n_mobile = 0;
};

inline MobilityTags all_mobile(std::size_t n) {
    MobilityTags t;
    t.role.assign(n, AtomRole::mobile);
    t.segment.assign(n, -1);
    t.n_mobile = n;
    return t;
}

/// Tags the loading slabs: atoms within `thickness` of the lower/upper y
/// faces are clamped, split into `n_segments` equal x-spans.
inline MobilityTags tag_boundary_layers(const AtomSystem& sys, double thickness,
                                        int n_segments = 6) {
    require(thickness > 0.0 && 2.0 * thickness < sys.box.ly,
            "boundary layers: thickness must be positive and leave a mobile interior");
    require(n_segments >= 1, "boundary layers: need at least one segment");
    MobilityTags tags;
    tags.role.resize(sys.size(), AtomRole::mobile);
    tags.segment.assign(sys.size(), -1);
    for (std::size_t i = 0; i < sys.size(); ++i) {
        double y = sys.pos[i].y();
        if (y < thickness)
            tags.role[i] = AtomRole::bottom_fixed;
        else if (y > sys.box.ly - thickness)
            tags.role[i] = AtomRole::top_fixed;
        else {
            ++tags.n_mobile;
            continue;
        }
        int seg = static_cast<int>(sys.pos[i].x() / sys.box.lx * n_segments);
        tags.segment[i] = static_cast<std::int8_t>(std::clamp(seg, 0, n_segments - 1));
    }
    return tags;
}

/// Per-segment clamp velocities for the two loading slabs, derived from FE
/// boundary displacements (see resolve_loading below).
struct LoadingProtocol {
    static constexpr int n_segments = 6;
    std::array<Vec2, n_segments> top_velocity{};     // A/ps
    std::array<Vec2, n_segments> bottom_velocity{};  // A/ps
    double duration = 0.0;                           // ps
    double strain_amplification = 1.0;

    void validate() const {
        require(duration > 0.0, "loading protocol: duration must be positive");
        require(std::isfinite(strain_amplification), "loading protocol: non-finite amplification");
        for (const auto& arr : {top_velocity, bottom_velocity})
            for (const Vec2& v : arr)
                require(std::isfinite(v.x()) && std::isfinite(v.y()),
                        "loading protocol: non-finite velocity");
    }
};

namespace md_detail {

/// Exact mean of a piecewise-linear sampled profile over [s0, s1]
/// (trapezoidal integration with the span endpoints interpolated in).
inline Vec2 mean_over_span(const BoundaryDisplacementSet& bset, EdgeId edge, double s0, double s1) {
    const auto& samples = bset.edge(edge);
    std::vector<std::pair<double, Vec2>> knots;
    knots.emplace_back(s0, bset.interpolate(edge, s0));
    for (const auto& [s, u] : samples)
        if (s > s0 && s < s1) knots.emplace_back(s, u);
    knots.emplace_back(s1, bset.interpolate(edge, s1));
    Vec2 integral = Vec2::Zero();
    for (std::size_t k = 0; k + 1 < knots.size(); ++k)
        integral += 0.5 * (knots[k].second + knots[k + 1].second) *
                    (knots[k + 1].first - knots[k].first);
    return integral / (s1 - s0);
}

}  // namespace md_detail

/// Converts FE cell-boundary displacements into the six-segment clamp
/// velocities. The box is a geometrically scaled-down replica of the FE cell,
/// so displacements scale by box_length/cell_length (strain-preserving) and
/// then by the explicit amplification factor; each segment gets the mean FE
/// displacement over its x-span, reached linearly over `duration`.
inline LoadingProtocol resolve_loading(const BoundaryDisplacementSet& bset,
                                       const SimulationBox& box, double duration,
                                       double strain_amplification) {
    require(duration > 0.0, "loading: duration must be positive");
    LoadingProtocol p;
    p.duration = duration;
    p.strain_amplification = strain_amplification;
    double scale = box.lx / (bset.cell_size.x() * constants::angstrom_per_m);  // box/cell ratio
    double to_box = scale * constants::angstrom_per_m;  // meters -> box Angstroms
    for (int k = 0; k < LoadingProtocol::n_segments; ++k) {
        double s0 = bset.cell_size.x() * k / LoadingProtocol::n_segments;
        double s1 = bset.cell_size.x() * (k + 1) / LoadingProtocol::n_segments;
        Vec2 top = md_detail::mean_over_span(bset, EdgeId::top, s0, s1);
        Vec2 bottom = md_detail::mean_over_span(bset, EdgeId::bottom, s0, s1);
        p.top_velocity[k] = strain_amplification * to_box * top / duration;
        p.bottom_velocity[k] = strain_amplification * to_box * bottom / duration;
    }
    p.validate();
    return p;
}

struct ThermoRecord {
    double time = 0.0;         // ps
    double temperature = 0.0;  // K
    double pot_energy = 0.0;   // eV
    double strain = 0.0;       // engineering, from clamp separation
    double sxx = 0.0, syy = 0.0, sxy = 0.0;  // GPa, virial stress
};

struct MdParams {
    double dt = 0.001;          // ps
    double skin = 1.0;          // A
    double friction = 0.1;      // 1/ps; 0 disables the thermostat (NVE)
    double t_target = 300.0;    // K
    int thermo_every = 100;     // steps between records
    int dump_every = 0;         // 0 = no dumps
};

/// Velocity-Verlet + Langevin (BAOAB splitting) simulation of one atom
/// system. Clamped atoms follow their prescribed linear trajectories exactly
/// and are excluded from the thermostat and temperature definition.
class Simulation {
public:
    Simulation(AtomSystem sys, MobilityTags tags, std::shared_ptr<Potential> pot, MdParams params,
               std::uint64_t seed)
        : sys_(std::move(sys)),
          tags_(std::move(tags)),
          pot_(std::move(pot)),
          p_(params),
          rng_(splitmix64(seed)) {
        require(p_.dt > 0.0, "simulation: dt must be positive");
        require(tags_.role.size() == sys_.size(), "simulation: tags do not match system");
        sys_.validate();
        if (sys_.vel.empty()) sys_.vel.assign(sys_.size(), Vec3::Zero());
        nlist_.build(sys_, pot_->cutoff(), p_.skin);
        compute_forces();
        bool has_clamps = tags_.n_mobile < sys_.size();
        initial_separation_ = has_clamps ? clamp_separation() : 0.0;
    }

    /// Maxwell-Boltzmann velocities at T for mobile atoms (clamped atoms
    /// stay at rest until loading assigns their velocity).
    void seed_velocities(double t_kelvin) {
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (std::size_t i = 0; i < sys_.size(); ++i) {
            if (tags_.role[i] != AtomRole::mobile) continue;
            double s = std::sqrt(constants::kB_eV_per_K * t_kelvin /
                                 (constants::mvv2e * sys_.mass(i)));
            sys_.vel[i] = Vec3(s * gauss(rng_), s * gauss(rng_), s * gauss(rng_));
        }
    }

    /// Assigns clamp velocities for the loading phase (x, y components per
    /// segment; z stays zero). Pass nullptr to stop driving the clamps.
    void set_loading(const LoadingProtocol* protocol) {
        if (protocol) protocol->validate();
        loading_ = protocol;
        for (std::size_t i = 0; i < sys_.size(); ++i) {
            if (tags_.role[i] == AtomRole::mobile) continue;
            Vec2 v = Vec2::Zero();
            if (loading_) {
                int seg = tags_.segment[i];
                v = (tags_.role[i] == AtomRole::top_fixed) ? loading_->top_velocity[seg]
                                                           : loading_->bottom_velocity[seg];
            }
            sys_.vel[i] = Vec3(v.x(), v.y(), 0.0);
        }
    }

    /// Advances `steps` steps, appending thermo records every thermo_every
    /// steps (and at the final step). Throws on non-finite energy.
    void run(int steps) {
        for (int s = 0; s < steps; ++s) {
            step_once();
            ++step_count_;
            if (p_.thermo_every > 0 && (step_count_ % p_.thermo_every == 0 || s == steps - 1))
                record_thermo();
        }
    }

    const AtomSystem& system() const { return sys_; }
    AtomSystem& system() { return sys_; }
    const MobilityTags& tags() const { return tags_; }
    const std::vector<ThermoRecord>& thermo() const { return thermo_; }
    double time() const { return step_count_ * p_.dt; }
    int step_count() const { return step_count_; }
    double potential_energy() const { return forces_.energy; }
    const std::vector<Vec3>& forces() const { return forces_.force; }

    double kinetic_energy() const {
        double ke = 0.0;
        for (std::size_t i = 0; i < sys_.size(); ++i)
            ke += 0.5 * constants::mvv2e * sys_.mass(i) * sys_.vel[i].squaredNorm();
        return ke;
    }

    /// Instantaneous temperature of the mobile atoms (3 dof each).
    double temperature() const {
        if (tags_.n_mobile == 0) return 0.0;
        double ke = 0.0;
        for (std::size_t i = 0; i < sys_.size(); ++i)
            if (tags_.role[i] == AtomRole::mobile)
                ke += 0.5 * constants::mvv2e * sys_.mass(i) * sys_.vel[i].squaredNorm();
        return 2.0 * ke / (3.0 * tags_.n_mobile * constants::kB_eV_per_K);
    }

    /// Virial stress tensor (kinetic + configurational) over the nominal box
    /// volume, in GPa.
    Eigen::Matrix3d stress() const {
        Eigen::Matrix3d kin = Eigen::Matrix3d::Zero();
        for (std::size_t i = 0; i < sys_.size(); ++i)
            kin += constants::mvv2e * sys_.mass(i) * sys_.vel[i] * sys_.vel[i].transpose();
        double vol = sys_.box.lx * sys_.box.ly * sys_.box.lz;
        return (kin + forces_.virial) / vol * constants::eVA3_to_GPa;
    }

    /// Engineering strain from the change of clamp-layer separation
    /// (zero for systems without clamp layers).
    double strain() const {
        if (initial_separation_ <= 0.0) return 0.0;
        return clamp_separation() / initial_separation_ - 1.0;
    }

private:
    void compute_forces() {
        if (nlist_.needs_rebuild(sys_)) nlist_.build(sys_, pot_->cutoff(), p_.skin);
        pot_->compute(sys_, nlist_, forces_);
    }

    void step_once() {
        double dt = p_.dt;
        // B: half kick (mobile atoms only; clamps keep prescribed velocity).
        for (std::size_t i = 0; i < sys_.size(); ++i)
            if (tags_.role[i] == AtomRole::mobile)
                sys_.vel[i] += 0.5 * dt * forces_.force[i] / (constants::mvv2e * sys_.mass(i));
        // A: half drift (all atoms; clamps move with their velocity).
        for (std::size_t i = 0; i < sys_.size(); ++i) sys_.pos[i] += 0.5 * dt * sys_.vel[i];
        // O: Ornstein-Uhlenbeck velocity refresh (mobile only).
        if (p_.friction > 0.0) {
            double c1 = std::exp(-p_.friction * dt);
            double c2 = std::sqrt(1.0 - c1 * c1);
            std::normal_distribution<double> gauss(0.0, 1.0);
            for (std::size_t i = 0; i < sys_.size(); ++i) {
                if (tags_.role[i] != AtomRole::mobile) continue;
                double s = std::sqrt(constants::kB_eV_per_K * p_.t_target /
                                     (constants::mvv2e * sys_.mass(i)));
                Vec3 noise(gauss(rng_), gauss(rng_), gauss(rng_));
                sys_.vel[i] = c1 * sys_.vel[i] + c2 * s * noise;
            }
        }
        // A: second half drift.
        for (std::size_t i = 0; i < sys_.size(); ++i) {
            sys_.pos[i] += 0.5 * dt * sys_.vel[i];
            if (sys_.box.periodic_z) {
                double z = sys_.pos[i].z();
                if (z < 0.0 || z >= sys_.box.lz)
                    sys_.pos[i].z() = z - sys_.box.lz * std::floor(z / sys_.box.lz);
            }
        }
        // Force refresh + final half kick.
        compute_forces();
        if (!std::isfinite(forces_.energy))
            fail("simulation blew up: non-finite energy at step %d", step_count_ + 1);
        for (std::size_t i = 0; i < sys_.size(); ++i)
            if (tags_.role[i] == AtomRole::mobile)
                sys_.vel[i] += 0.5 * dt * forces_.force[i] / (constants::mvv2e * sys_.mass(i));
    }

    double clamp_separation() const {
        double top = 0.0, bottom = 0.0;
        std::size_t n_top = 0, n_bottom = 0;
        for (std::size_t i = 0; i < sys_.size(); ++i) {
            if (tags_.role[i] == AtomRole::top_fixed) {
                top += sys_.pos[i].y();
                ++n_top;
            } else if (tags_.role[i] == AtomRole::bottom_fixed) {
                bottom += sys_.pos[i].y();
                ++n_bottom;
            }
        }
        require(n_top > 0 && n_bottom > 0, "strain: both clamp layers must contain atoms");
        return top / n_top - bottom / n_bottom;
    }

    void record_thermo() {
        ThermoRecord r;
        r.time = time();
        r.temperature = temperature();
        r.pot_energy = forces_.energy;
        r.strain = strain();
        Eigen::Matrix3d s = stress();
        r.sxx = s(0, 0);
        r.syy = s(1, 1);
        r.sxy = s(0, 1);
        require(r.temperature >= 0.0, "thermo: negative temperature");
        thermo_.push_back(r);
    }

    AtomSystem sys_;
    MobilityTags tags_;
    std::shared_ptr<Potential> pot_;
    MdParams p_;
    std::mt19937_64 rng_;
    NeighborList nlist_;
    ForceResult forces_;
    const LoadingProtocol* loading_ = nullptr;
    std::vector<ThermoRecord> thermo_;
    int step_count_ = 0;
    double initial_separation_ = 0.0;
};

struct StressStrainCurve {
    std::vector<double> strain;
    std::vector<double> stress;  // GPa, loading-direction component (yy)
    double initiation_strain = 0.0;
    double peak_stress = 0.0;
};

/// Reduces a thermo series to the stress-strain curve. Crack initiation is
/// identified with the global stress maximum (load drop proxy).
inline StressStrainCurve record_stress_strain(const std::vector<ThermoRecord>& series) {
    require(!series.empty(), "stress-strain: empty thermo series");
    StressStrainCurve c;
    std::size_t best = 0;
    for (std::size_t k = 0; k < series.size(); ++k) {
        require(k == 0 || series[k].time > series[k - 1].time,
                "stress-strain: records must be strictly time-ordered");
        c.strain.push_back(series[k].strain);
        c.stress.push_back(series[k].syy);
        if (series[k].syy > series[best].syy) best = k;
    }
    c.initiation_strain = series[best].strain;
    c.peak_stress = series[best].syy;
    return c;
}

inline void write_thermo_csv(const std::vector<ThermoRecord>& series, const std::string& path) {
    std::ofstream f(path);
    if (!f) fail("cannot open %s for writing", path.c_str());
    f << "time_ps,temperature_K,pot_energy_eV,strain,sxx_GPa,syy_GPa,sxy_GPa\n";
    for (const auto& r : series)
        f << format("%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.time, r.temperature,
                    r.pot_energy, r.strain, r.sxx, r.syy, r.sxy);
    if (!f) fail("write failed: %s", path.c_str());
}

}  // namespace mgsms
