#pragma once

#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "mgsms/atoms.hpp"
#include "mgsms/core.hpp"
#include "mgsms/neighbor.hpp"

namespace mgsms {

struct ForceResult {
    std::vector<Vec3> force;        // eV/A
    double energy = 0.0;            // eV
    Eigen::Matrix3d virial = Eigen::Matrix3d::Zero();  // eV (sum over pairs of r x f)
};

/// Interatomic potential interface. Implementations must give energies and
/// forces that are exact gradients of each other and continuous at cutoff.
class Potential {
public:
    virtual ~Potential() = default;
    virtual double cutoff() const = 0;
    virtual void compute(const AtomSystem& sys, const NeighborList& nlist,
                         ForceResult& out) const = 0;
    virtual std::string describe() const = 0;

protected:
    static void check_overlap(double r2, int id_i, int id_j) {
        if (r2 < 0.1 * 0.1)
            fail("overlapping atoms: ids %d and %d at distance %.4f A", id_i, id_j,
                 std::sqrt(r2));
    }
};

/// Lennard-Jones with the shifted-force correction, which zeroes both the
/// energy and the force at the cutoff so dynamics conserve energy cleanly.
/// Per-type parameters combine with Lorentz-Berthelot mixing.
class ShiftedForceLJ final : public Potential {
public:
    ShiftedForceLJ(std::vector<double> epsilon_by_type, std::vector<double> sigma_by_type,
                   double cutoff)
        : eps_(std::move(epsilon_by_type)), sig_(std::move(sigma_by_type)), rc_(cutoff) {
        require(rc_ > 0.0, "LJ: cutoff must be positive");
        require(eps_.size() == sig_.size() && eps_.size() >= 2,
                "LJ: per-type parameter arrays must align (index 0 unused)");
    }

    /// Single-species convenience constructor.
    ShiftedForceLJ(double epsilon, double sigma, double cutoff)
        : ShiftedForceLJ(std::vector<double>{0.0, epsilon}, std::vector<double>{0.0, sigma},
                         cutoff) {}

    double cutoff() const override { return rc_; }
    std::string describe() const override {
        return format("lennard_jones shifted-force rc=%.3f", rc_);
    }

    void compute(const AtomSystem& sys, const NeighborList& nlist,
                 ForceResult& out) const override {
        std::size_t n = sys.size();
        out.force.assign(n, Vec3::Zero());
        out.energy = 0.0;
        out.virial.setZero();
        double rc2 = rc_ * rc_;
        for (std::size_t i = 0; i < n; ++i) {
            for (int j : nlist.full[i]) {
                if (j <= static_cast<int>(i)) continue;  // visit each pair once
                Vec3 rij = sys.box.min_image(sys.pos[i], sys.pos[j]);
                double r2 = rij.squaredNorm();
                check_overlap(r2, sys.id[i], sys.id[j]);
                if (r2 >= rc2) continue;
                auto [eps, sig] = mixed(sys.type[i], sys.type[j]);
                double r = std::sqrt(r2);
                auto [phi, dphi] = lj(r, eps, sig);
                auto [phic, dphic] = lj(rc_, eps, sig);
                double e = phi - phic - (r - rc_) * dphic;
                double fmag = -(dphi - dphic);  // -d/dr of shifted energy
                Vec3 f = fmag / r * rij;        // force on i
                out.force[i] += f;
                out.force[j] -= f;
                out.energy += e;
                out.virial += rij * f.transpose();
            }
        }
    }

private:
    static std::pair<double, double> lj(double r, double eps, double sig) {
        double sr = sig / r;
        double sr6 = sr * sr * sr * sr * sr * sr;
        double sr12 = sr6 * sr6;
        double phi = 4.0 * eps * (sr12 - sr6);
        double dphi = 4.0 * eps * (-12.0 * sr12 + 6.0 * sr6) / r;
        return {phi, dphi};
    }
    std::pair<double, double> mixed(int ti, int tj) const {
        require(ti < static_cast<int>(eps_.size()) && tj < static_cast<int>(eps_.size()),
                "LJ: atom type has no parameters");
        return {std::sqrt(eps_[ti] * eps_[tj]), 0.5 * (sig_[ti] + sig_[tj])};
    }

    std::vector<double> eps_, sig_;
    double rc_;
};

// ---------------------------------------------------------------------------
// Monotone cubic interpolation (Fritsch-Carlson slopes) on a uniform grid.
// Used for tabulated potential functions; C1 continuity makes the analytic
// derivative a valid force, and monotone segments avoid spline overshoot in
// steep repulsive walls.

class PchipTable {
public:
    PchipTable() = default;
    PchipTable(double x0, double dx, std::vector<double> y) : x0_(x0), dx_(dx), y_(std::move(y)) {
        require(y_.size() >= 2 && dx_ > 0.0, "table: needs >= 2 samples and positive spacing");
        std::size_t n = y_.size();
        std::vector<double> delta(n - 1);
        for (std::size_t k = 0; k + 1 < n; ++k) delta[k] = (y_[k + 1] - y_[k]) / dx_;
        d_.assign(n, 0.0);
        d_[0] = delta[0];
        d_[n - 1] = delta[n - 2];
        for (std::size_t k = 1; k + 1 < n; ++k) {
            if (delta[k - 1] * delta[k] <= 0.0)
                d_[k] = 0.0;
            else
                d_[k] = 2.0 * delta[k - 1] * delta[k] / (delta[k - 1] + delta[k]);
        }
    }

    double x_max() const { return x0_ + dx_ * (y_.size() - 1); }

    /// Value and derivative. Outside the table the nearest edge value is
    /// held constant (derivative zero); tables are built to reach zero at
    /// the physical cutoff so this never extrapolates meaningful forces.
    std::pair<double, double> eval(double x) const {
        std::size_t n = y_.size();
        if (x <= x0_) return {y_.front(), 0.0};
        if (x >= x_max()) return {y_.back(), 0.0};
        double t = (x - x0_) / dx_;
        std::size_t k = std::min(static_cast<std::size_t>(t), n - 2);
        double s = t - k;
        double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
        double h10 = s * (1 - s) * (1 - s);
        double h01 = s * s * (3 - 2 * s);
        double h11 = s * s * (s - 1);
        double v = h00 * y_[k] + h10 * dx_ * d_[k] + h01 * y_[k + 1] + h11 * dx_ * d_[k + 1];
        double dh00 = (6 * s * s - 6 * s) / dx_;
        double dh10 = (3 * s * s - 4 * s + 1);
        double dh01 = (6 * s - 6 * s * s) / dx_;
        double dh11 = (3 * s * s - 2 * s);
        double dv = dh00 * y_[k] + dh10 * d_[k] + dh01 * y_[k + 1] + dh11 * d_[k + 1];
        return {v, dv};
    }

private:
    double x0_ = 0.0, dx_ = 1.0;
    std::vector<double> y_, d_;
};

/// Embedded-atom potential from tabulated functions (setfl layout):
/// E = sum_i F_ti(rho_i) + 1/2 sum_pairs phi_titj(r),  rho_i = sum_j rho_tj(r_ij).
class TabulatedEAM final : public Potential {
public:
    struct Tables {
        int n_elements = 0;
        std::vector<std::string> names;
        std::vector<double> mass;                   // per element
        std::vector<PchipTable> embedding;          // F_e(rho), per element
        std::vector<PchipTable> density;            // rho_e(r), per element
        std::vector<std::vector<PchipTable>> pair;  // phi_ij(r) (NOT r*phi), [i][j], i >= j filled
        double cutoff = 0.0;
    };

    explicit TabulatedEAM(Tables t) : t_(std::move(t)) {
        require(t_.n_elements >= 1, "EAM: no elements");
        require(t_.cutoff > 0.0, "EAM: cutoff must be positive");
    }

    double cutoff() const override { return t_.cutoff; }
    std::string describe() const override {
        std::string s = "tabulated_embedded";
        for (const auto& n : t_.names) s += " " + n;
        return s + format(" rc=%.3f", t_.cutoff);
    }

    void compute(const AtomSystem& sys, const NeighborList& nlist,
                 ForceResult& out) const override {
        std::size_t n = sys.size();
        out.force.assign(n, Vec3::Zero());
        out.energy = 0.0;
        out.virial.setZero();
        double rc2 = t_.cutoff * t_.cutoff;

        // Pass 1: electron densities and embedding derivatives.
        std::vector<double> fprime(n);
        for (std::size_t i = 0; i < n; ++i) {
            double rho = 0.0;
            for (int j : nlist.full[i]) {
                Vec3 rij = sys.box.min_image(sys.pos[i], sys.pos[j]);
                double r2 = rij.squaredNorm();
                check_overlap(r2, sys.id[i], sys.id[j]);
                if (r2 >= rc2) continue;
                rho += t_.density[element(sys.type[j])].eval(std::sqrt(r2)).first;
            }
            auto [F, dF] = t_.embedding[element(sys.type[i])].eval(rho);
            out.energy += F;
            fprime[i] = dF;
        }

        // Pass 2: pair term and forces.
        for (std::size_t i = 0; i < n; ++i) {
            int ei = element(sys.type[i]);
            for (int j : nlist.full[i]) {
                if (j <= static_cast<int>(i)) continue;
                Vec3 rij = sys.box.min_image(sys.pos[i], sys.pos[j]);
                double r2 = rij.squaredNorm();
                if (r2 >= rc2) continue;
                double r = std::sqrt(r2);
                int ej = element(sys.type[j]);
                auto [phi, dphi] = pair_table(ei, ej).eval(r);
                auto [rho_j, drho_j] = t_.density[ej].eval(r);  // density of j seen by i
                auto [rho_i, drho_i] = t_.density[ei].eval(r);  // density of i seen by j
                (void)rho_j;
                (void)rho_i;
                double dEdr = dphi + fprime[i] * drho_j + fprime[j] * drho_i;
                Vec3 f = -dEdr / r * rij;  // force on i
                out.force[i] += f;
                out.force[j] -= f;
                out.energy += phi;
                out.virial += rij * f.transpose();
            }
        }
    }

    const Tables& tables() const { return t_; }

private:
    int element(int type) const {
        int e = type - 1;
        require(e >= 0 && e < t_.n_elements, "EAM: atom type has no tabulated element");
        return e;
    }
    const PchipTable& pair_table(int a, int b) const {
        return a >= b ? t_.pair[a][b] : t_.pair[b][a];
    }

    Tables t_;
};

/// Reads a DYNAMO/LAMMPS "setfl" EAM file: 3 comment lines; element count
/// and names; nrho/drho/nr/dr/cutoff; per element a header line
/// (number, mass, lattice, structure) then F(rho) and rho(r) blocks; then
/// r*phi(r) blocks for each pair (i,j), j <= i. Values may wrap lines.
inline TabulatedEAM::Tables read_setfl(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail("cannot open EAM table %s", path.c_str());

    // Token stream with line tracking for error messages.
    std::string line;
    std::istringstream cur;
    int line_no = 0;
    auto next_line = [&]() {
        if (!std::getline(f, line)) fail("%s: unexpected end of file at line %d", path.c_str(), line_no);
        ++line_no;
        cur.clear();
        cur.str(line);
    };
    auto next_token = [&]() -> std::string {
        std::string tok;
        while (!(cur >> tok)) next_line();
        return tok;
    };
    auto next_double = [&]() {
        std::string tok = next_token();
        try {
            std::size_t used = 0;
            double v = std::stod(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            return v;
        } catch (const std::exception&) {
            fail("%s:%d: expected a number, got '%s'", path.c_str(), line_no, tok.c_str());
        }
    };
    auto next_int = [&]() { return static_cast<int>(std::llround(next_double())); };

    for (int k = 0; k < 3; ++k) next_line();  // comment header

    TabulatedEAM::Tables t;
    next_line();
    cur >> t.n_elements;
    if (t.n_elements < 1) fail("%s:%d: element count must be >= 1", path.c_str(), line_no);
    for (int e = 0; e < t.n_elements; ++e) t.names.push_back(next_token());

    int nrho = next_int();
    double drho = next_double();
    int nr = next_int();
    double dr = next_double();
    t.cutoff = next_double();
    if (nrho < 2 || nr < 2 || drho <= 0.0 || dr <= 0.0 || t.cutoff <= 0.0)
        fail("%s:%d: malformed grid header", path.c_str(), line_no);

    t.mass.resize(t.n_elements);
    for (int e = 0; e < t.n_elements; ++e) {
        next_int();  // atomic number, unused
        t.mass[e] = next_double();
        next_double();       // lattice constant, unused
        (void)next_token();  // structure name, unused
        std::vector<double> emb(nrho), dens(nr);
        for (double& v : emb) v = next_double();
        for (double& v : dens) v = next_double();
        t.embedding.emplace_back(0.0, drho, std::move(emb));
        t.density.emplace_back(0.0, dr, std::move(dens));
    }

    t.pair.resize(t.n_elements);
    for (int i = 0; i < t.n_elements; ++i) {
        t.pair[i].resize(i + 1);
        for (int j = 0; j <= i; ++j) {
            std::vector<double> phi(nr);
            // Stored as r*phi; divide out r (first sample is at r=0 where
            // the table value is 0*phi -> use the next sample's value).
            for (int k = 0; k < nr; ++k) phi[k] = next_double();
            for (int k = 1; k < nr; ++k) phi[k] /= k * dr;
            phi[0] = phi[1];
            t.pair[i][j] = PchipTable(0.0, dr, std::move(phi));
        }
    }
    return t;
}

}  // namespace mgsms
