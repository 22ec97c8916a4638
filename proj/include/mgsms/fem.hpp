#pragma once

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SVD>

#include "mgsms/core.hpp"
#include "mgsms/grid.hpp"
#include "mgsms/material.hpp"

namespace mgsms {

enum class EdgeId { bottom = 0, right = 1, top = 2, left = 3 };

inline const char* edge_name(EdgeId e) {
    switch (e) {
        case EdgeId::bottom: return "bottom";
        case EdgeId::right: return "right";
        case EdgeId::top: return "top";
        case EdgeId::left: return "left";
    }
    return "?";
}

/// Nodes of a whole grid edge, ordered by increasing coordinate.
inline std::vector<int> edge_nodes(const StructuredGrid& g, EdgeId e) {
    std::vector<int> out;
    switch (e) {
        case EdgeId::bottom:
            for (int i = 0; i <= g.nx; ++i) out.push_back(g.node_id(i, 0));
            break;
        case EdgeId::top:
            for (int i = 0; i <= g.nx; ++i) out.push_back(g.node_id(i, g.ny));
            break;
        case EdgeId::left:
            for (int j = 0; j <= g.ny; ++j) out.push_back(g.node_id(0, j));
            break;
        case EdgeId::right:
            for (int j = 0; j <= g.ny; ++j) out.push_back(g.node_id(g.nx, j));
            break;
    }
    return out;
}

struct BoundaryCondition {
    enum class Kind { fixed_displacement, prescribed_displacement, edge_traction };

    Kind kind = Kind::fixed_displacement;
    std::optional<EdgeId> edge;       // whole-edge target
    std::vector<int> nodes;           // explicit node target (ignored when edge set)
    Vec2 value{0.0, 0.0};             // displacement (m) or traction (Pa)
    int component = -1;               // -1 both, 0 x only, 1 y only
    std::vector<Vec2> node_values;    // per-node values for prescribed_displacement

    static BoundaryCondition fixed_edge(EdgeId e, Vec2 v = Vec2::Zero(), int comp = -1) {
        BoundaryCondition bc;
        bc.kind = Kind::fixed_displacement;
        bc.edge = e;
        bc.value = v;
        bc.component = comp;
        return bc;
    }
    static BoundaryCondition fixed_nodes(std::vector<int> ns, Vec2 v = Vec2::Zero(), int comp = -1) {
        BoundaryCondition bc;
        bc.kind = Kind::fixed_displacement;
        bc.nodes = std::move(ns);
        bc.value = v;
        bc.component = comp;
        return bc;
    }
    static BoundaryCondition prescribed(std::vector<int> ns, std::vector<Vec2> values) {
        require(ns.size() == values.size(), "prescribed BC: node/value count mismatch");
        BoundaryCondition bc;
        bc.kind = Kind::prescribed_displacement;
        bc.nodes = std::move(ns);
        bc.node_values = std::move(values);
        return bc;
    }
    static BoundaryCondition traction(EdgeId e, Vec2 t) {
        BoundaryCondition bc;
        bc.kind = Kind::edge_traction;
        bc.edge = e;
        bc.value = t;
        return bc;
    }
};

struct DisplacementField {
    StructuredGrid grid;
    std::vector<Vec2> nodal_u;  // m, one entry per node

    void validate() const {
        require(static_cast<int>(nodal_u.size()) == grid.node_count(),
                "displacement field: nodal vector length does not match grid");
        for (const Vec2& u : nodal_u)
            require(std::isfinite(u.x()) && std::isfinite(u.y()),
                    "displacement field: non-finite entry");
    }

    /// Bilinear interpolation of the nodal solution at a point inside the grid.
    Vec2 at(const Vec2& p) const {
        auto [i, j] = grid.locate(p);
        Vec2 lo = grid.element_origin(i, j);
        double xi = 2.0 * (p.x() - lo.x()) / grid.hx() - 1.0;
        double eta = 2.0 * (p.y() - lo.y()) / grid.hy() - 1.0;
        auto nodes = grid.element_nodes(grid.element_id(i, j));
        static constexpr double XS[4] = {-1, 1, 1, -1};
        static constexpr double ES[4] = {-1, -1, 1, 1};
        Vec2 u = Vec2::Zero();
        for (int k = 0; k < 4; ++k)
            u += 0.25 * (1 + xi * XS[k]) * (1 + eta * ES[k]) * nodal_u[nodes[k]];
        return u;
    }
};

/// Boundary displacements of one grid cell, sampled along its four edges.
/// Positions run along +x for bottom/top and +y for left/right; corner
/// samples are the exact nodal values, shared bit-identically between the
/// two edges meeting there.
struct BoundaryDisplacementSet {
    std::array<int, 2> cell_id{0, 0};
    Vec2 cell_origin{0.0, 0.0};  // m, physical frame of the parent grid
    Vec2 cell_size{0.0, 0.0};    // m
    std::array<std::vector<std::pair<double, Vec2>>, 4> edges;  // (pos m, u m)

    const std::vector<std::pair<double, Vec2>>& edge(EdgeId e) const {
        return edges[static_cast<int>(e)];
    }

    /// Piecewise-linear interpolation of one edge at position s.
    Vec2 interpolate(EdgeId e, double s) const {
        const auto& samples = edge(e);
        require(samples.size() >= 2, "boundary set: edge needs >= 2 samples");
        if (s <= samples.front().first) return samples.front().second;
        if (s >= samples.back().first) return samples.back().second;
        auto it = std::upper_bound(samples.begin(), samples.end(), s,
                                   [](double v, const auto& q) { return v < q.first; });
        const auto& [s1, u1] = *it;
        const auto& [s0, u0] = *(it - 1);
        double t = (s - s0) / (s1 - s0);
        return (1.0 - t) * u0 + t * u1;
    }
};

namespace fem_detail {

inline Eigen::Matrix3d plane_stress_D(const MaterialParams& mat) {
    double E = mat.youngs_modulus, nu = mat.poisson_ratio;
    Eigen::Matrix3d D;
    double c = E / (1.0 - nu * nu);
    D << c, c * nu, 0.0,
         c * nu, c, 0.0,
         0.0, 0.0, c * (1.0 - nu) / 2.0;
    return D;
}

// Shape function derivative matrix B (3x8) for a bilinear quad of size hx*hy
// at local coordinates (xi, eta) in [-1,1]^2. Jacobian is diagonal.
inline Eigen::Matrix<double, 3, 8> quad_B(double hx, double hy, double xi, double eta) {
    static constexpr double XS[4] = {-1, 1, 1, -1};
    static constexpr double ES[4] = {-1, -1, 1, 1};
    Eigen::Matrix<double, 3, 8> B = Eigen::Matrix<double, 3, 8>::Zero();
    for (int k = 0; k < 4; ++k) {
        double dNdx = 0.25 * XS[k] * (1 + eta * ES[k]) * 2.0 / hx;
        double dNdy = 0.25 * ES[k] * (1 + xi * XS[k]) * 2.0 / hy;
        B(0, 2 * k) = dNdx;
        B(1, 2 * k + 1) = dNdy;
        B(2, 2 * k) = dNdy;
        B(2, 2 * k + 1) = dNdx;
    }
    return B;
}

inline const std::array<double, 2>& gauss2() {
    static const std::array<double, 2> g = {-1.0 / std::sqrt(3.0), 1.0 / std::sqrt(3.0)};
    return g;
}

/// Element stiffness for a rectangular bilinear quad, 2x2 Gauss quadrature.
inline Eigen::Matrix<double, 8, 8> quad_stiffness(double hx, double hy, const Eigen::Matrix3d& D) {
    Eigen::Matrix<double, 8, 8> Ke = Eigen::Matrix<double, 8, 8>::Zero();
    double jac = hx * hy / 4.0;
    for (double xi : gauss2())
        for (double eta : gauss2()) {
            auto B = quad_B(hx, hy, xi, eta);
            Ke += B.transpose() * D * B * jac;
        }
    return Ke;
}

struct ConstraintMap {
    // dof -> prescribed value; dof = 2*node + component
    std::map<int, double> values;

    void set(int dof, double v, const char* what) {
        auto [it, inserted] = values.emplace(dof, v);
        if (!inserted && it->second != v)
            fail("conflicting Dirichlet values at dof %d (%s): %.17g vs %.17g", dof, what,
                 it->second, v);
    }
    bool constrained(int dof) const { return values.count(dof) != 0; }
};

/// Checks that the Dirichlet set blocks all three rigid-body modes, and names
/// the free one otherwise.
inline void check_rigid_modes(const StructuredGrid& g, const ConstraintMap& cons) {
    if (cons.values.empty()) fail("singular system: no constraints; free rigid-body mode: translation-x");
    Eigen::MatrixXd A(cons.values.size(), 3);
    int r = 0;
    for (const auto& [dof, v] : cons.values) {
        (void)v;
        int node = dof / 2, comp = dof % 2;
        Vec2 p = g.node_coord(node);
        if (comp == 0)
            A.row(r++) << 1.0, 0.0, -p.y();
        else
            A.row(r++) << 0.0, 1.0, p.x();
    }
    // Scale the rotation column so rank detection is length-unit independent.
    double scale = std::max(g.extent.x(), g.extent.y());
    A.col(2) /= scale;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
    if (svd.rank() >= 3) return;
    Eigen::Vector3d null = svd.matrixV().col(2);
    const char* mode = "rotation";
    if (std::abs(null(0)) >= std::abs(null(1)) && std::abs(null(0)) >= std::abs(null(2)))
        mode = "translation-x";
    else if (std::abs(null(1)) >= std::abs(null(2)))
        mode = "translation-y";
    fail("singular system: constraints leave free rigid-body mode: %s", mode);
}

inline ConstraintMap build_constraints(const StructuredGrid& grid,
                                       const std::vector<BoundaryCondition>& bcs) {
    ConstraintMap cons;
    for (const auto& bc : bcs) {
        if (bc.kind == BoundaryCondition::Kind::edge_traction) continue;
        std::vector<int> nodes = bc.edge ? edge_nodes(grid, *bc.edge) : bc.nodes;
        if (bc.kind == BoundaryCondition::Kind::fixed_displacement) {
            require(std::isfinite(bc.value.x()) && std::isfinite(bc.value.y()),
                    "boundary condition: non-finite prescribed value");
            for (int n : nodes) {
                if (bc.component == -1 || bc.component == 0) cons.set(2 * n, bc.value.x(), "fixed");
                if (bc.component == -1 || bc.component == 1) cons.set(2 * n + 1, bc.value.y(), "fixed");
            }
        } else {
            require(nodes.size() == bc.node_values.size(),
                    "prescribed BC: node/value count mismatch");
            for (size_t k = 0; k < nodes.size(); ++k) {
                const Vec2& v = bc.node_values[k];
                require(std::isfinite(v.x()) && std::isfinite(v.y()),
                        "boundary condition: non-finite prescribed value");
                cons.set(2 * nodes[k], v.x(), "prescribed");
                cons.set(2 * nodes[k] + 1, v.y(), "prescribed");
            }
        }
    }
    return cons;
}

inline void add_traction_loads(const StructuredGrid& grid,
                               const std::vector<BoundaryCondition>& bcs,
                               Eigen::VectorXd& F) {
    for (const auto& bc : bcs) {
        if (bc.kind != BoundaryCondition::Kind::edge_traction) continue;
        require(bc.edge.has_value(), "edge_traction requires an edge target");
        require(std::isfinite(bc.value.x()) && std::isfinite(bc.value.y()),
                "boundary condition: non-finite traction");
        auto nodes = edge_nodes(grid, *bc.edge);
        bool horizontal = (*bc.edge == EdgeId::bottom || *bc.edge == EdgeId::top);
        double h = horizontal ? grid.hx() : grid.hy();
        // Consistent lumping for linear edge shape functions: half the segment
        // load to each end node.
        for (size_t s = 0; s + 1 < nodes.size(); ++s) {
            for (int end : {0, 1}) {
                int n = nodes[s + end];
                F(2 * n) += 0.5 * h * bc.value.x();
                F(2 * n + 1) += 0.5 * h * bc.value.y();
            }
        }
    }
}

}  // namespace fem_detail

/// Plane-stress solve on a structured bilinear quad grid (unit thickness).
/// Throws on singular systems (naming the free rigid-body mode) and on
/// non-finite inputs. Checks the linear-system residual after solving.
inline DisplacementField assemble_and_solve(const StructuredGrid& grid, const MaterialParams& mat,
                                            const std::vector<BoundaryCondition>& bcs) {
    using namespace fem_detail;
    mat.validate();
    int ndof = 2 * grid.node_count();
    Eigen::Matrix3d D = plane_stress_D(mat);
    Eigen::Matrix<double, 8, 8> Ke = quad_stiffness(grid.hx(), grid.hy(), D);

    ConstraintMap cons = build_constraints(grid, bcs);
    check_rigid_modes(grid, cons);

    Eigen::VectorXd F = Eigen::VectorXd::Zero(ndof);
    add_traction_loads(grid, bcs, F);

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<size_t>(grid.element_count()) * 64 + cons.values.size());
    for (int e = 0; e < grid.element_count(); ++e) {
        auto nodes = grid.element_nodes(e);
        int dofs[8];
        for (int k = 0; k < 4; ++k) {
            dofs[2 * k] = 2 * nodes[k];
            dofs[2 * k + 1] = 2 * nodes[k] + 1;
        }
        for (int a = 0; a < 8; ++a) {
            int ra = dofs[a];
            if (cons.constrained(ra)) continue;
            for (int b = 0; b < 8; ++b) {
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
        fail("singular system: sparse factorization failed");
    Eigen::VectorXd u = solver.solve(F);

    double fnorm = F.norm();
    if (fnorm > 0.0) {
        double res = (K * u - F).norm() / fnorm;
        if (!(res < 1e-10))
            fail("FEM solve: residual %.3e exceeds 1e-10", res);
    }

    DisplacementField field;
    field.grid = grid;
    field.nodal_u.resize(grid.node_count());
    for (int n = 0; n < grid.node_count(); ++n) field.nodal_u[n] = Vec2(u(2 * n), u(2 * n + 1));
    field.validate();
    return field;
}

struct ElementStress {
    double sxx = 0.0, syy = 0.0, sxy = 0.0;  // Pa, element centroid
    double von_mises = 0.0;
};

/// Centroid stress per element. Plane-stress von Mises:
/// sqrt(sxx^2 - sxx*syy + syy^2 + 3*sxy^2).
inline std::vector<ElementStress> element_stress(const DisplacementField& field,
                                                 const MaterialParams& mat) {
    using namespace fem_detail;
    field.validate();
    mat.validate();
    const StructuredGrid& g = field.grid;
    Eigen::Matrix3d D = plane_stress_D(mat);
    auto B0 = quad_B(g.hx(), g.hy(), 0.0, 0.0);
    std::vector<ElementStress> out(g.element_count());
    for (int e = 0; e < g.element_count(); ++e) {
        auto nodes = g.element_nodes(e);
        Eigen::Matrix<double, 8, 1> ue;
        for (int k = 0; k < 4; ++k) {
            ue(2 * k) = field.nodal_u[nodes[k]].x();
            ue(2 * k + 1) = field.nodal_u[nodes[k]].y();
        }
        Eigen::Vector3d s = D * (B0 * ue);
        ElementStress& es = out[e];
        es.sxx = s(0);
        es.syy = s(1);
        es.sxy = s(2);
        es.von_mises = std::sqrt(s(0) * s(0) - s(0) * s(1) + s(1) * s(1) + 3.0 * s(2) * s(2));
    }
    return out;
}

/// Strain energy of the solved field, 0.5 * u^T K u via an element loop.
inline double strain_energy(const DisplacementField& field, const MaterialParams& mat) {
    using namespace fem_detail;
    const StructuredGrid& g = field.grid;
    auto Ke = quad_stiffness(g.hx(), g.hy(), plane_stress_D(mat));
    double E = 0.0;
    for (int e = 0; e < g.element_count(); ++e) {
        auto nodes = g.element_nodes(e);
        Eigen::Matrix<double, 8, 1> ue;
        for (int k = 0; k < 4; ++k) {
            ue(2 * k) = field.nodal_u[nodes[k]].x();
            ue(2 * k + 1) = field.nodal_u[nodes[k]].y();
        }
        E += 0.5 * ue.dot(Ke * ue);
    }
    return E;
}

/// Samples the solved displacement along the four edges of one grid cell.
/// The cell is a single element, so edge restrictions of the bilinear field
/// are linear; endpoint samples are the exact nodal values.
inline BoundaryDisplacementSet extract_cell_boundary(const DisplacementField& field,
                                                     std::array<int, 2> cell,
                                                     int samples_per_edge) {
    field.validate();
    const StructuredGrid& g = field.grid;
    auto [i, j] = cell;
    if (i < 0 || i >= g.nx || j < 0 || j >= g.ny)
        fail("extract_cell_boundary: cell (%d, %d) out of range for %dx%d grid", i, j, g.nx, g.ny);
    require(samples_per_edge >= 2, "extract_cell_boundary: samples_per_edge must be >= 2");

    BoundaryDisplacementSet out;
    out.cell_id = cell;
    out.cell_origin = g.element_origin(i, j);
    out.cell_size = Vec2(g.hx(), g.hy());

    const Vec2& u00 = field.nodal_u[g.node_id(i, j)];
    const Vec2& u10 = field.nodal_u[g.node_id(i + 1, j)];
    const Vec2& u11 = field.nodal_u[g.node_id(i + 1, j + 1)];
    const Vec2& u01 = field.nodal_u[g.node_id(i, j + 1)];

    auto fill = [&](EdgeId e, const Vec2& ua, const Vec2& ub, double len) {
        auto& samples = out.edges[static_cast<int>(e)];
        samples.reserve(samples_per_edge);
        for (int k = 0; k < samples_per_edge; ++k) {
            double t = static_cast<double>(k) / (samples_per_edge - 1);
            samples.emplace_back(t * len, (1.0 - t) * ua + t * ub);
        }
    };
    fill(EdgeId::bottom, u00, u10, g.hx());
    fill(EdgeId::right, u10, u11, g.hy());
    fill(EdgeId::top, u01, u11, g.hx());
    fill(EdgeId::left, u00, u01, g.hy());
    return out;
}

/// Prescribed-displacement conditions for a sub-model grid spanning exactly
/// the parent cell, interpolated from the cell boundary samples.
inline std::vector<BoundaryCondition> submodel_bcs(const BoundaryDisplacementSet& bset,
                                                   const StructuredGrid& fine_grid) {
    double rel_x = std::abs(fine_grid.extent.x() - bset.cell_size.x()) / bset.cell_size.x();
    double rel_y = std::abs(fine_grid.extent.y() - bset.cell_size.y()) / bset.cell_size.y();
    if (rel_x > 1e-12 || rel_y > 1e-12)
        fail("submodel_bcs: fine grid extent (%g, %g) does not match parent cell (%g, %g)",
             fine_grid.extent.x(), fine_grid.extent.y(), bset.cell_size.x(), bset.cell_size.y());

    std::vector<BoundaryCondition> out;
    for (EdgeId e : {EdgeId::bottom, EdgeId::right, EdgeId::top, EdgeId::left}) {
        auto nodes = edge_nodes(fine_grid, e);
        bool horizontal = (e == EdgeId::bottom || e == EdgeId::top);
        const auto& samples = bset.edge(e);
        double len = horizontal ? bset.cell_size.x() : bset.cell_size.y();
        int last = static_cast<int>(nodes.size()) - 1;
        std::vector<Vec2> values;
        values.reserve(nodes.size());
        // Endpoint nodes take the stored corner samples verbatim so the two
        // edges meeting at a corner prescribe bit-identical values there.
        for (int k = 0; k <= last; ++k) {
            if (k == 0)
                values.push_back(samples.front().second);
            else if (k == last)
                values.push_back(samples.back().second);
            else
                values.push_back(bset.interpolate(e, len * k / last));
        }
        out.push_back(BoundaryCondition::prescribed(nodes, std::move(values)));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Columnar text serialization (node_id, x, y, ux, uy).

inline void write_field_csv(const DisplacementField& field, const std::string& path) {
    std::ofstream f(path);
    if (!f) fail("cannot open %s for writing", path.c_str());
    f << "node_id,x,y,ux,uy\n";
    for (int n = 0; n < field.grid.node_count(); ++n) {
        Vec2 p = field.grid.node_coord(n);
        const Vec2& u = field.nodal_u[n];
        f << format("%d,%.17g,%.17g,%.17g,%.17g\n", n, p.x(), p.y(), u.x(), u.y());
    }
    if (!f) fail("write failed: %s", path.c_str());
}

inline void read_field_csv(DisplacementField& field, const std::string& path) {
    std::ifstream f(path);
    if (!f) fail("cannot open %s", path.c_str());
    std::string line;
    std::getline(f, line);  // header
    field.nodal_u.assign(field.grid.node_count(), Vec2::Zero());
    int seen = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        int n;
        double x, y, ux, uy;
        if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf", &n, &x, &y, &ux, &uy) != 5)
            fail("malformed field row in %s: %s", path.c_str(), line.c_str());
        require(n >= 0 && n < field.grid.node_count(), "field row: node id out of range");
        field.nodal_u[n] = Vec2(ux, uy);
        ++seen;
    }
    require(seen == field.grid.node_count(), "field file does not cover all nodes");
}

inline void write_stress_csv(const StructuredGrid& grid, const std::vector<ElementStress>& stress,
                             const std::string& path) {
    std::ofstream f(path);
    if (!f) fail("cannot open %s for writing", path.c_str());
    f << "element_id,x,y,sxx,syy,sxy,von_mises\n";
    for (size_t e = 0; e < stress.size(); ++e) {
        Vec2 c = grid.element_center(static_cast<int>(e));
        const auto& s = stress[e];
        f << format("%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", e, c.x(), c.y(), s.sxx, s.syy,
                    s.sxy, s.von_mises);
    }
}

}  // namespace mgsms
