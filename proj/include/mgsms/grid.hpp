#pragma once

#include <array>
#include <cmath>

#include "mgsms/core.hpp"

namespace mgsms {

/// Structured grid of bilinear quadrilaterals on an axis-aligned rectangle.
/// Node n = j*(nx+1)+i sits at origin + (i*hx, j*hy); element e = j*nx+i
/// owns nodes (i,j), (i+1,j), (i+1,j+1), (i,j+1) in counterclockwise order.
struct StructuredGrid {
    Vec2 origin{0.0, 0.0};   // m
    Vec2 extent{1.0, 1.0};   // (Lx, Ly), m
    int nx = 1;
    int ny = 1;

    StructuredGrid() = default;
    StructuredGrid(Vec2 origin_, Vec2 extent_, int nx_, int ny_)
        : origin(origin_), extent(extent_), nx(nx_), ny(ny_) {
        require(nx >= 1 && ny >= 1, "grid: divisions must be >= 1");
        require(extent.x() > 0.0 && extent.y() > 0.0, "grid: extent must be positive");
    }

    int node_count() const { return (nx + 1) * (ny + 1); }
    int element_count() const { return nx * ny; }
    double hx() const { return extent.x() / nx; }
    double hy() const { return extent.y() / ny; }

    int node_id(int i, int j) const { return j * (nx + 1) + i; }
    int element_id(int i, int j) const { return j * nx + i; }

    Vec2 node_coord(int n) const {
        int i = n % (nx + 1), j = n / (nx + 1);
        return origin + Vec2(i * hx(), j * hy());
    }

    /// Element nodes, counterclockwise from the lower-left corner.
    std::array<int, 4> element_nodes(int e) const {
        int i = e % nx, j = e / nx;
        return {node_id(i, j), node_id(i + 1, j), node_id(i + 1, j + 1), node_id(i, j + 1)};
    }

    Vec2 element_origin(int i, int j) const { return origin + Vec2(i * hx(), j * hy()); }
    Vec2 element_center(int e) const {
        int i = e % nx, j = e / nx;
        return element_origin(i, j) + 0.5 * Vec2(hx(), hy());
    }

    bool contains(const Vec2& p) const {
        return p.x() >= origin.x() && p.x() <= origin.x() + extent.x() &&
               p.y() >= origin.y() && p.y() <= origin.y() + extent.y();
    }

    /// Element index pair containing p. Points on an interior cell edge
    /// resolve to the lower-index cell; the grid boundary clamps inward.
    std::array<int, 2> locate(const Vec2& p) const {
        require(contains(p), format("locate_cell: point (%g, %g) outside grid extent", p.x(), p.y()));
        auto pick = [](double t, int n) {
            int c = static_cast<int>(std::ceil(t)) - 1;
            return std::clamp(c, 0, n - 1);
        };
        return {pick((p.x() - origin.x()) / hx(), nx), pick((p.y() - origin.y()) / hy(), ny)};
    }
};

}  // namespace mgsms
