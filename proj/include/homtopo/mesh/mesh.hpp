#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "homtopo/core/kelvin.hpp"

namespace homtopo {

enum class BoundaryTag { Free, Dirichlet, Neumann };
enum class Side { Bottom, Right, Top, Left };

inline const char *side_name(Side s) {
    switch (s) {
        case Side::Bottom: return "bottom";
        case Side::Right: return "right";
        case Side::Top: return "top";
        case Side::Left: return "left";
    }
    return "?";
}

/// A tagged interval of one side of the rectangle. The interval is in physical
/// coordinates along the side (x for bottom/top, y for left/right). Neumann
/// segments carry a surface load: a vector traction for elasticity and the
/// first component as a scalar flux for scalar problems.
struct BoundarySegment {
    Side side = Side::Left;
    double from = 0.0;
    double to = 0.0;
    BoundaryTag tag = BoundaryTag::Free;
    Vec2 load = Vec2::Zero();
};

struct BoundaryEdge {
    int a = 0, b = 0;  // node indices, oriented counter-clockwise around the domain
    Side side = Side::Bottom;
    BoundaryTag tag = BoundaryTag::Free;
    int segment = -1;  // index in Mesh2D::segments, -1 when untagged
    double length = 0.0;
};

/// Structured Q1 mesh of [0,lx] x [0,ly] with nx x ny rectangular elements.
/// Node (i,j) sits at (i hx, j hy) and has index j (nx+1) + i; element (i,j)
/// has index j nx + i with nodes listed counter-clockwise from the lower left.
class Mesh2D {
  public:
    int nx = 0, ny = 0;
    double lx = 0.0, ly = 0.0;
    std::vector<Vec2> nodes;
    std::vector<std::array<int, 4>> elements;
    std::vector<BoundaryEdge> boundary_edges;
    std::vector<BoundarySegment> segments;
    std::vector<char> active;  // element mask, 0 = outside the design domain

    double hx() const { return lx / nx; }
    double hy() const { return ly / ny; }
    double element_area() const { return hx() * hy(); }
    int num_nodes() const { return (nx + 1) * (ny + 1); }
    int num_elements() const { return nx * ny; }
    int node_index(int i, int j) const { return j * (nx + 1) + i; }
    int element_index(int i, int j) const { return j * nx + i; }

    Vec2 element_center(int e) const {
        const int i = e % nx, j = e / nx;
        return Vec2((i + 0.5) * hx(), (j + 0.5) * hy());
    }

    int num_active() const {
        int n = 0;
        for (char a : active) n += a ? 1 : 0;
        return n;
    }

    double active_area() const { return num_active() * element_area(); }

    bool has_dirichlet() const {
        for (const auto &e : boundary_edges)
            if (e.tag == BoundaryTag::Dirichlet) return true;
        return false;
    }

    /// Nodes lying on a Dirichlet edge.
    std::vector<int> dirichlet_nodes() const {
        std::vector<char> mark(num_nodes(), 0);
        for (const auto &e : boundary_edges)
            if (e.tag == BoundaryTag::Dirichlet) mark[e.a] = mark[e.b] = 1;
        std::vector<int> out;
        for (int n = 0; n < num_nodes(); ++n)
            if (mark[n]) out.push_back(n);
        return out;
    }

    /// Nodes that belong to at least one active element.
    std::vector<char> active_nodes() const {
        std::vector<char> mark(num_nodes(), 0);
        for (int e = 0; e < num_elements(); ++e)
            if (active[e])
                for (int n : elements[e]) mark[n] = 1;
        return mark;
    }
};

namespace detail {

inline double side_length(const Mesh2D &m, Side s) {
    return (s == Side::Bottom || s == Side::Top) ? m.lx : m.ly;
}

}  // namespace detail

/// Builds the structured mesh and tags boundary edges from the segment list.
/// An edge belongs to a segment when its midpoint lies inside the interval.
inline Mesh2D make_mesh(int nx, int ny, double lx, double ly,
                        const std::vector<BoundarySegment> &segments = {}) {
    if (nx < 1 || ny < 1) throw InvalidArgument("mesh needs at least one element per direction");
    if (!(lx > 0.0) || !(ly > 0.0)) throw InvalidArgument("domain lengths must be positive");

    Mesh2D m;
    m.nx = nx;
    m.ny = ny;
    m.lx = lx;
    m.ly = ly;
    m.segments = segments;
    const double hx = lx / nx, hy = ly / ny;
    m.nodes.reserve(m.num_nodes());
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i) m.nodes.emplace_back(i * hx, j * hy);
    m.elements.reserve(m.num_elements());
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            m.elements.push_back({m.node_index(i, j), m.node_index(i + 1, j),
                                  m.node_index(i + 1, j + 1), m.node_index(i, j + 1)});
    m.active.assign(m.num_elements(), 1);

    for (size_t s = 0; s < segments.size(); ++s) {
        const auto &seg = segments[s];
        const double len = detail::side_length(m, seg.side);
        if (!(seg.from < seg.to) || seg.from < -1e-12 * len || seg.to > len * (1 + 1e-12))
            throw InvalidArgument(std::string("boundary segment on side ") + side_name(seg.side) +
                                  " has an invalid interval");
        for (size_t t = 0; t < s; ++t) {
            const auto &o = segments[t];
            if (o.side != seg.side) continue;
            const double overlap = std::min(o.to, seg.to) - std::max(o.from, seg.from);
            if (overlap > 1e-12 * len)
                throw InvalidArgument(std::string("overlapping boundary segments on side ") +
                                      side_name(seg.side));
        }
    }

    auto add_edge = [&](int a, int b, Side side, double mid, double length) {
        BoundaryEdge e;
        e.a = a;
        e.b = b;
        e.side = side;
        e.length = length;
        for (size_t s = 0; s < segments.size(); ++s) {
            const auto &seg = segments[s];
            if (seg.side == side && mid >= seg.from && mid <= seg.to) {
                e.tag = seg.tag;
                e.segment = static_cast<int>(s);
                break;
            }
        }
        m.boundary_edges.push_back(e);
    };
    for (int i = 0; i < nx; ++i) add_edge(m.node_index(i, 0), m.node_index(i + 1, 0), Side::Bottom, (i + 0.5) * hx, hx);
    for (int j = 0; j < ny; ++j) add_edge(m.node_index(nx, j), m.node_index(nx, j + 1), Side::Right, (j + 0.5) * hy, hy);
    for (int i = nx - 1; i >= 0; --i) add_edge(m.node_index(i + 1, ny), m.node_index(i, ny), Side::Top, (i + 0.5) * hx, hx);
    for (int j = ny - 1; j >= 0; --j) add_edge(m.node_index(0, j + 1), m.node_index(0, j), Side::Left, (j + 0.5) * hy, hy);
    return m;
}

/// Marks elements whose center satisfies `inside` as inactive.
inline void mask_elements(Mesh2D &m, const std::function<bool(const Vec2 &)> &inside) {
    for (int e = 0; e < m.num_elements(); ++e)
        if (inside(m.element_center(e))) m.active[e] = 0;
}

enum class Association { PerNode, PerElement };

struct ScalarField {
    Association association = Association::PerElement;
    VecX values;
};

struct VectorField {
    Association association = Association::PerElement;
    Eigen::Matrix<double, Eigen::Dynamic, 2> values;
};

/// Symmetric tensor field, one Kelvin row per entity.
struct TensorField2 {
    Association association = Association::PerElement;
    Eigen::Matrix<double, Eigen::Dynamic, 3> values;
};

inline ScalarField element_field(VecX v) { return {Association::PerElement, std::move(v)}; }
inline ScalarField node_field(VecX v) { return {Association::PerNode, std::move(v)}; }

}  // namespace homtopo
