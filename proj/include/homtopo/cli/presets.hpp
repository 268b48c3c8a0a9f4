#pragma once

// Benchmark geometries expanded into explicit boundary segments.

#include <string>
#include <vector>

#include "homtopo/mesh/mesh.hpp"

namespace homtopo {

inline const std::vector<std::string> &preset_names() {
    static const std::vector<std::string> names{"cantilever", "bridge", "mbb", "lbeam", "radiator", "square"};
    return names;
}

inline bool is_preset(const std::string &name) {
    for (const auto &n : preset_names())
        if (n == name) return true;
    return false;
}

namespace detail {

/// Interval of `edges` mesh edges centered at c, clipped to [0, len].
inline std::pair<double, double> band(double c, int edges, double h, double len) {
    const double half = 0.5 * edges * h;
    return {std::max(0.0, c - half), std::min(len, c + half)};
}

}  // namespace detail

/// Boundary segments of a named benchmark. Loads are unit tractions
/// (elasticity) or unit fluxes (conductivity) over a band of `band_edges` edges.
inline std::vector<BoundarySegment> preset_segments(const std::string &name, int nx, int ny, double lx, double ly,
                                                    int band_edges = 2) {
    const double hx = lx / nx, hy = ly / ny;
    const Vec2 down(0.0, -1.0);
    std::vector<BoundarySegment> s;
    if (name == "cantilever") {
        const auto [a, b] = detail::band(0.5 * ly, band_edges, hy, ly);
        s.push_back({Side::Left, 0, ly, BoundaryTag::Dirichlet});
        s.push_back({Side::Right, a, b, BoundaryTag::Neumann, down});
    } else if (name == "bridge") {
        const auto [a, b] = detail::band(0.5 * lx, band_edges, hx, lx);
        s.push_back({Side::Bottom, 0, band_edges * hx, BoundaryTag::Dirichlet});
        s.push_back({Side::Bottom, a, b, BoundaryTag::Neumann, down});
        s.push_back({Side::Bottom, lx - band_edges * hx, lx, BoundaryTag::Dirichlet});
    } else if (name == "mbb") {
        const auto [a, b] = detail::band(0.5 * lx, band_edges, hx, lx);
        s.push_back({Side::Bottom, 0, band_edges * hx, BoundaryTag::Dirichlet});
        s.push_back({Side::Bottom, lx - band_edges * hx, lx, BoundaryTag::Dirichlet});
        s.push_back({Side::Top, a, b, BoundaryTag::Neumann, down});
    } else if (name == "lbeam") {
        // the upper right quadrant is removed; clamped on the top of the vertical arm,
        // loaded at the tip of the horizontal arm
        const auto [a, b] = detail::band(0.25 * ly, band_edges, hy, 0.5 * ly);
        s.push_back({Side::Top, 0, 0.5 * lx, BoundaryTag::Dirichlet});
        s.push_back({Side::Right, a, b, BoundaryTag::Neumann, down});
    } else if (name == "radiator") {
        s.push_back({Side::Left, 0.4 * ly, 0.6 * ly, BoundaryTag::Dirichlet});
        s.push_back({Side::Right, 0, ly, BoundaryTag::Neumann, Vec2(1.0, 0.0)});
    } else if (name == "square") {
        for (Side side : {Side::Bottom, Side::Right, Side::Top, Side::Left})
            s.push_back({side, 0, (side == Side::Bottom || side == Side::Top) ? lx : ly, BoundaryTag::Dirichlet});
    } else {
        throw InvalidArgument("unknown preset '" + name + "'");
    }
    return s;
}

/// Mesh of a named benchmark, with the removed region masked out.
inline Mesh2D preset_mesh(const std::string &name, int nx, int ny, double lx, double ly, int band_edges = 2) {
    Mesh2D m = make_mesh(nx, ny, lx, ly, preset_segments(name, nx, ny, lx, ly, band_edges));
    if (name == "lbeam") mask_elements(m, [&](const Vec2 &c) { return c(0) > 0.5 * lx && c(1) > 0.5 * ly; });
    return m;
}

}  // namespace homtopo
