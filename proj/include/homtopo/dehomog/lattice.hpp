#pragma once

// Graded square-hole lattice at period eps: level-set projection on a fine
// grid, cleaning for a minimal feature size, contour extraction and export.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <queue>

#include "homtopo/dehomog/conformal.hpp"
#include "homtopo/io/vtk.hpp"

namespace homtopo {

struct LatticeOptions {
    int nodes_per_period = 8;  // fine grid density when no explicit size is given
    int fine_nx = 0, fine_ny = 0;
};

/// Level set F on a regular fine grid; material is {F <= 0}.
struct LatticeShape {
    int nx = 0, ny = 0;  // fine cells
    double lx = 0.0, ly = 0.0;
    double eps = 0.0, h_min = 0.0;
    VecX F, phi1, phi2, m1, m2, r;  // nodal
    std::vector<char> inside;       // node lies in the design domain
    std::vector<char> mask;         // F <= 0 and inside
    std::vector<char> cleaned;      // after post-processing (equals mask before)
    std::vector<std::string> warnings;

    double hx() const { return lx / nx; }
    double hy() const { return ly / ny; }
    int num_nodes() const { return (nx + 1) * (ny + 1); }
    int node(int i, int j) const { return j * (nx + 1) + i; }
    Vec2 position(int n) const { return Vec2((n % (nx + 1)) * hx(), (n / (nx + 1)) * hy()); }
};

namespace detail {

inline double cell_level(double phi, double m, double eps) {
    return -std::cos(2 * kPi * phi / eps) + std::cos(kPi * (1.0 - m));
}

/// Element and reference coordinates of x, preferring active elements when x
/// lies on an element boundary. Returns -1 outside the active domain.
inline int locate(const Mesh2D &mesh, const Vec2 &x, Vec2 &s) {
    const double u = x(0) / mesh.hx(), v = x(1) / mesh.hy();
    const int i0 = std::clamp(static_cast<int>(std::floor(u)), 0, mesh.nx - 1);
    const int j0 = std::clamp(static_cast<int>(std::floor(v)), 0, mesh.ny - 1);
    const double tol = 1e-9;
    for (int di = 0; di >= -1; --di)
        for (int dj = 0; dj >= -1; --dj) {
            const int i = i0 + di, j = j0 + dj;
            if (i < 0 || j < 0) continue;
            const double su = u - i, sv = v - j;
            if (su < -tol || su > 1 + tol || sv < -tol || sv > 1 + tol) continue;
            const int e = mesh.element_index(i, j);
            if (!mesh.active[e]) continue;
            s = Vec2(std::clamp(su, 0.0, 1.0), std::clamp(sv, 0.0, 1.0));
            return e;
        }
    return -1;
}

/// Node values from element values: mean over adjacent active elements.
inline VecX element_to_nodes(const Mesh2D &mesh, const VecX &v) {
    VecX sum = VecX::Zero(mesh.num_nodes()), cnt = VecX::Zero(mesh.num_nodes());
    for (int e = 0; e < mesh.num_elements(); ++e)
        if (mesh.active[e])
            for (int n : mesh.elements[e]) {
                sum(n) += v(e);
                cnt(n) += 1.0;
            }
    for (int n = 0; n < mesh.num_nodes(); ++n)
        if (cnt(n) > 0) sum(n) /= cnt(n);
    return sum;
}

inline void refresh_level(LatticeShape &s) {
    s.mask.assign(s.num_nodes(), 0);
    for (int n = 0; n < s.num_nodes(); ++n) {
        s.F(n) = s.inside[n] ? std::min(cell_level(s.phi1(n), s.m1(n), s.eps), cell_level(s.phi2(n), s.m2(n), s.eps))
                             : 1.0;
        s.mask[n] = s.inside[n] && s.F(n) <= 0.0;
    }
}

}  // namespace detail

/// Evaluates f_i = -cos(2 pi phi_i / eps) + cos(pi (1 - m_i)) and F = min(f_1, f_2)
/// at the nodes of a fine grid. m is given per element and interpolated.
inline LatticeShape project_lattice(const Mesh2D &mesh, const CoverMap &cover, const VecX &m1, const VecX &m2,
                                    double eps, const LatticeOptions &opt = {}) {
    if (!(eps > 0.0)) throw InvalidArgument("the period eps must be positive");
    if (m1.size() != mesh.num_elements() || m2.size() != mesh.num_elements())
        throw InvalidArgument("hole sizes must be given per element");
    if (static_cast<int>(cover.phi.size()) != mesh.num_elements()) throw InvalidArgument("map does not match the mesh");
    LatticeShape s;
    s.lx = mesh.lx;
    s.ly = mesh.ly;
    s.eps = eps;
    s.nx = opt.fine_nx > 0 ? opt.fine_nx : static_cast<int>(std::ceil(opt.nodes_per_period * mesh.lx / eps - 1e-9));
    s.ny = opt.fine_ny > 0 ? opt.fine_ny : static_cast<int>(std::ceil(opt.nodes_per_period * mesh.ly / eps - 1e-9));
    if (eps < 2.0 * std::max(s.hx(), s.hy()))
        throw InvalidArgument("the period eps is smaller than two cells of the evaluation grid");
    const int nn = s.num_nodes();
    s.F = s.phi1 = s.phi2 = s.m1 = s.m2 = s.r = VecX::Zero(nn);
    s.inside.assign(nn, 0);
    const VecX n1 = detail::element_to_nodes(mesh, m1), n2 = detail::element_to_nodes(mesh, m2);
    const bool has_r = cover.r.size() == mesh.num_nodes();
    for (int n = 0; n < nn; ++n) {
        Vec2 ref;
        const int e = detail::locate(mesh, s.position(n), ref);
        if (e < 0) continue;
        s.inside[n] = 1;
        const Vec4 w = Q1Element::shape_values(ref);
        const Vec2 phi = cover.eval(e, ref);
        s.phi1(n) = phi(0);
        s.phi2(n) = phi(1);
        s.m1(n) = std::clamp(w.dot(detail::gather4(mesh, n1, e)), 0.0, 1.0);
        s.m2(n) = std::clamp(w.dot(detail::gather4(mesh, n2, e)), 0.0, 1.0);
        if (has_r) s.r(n) = w.dot(detail::gather4(mesh, cover.r, e));
    }
    detail::refresh_level(s);
    s.cleaned = s.mask;
    return s;
}

/// Area of {F <= 0}, integrating the bilinear interpolant of F on sub-cells.
/// With `cleaned`, sub-samples also need their nearest node in the cleaned mask.
inline double lattice_area(const LatticeShape &s, bool cleaned = false, int sub = 4) {
    double count = 0.0;
    for (int j = 0; j < s.ny; ++j)
        for (int i = 0; i < s.nx; ++i) {
            const int c[4] = {s.node(i, j), s.node(i + 1, j), s.node(i + 1, j + 1), s.node(i, j + 1)};
            if (!(s.inside[c[0]] && s.inside[c[1]] && s.inside[c[2]] && s.inside[c[3]])) continue;
            const Vec4 f(s.F(c[0]), s.F(c[1]), s.F(c[2]), s.F(c[3]));
            for (int b = 0; b < sub; ++b)
                for (int a = 0; a < sub; ++a) {
                    const Vec2 ref((a + 0.5) / sub, (b + 0.5) / sub);
                    if (Q1Element::shape_values(ref).dot(f) > 0.0) continue;
                    if (cleaned) {
                        const int near = c[(ref(0) < 0.5 ? (ref(1) < 0.5 ? 0 : 3) : (ref(1) < 0.5 ? 1 : 2))];
                        if (!s.cleaned[near]) continue;
                    }
                    count += 1.0;
                }
        }
    return count * s.hx() * s.hy() / (sub * sub);
}

namespace detail {

/// Nodes reachable through 4-neighbours from the seeds while `pass` holds.
inline std::vector<char> flood(const LatticeShape &s, const std::vector<char> &pass, const std::vector<int> &seeds) {
    std::vector<char> seen(s.num_nodes(), 0);
    std::queue<int> todo;
    for (int n : seeds)
        if (pass[n] && !seen[n]) {
            seen[n] = 1;
            todo.push(n);
        }
    while (!todo.empty()) {
        const int n = todo.front();
        todo.pop();
        const int i = n % (s.nx + 1), j = n / (s.nx + 1);
        const int nb[4][2] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
        for (const auto &p : nb) {
            if (p[0] < 0 || p[1] < 0 || p[0] > s.nx || p[1] > s.ny) continue;
            const int k = s.node(p[0], p[1]);
            if (pass[k] && !seen[k]) {
                seen[k] = 1;
                todo.push(k);
            }
        }
    }
    return seen;
}

inline std::vector<int> grid_boundary(const LatticeShape &s) {
    std::vector<int> out;
    for (int i = 0; i <= s.nx; ++i) out.insert(out.end(), {s.node(i, 0), s.node(i, s.ny)});
    for (int j = 1; j < s.ny; ++j) out.insert(out.end(), {s.node(0, j), s.node(s.nx, j)});
    return out;
}

/// Fine boundary nodes lying on Dirichlet segments of the mesh.
inline std::vector<int> support_nodes(const LatticeShape &s, const Mesh2D &mesh) {
    std::vector<int> out;
    const double tol = 1e-9 * std::max(s.lx, s.ly);
    for (int n : grid_boundary(s)) {
        const Vec2 x = s.position(n);
        for (const auto &seg : mesh.segments) {
            if (seg.tag != BoundaryTag::Dirichlet) continue;
            double t = 0.0;
            bool on = false;
            switch (seg.side) {
                case Side::Bottom: on = std::abs(x(1)) <= tol, t = x(0); break;
                case Side::Top: on = std::abs(x(1) - s.ly) <= tol, t = x(0); break;
                case Side::Left: on = std::abs(x(0)) <= tol, t = x(1); break;
                case Side::Right: on = std::abs(x(0) - s.lx) <= tol, t = x(1); break;
            }
            if (on && t >= seg.from - tol && t <= seg.to + tol) {
                out.push_back(n);
                break;
            }
        }
    }
    return out;
}

}  // namespace detail

/// Removes material not connected to any support node, or every component but
/// the largest when there is no support.
inline std::vector<char> keep_supported(const LatticeShape &s, const std::vector<char> &mask,
                                        const std::vector<int> &supports) {
    std::vector<int> seeds;
    for (int n : supports)
        if (mask[n]) seeds.push_back(n);
    if (!seeds.empty()) return detail::flood(s, mask, seeds);
    std::vector<char> best(s.num_nodes(), 0), seen(s.num_nodes(), 0);
    long best_size = 0;
    for (int n = 0; n < s.num_nodes(); ++n) {
        if (!mask[n] || seen[n]) continue;
        const auto comp = detail::flood(s, mask, {n});
        long size = 0;
        for (int k = 0; k < s.num_nodes(); ++k)
            if (comp[k]) {
                seen[k] = 1;
                ++size;
            }
        if (size > best_size) {
            best_size = size;
            best = comp;
        }
    }
    return best;
}

/// Cleaning of a material mask: closed holes are filled, the outer void is
/// closed at radius h_min (segments between outer void nodes closer than
/// h_min become void), and the result is intersected with the mask.
inline std::vector<char> clean_mask(const LatticeShape &s, const std::vector<char> &mask, double h_min) {
    const int nn = s.num_nodes();
    std::vector<char> voidn(nn);
    for (int n = 0; n < nn; ++n) voidn[n] = !mask[n];
    std::vector<int> seeds = detail::grid_boundary(s);
    for (int n = 0; n < nn; ++n)
        if (!s.inside[n]) seeds.push_back(n);
    const auto outer = detail::flood(s, voidn, seeds);
    std::vector<char> closed = outer;
    const int ri = static_cast<int>(std::floor(h_min / s.hx() + 1e-9));
    const int rj = static_cast<int>(std::floor(h_min / s.hy() + 1e-9));
    for (int n = 0; n < nn; ++n) {
        if (!outer[n]) continue;
        const int i = n % (s.nx + 1), j = n / (s.nx + 1);
        for (int dj = -rj; dj <= rj; ++dj)
            for (int di = -ri; di <= ri; ++di) {
                // each unordered pair once
                if (dj < 0 || (dj == 0 && di <= 0)) continue;
                const int i2 = i + di, j2 = j + dj;
                if (i2 < 0 || j2 < 0 || i2 > s.nx || j2 > s.ny) continue;
                if (std::hypot(di * s.hx(), dj * s.hy()) > h_min * (1 + 1e-12)) continue;
                if (!outer[s.node(i2, j2)]) continue;
                const int steps = std::max(std::abs(di), std::abs(dj));
                for (int k = 1; k < steps; ++k) {
                    const int ii = i + static_cast<int>(std::lround(double(k) * di / steps));
                    const int jj = j + static_cast<int>(std::lround(double(k) * dj / steps));
                    closed[s.node(ii, jj)] = 1;
                }
            }
    }
    std::vector<char> out(nn);
    for (int n = 0; n < nn; ++n) out[n] = mask[n] && !closed[n];
    return out;
}

/// Manufacturability post-processing with the local cell size h_c = eps e^{-r}:
/// hole sizes are snapped to void or full where a hole or a bar would be
/// thinner than h_min, the level set is rebuilt, the mask is cleaned, and
/// only material connected to the supports is kept.
inline LatticeShape postprocess(LatticeShape s, const Mesh2D &mesh, double h_min) {
    if (!(h_min > 0.0)) throw InvalidArgument("h_min must be positive");
    s.h_min = h_min;
    if (h_min >= s.eps)
        s.warnings.push_back("h_min >= eps: every cell is thresholded to full or void");
    for (int n = 0; n < s.num_nodes(); ++n) {
        if (!s.inside[n]) continue;
        const double hc = s.eps * std::exp(-s.r(n));
        for (double *m : {&s.m1(n), &s.m2(n)}) {
            if (hc < 2 * h_min) *m = *m < 0.5 ? 0.0 : 1.0;
            else if (*m < h_min / hc) *m = 0.0;
            else if (*m > 1.0 - h_min / hc) *m = 1.0;
        }
    }
    detail::refresh_level(s);
    s.cleaned = keep_supported(s, clean_mask(s, s.mask, h_min), detail::support_nodes(s, mesh));
    return s;
}

// ---------------------------------------------------------------------------
// Contours

using Polyline = std::vector<Vec2>;

namespace detail {

/// Value whose zero contour bounds the cleaned material.
inline VecX contour_field(const LatticeShape &s) {
    VecX g(s.num_nodes());
    for (int n = 0; n < s.num_nodes(); ++n) g(n) = s.cleaned[n] ? s.F(n) : std::max(s.F(n), 0.5);
    return g;
}

inline void drop_collinear(Polyline &p) {
    bool changed = true;
    while (changed && p.size() > 3) {
        changed = false;
        for (size_t k = 0; k < p.size() && p.size() > 3; ++k) {
            const Vec2 &a = p[(k + p.size() - 1) % p.size()], &b = p[k], &c = p[(k + 1) % p.size()];
            const Vec2 u = b - a, v = c - b;
            if (std::abs(u(0) * v(1) - u(1) * v(0)) <= 1e-12 * (u.norm() * v.norm() + 1e-300) && u.dot(v) >= 0) {
                p.erase(p.begin() + static_cast<long>(k));
                changed = true;
                --k;
            }
        }
    }
}

}  // namespace detail

/// Closed boundary loops of the cleaned material by marching squares on the
/// grid padded with void, ambiguous cells resolved by the center value.
inline std::vector<Polyline> lattice_contours(const LatticeShape &s) {
    const VecX g = detail::contour_field(s);
    const int px = s.nx + 3, py = s.ny + 3;  // padded node counts
    auto value = [&](int i, int j) {  // padded indices, node (i-1, j-1) of the grid
        if (i < 1 || j < 1 || i > s.nx + 1 || j > s.ny + 1) return 1.0;
        return g(s.node(i - 1, j - 1));
    };
    auto pos = [&](int i, int j) { return Vec2((i - 1) * s.hx(), (j - 1) * s.hy()); };
    // crossing points are keyed by grid edge: horizontal edges 2k, vertical 2k+1
    auto hkey = [&](int i, int j) { return 2L * (static_cast<long>(j) * px + i); };
    auto vkey = [&](int i, int j) { return 2L * (static_cast<long>(j) * px + i) + 1; };
    std::map<long, Vec2> point;
    std::map<long, std::vector<long>> link;
    auto crossing = [&](long key, int i0, int j0, int i1, int j1) {
        if (point.count(key)) return;
        const double a = value(i0, j0), b = value(i1, j1);
        const double t = a / (a - b);
        Vec2 x = pos(i0, j0) + t * (pos(i1, j1) - pos(i0, j0));
        x(0) = std::clamp(x(0), 0.0, s.lx);
        x(1) = std::clamp(x(1), 0.0, s.ly);
        point[key] = x;
    };
    for (int j = 0; j + 1 < py; ++j)
        for (int i = 0; i + 1 < px; ++i) {
            const double v[4] = {value(i, j), value(i + 1, j), value(i + 1, j + 1), value(i, j + 1)};
            int code = 0;
            for (int k = 0; k < 4; ++k)
                if (v[k] <= 0.0) code |= 1 << k;
            if (code == 0 || code == 15) continue;
            // edges: 0 bottom, 1 right, 2 top, 3 left
            const long key[4] = {hkey(i, j), vkey(i + 1, j), hkey(i, j + 1), vkey(i, j)};
            const int ends[4][4] = {{i, j, i + 1, j}, {i + 1, j, i + 1, j + 1}, {i, j + 1, i + 1, j + 1}, {i, j, i, j + 1}};
            std::vector<int> cut;
            for (int k = 0; k < 4; ++k) {
                const bool a = (code >> k) & 1, b = (code >> ((k + 1) % 4)) & 1;
                if (a != b) cut.push_back(k);
            }
            for (int k : cut) crossing(key[k], ends[k][0], ends[k][1], ends[k][2], ends[k][3]);
            auto connect = [&](int e0, int e1) {
                link[key[e0]].push_back(key[e1]);
                link[key[e1]].push_back(key[e0]);
            };
            if (cut.size() == 2) {
                connect(cut[0], cut[1]);
            } else {
                // saddle: corners 0 and 2 share a state; the center decides whether they connect
                const bool center_in = 0.25 * (v[0] + v[1] + v[2] + v[3]) <= 0.0;
                const bool corner0_in = code & 1;
                if (center_in == corner0_in) {
                    connect(0, 1);
                    connect(2, 3);
                } else {
                    connect(3, 0);
                    connect(1, 2);
                }
            }
        }
    std::vector<Polyline> loops;
    std::map<long, char> used;
    for (const auto &[start, nbrs] : link) {
        if (used[start]) continue;
        Polyline p;
        long prev = -1, cur = start;
        while (true) {
            used[cur] = 1;
            p.push_back(point.at(cur));
            const auto &nb = link.at(cur);
            long next = -1;
            for (long k : nb)
                if (k != prev && !used[k]) {
                    next = k;
                    break;
                }
            if (next < 0) break;
            prev = cur;
            cur = next;
        }
        detail::drop_collinear(p);
        if (p.size() >= 3) loops.push_back(std::move(p));
    }
    return loops;
}

namespace detail {

inline std::string svg_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    std::string s = buf;
    if (s == "-0.000000") s = "0.000000";
    return s;
}

}  // namespace detail

/// SVG with one path per contour loop, even-odd filled, y pointing up.
inline void write_svg(const LatticeShape &s, const std::string &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path + " for writing");
    const auto loops = lattice_contours(s);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << detail::svg_number(s.lx) << " "
        << detail::svg_number(s.ly) << "\" width=\"" << detail::svg_number(1000.0 * s.lx / std::max(s.lx, s.ly))
        << "\" height=\"" << detail::svg_number(1000.0 * s.ly / std::max(s.lx, s.ly)) << "\">\n";
    out << "<g fill=\"black\" fill-rule=\"evenodd\" stroke=\"none\">\n";
    for (const auto &p : loops) {
        out << "<path d=\"";
        for (size_t k = 0; k < p.size(); ++k)
            out << (k ? " L " : "M ") << detail::svg_number(p[k](0)) << " " << detail::svg_number(s.ly - p[k](1));
        out << " Z\"/>\n";
    }
    out << "</g>\n</svg>\n";
}

/// Fine grid fields: F, the masks, and a cell mask (all corners cleaned).
inline void write_lattice_vtk(const LatticeShape &s, const std::string &path) {
    VtkWriter w(s.nx, s.ny, s.hx(), s.hy());
    VecX mask(s.num_nodes()), cleaned(s.num_nodes()), cells(s.nx * s.ny);
    for (int n = 0; n < s.num_nodes(); ++n) {
        mask(n) = s.mask[n];
        cleaned(n) = s.cleaned[n];
    }
    for (int j = 0; j < s.ny; ++j)
        for (int i = 0; i < s.nx; ++i)
            cells(j * s.nx + i) = s.cleaned[s.node(i, j)] && s.cleaned[s.node(i + 1, j)] &&
                                  s.cleaned[s.node(i + 1, j + 1)] && s.cleaned[s.node(i, j + 1)];
    w.point_scalar("F", s.F);
    w.point_scalar("mask", mask);
    w.point_scalar("cleaned", cleaned);
    w.cell_scalar("material", cells);
    w.write(path);
}

}  // namespace homtopo
