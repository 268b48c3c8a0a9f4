#pragma once

// Dilation field and grid map phi with grad phi = e^r T, T^2 = Q(beta), built
// on the double cover of the domain.

#include <numeric>
#include <queue>

#include "homtopo/dehomog/orientation.hpp"

namespace homtopo {

namespace detail {

/// Connected components of the active elements, linked through shared nodes.
/// Returns the component of every node (-1 when the node is inactive).
inline std::vector<int> node_components(const Mesh2D &m, int *count = nullptr) {
    std::vector<int> parent(m.num_nodes());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (int e = 0; e < m.num_elements(); ++e)
        if (m.active[e])
            for (int a = 1; a < 4; ++a) parent[find(m.elements[e][a])] = find(m.elements[e][0]);
    const auto act = m.active_nodes();
    std::vector<int> label(m.num_nodes(), -1), root_label(m.num_nodes(), -1);
    int n = 0;
    for (int i = 0; i < m.num_nodes(); ++i) {
        if (!act[i]) continue;
        const int r = find(i);
        if (root_label[r] < 0) root_label[r] = n++;
        label[i] = root_label[r];
    }
    if (count) *count = n;
    return label;
}

inline void require_regular(const Mesh2D &m, const OrientationField &nodal, const char *what) {
    const auto s = detect_singularities(m, nodal);
    if (s.empty()) return;
    std::vector<std::pair<int, double>> charges;
    for (const auto &x : s) charges.emplace_back(x.cell, x.charge);
    throw SingularityError(std::string(what) + " refused: the orientation has " + std::to_string(s.size()) +
                               " singularities (" + describe(s) + ")",
                           charges);
}

}  // namespace detail

struct DilationField {
    VecX r;                  // nodal, mean zero on every connected component
    double residual = 0.0;   // misfit of grad r, relative to the target or to a unit gradient
};

/// r minimizing int |grad r - rot(grad alpha)|^2 with rot(v) = (-v2, v1) and
/// alpha = beta / 2. The misfit vanishes exactly when beta is harmonic.
inline DilationField dilation_field(const Mesh2D &m, const OrientationField &nodal) {
    if (nodal.association != Association::PerNode || nodal.size() != m.num_nodes())
        throw InvalidArgument("expected a nodal orientation field");
    detail::require_regular(m, nodal, "dilation field");
    const Q1Element el(m.hx(), m.hy());
    const auto gb = detail::beta_gradients(m, nodal);
    auto target = [&](int e, int q) { return Vec2(-0.5 * gb[e][q](1), 0.5 * gb[e][q](0)); };

    SparseSystem sys;
    sys.matrix = detail::laplace_matrix(m);
    sys.rhs = VecX::Zero(m.num_nodes());
    for (int e = 0; e < m.num_elements(); ++e) {
        if (!m.active[e]) continue;
        for (int q = 0; q < 4; ++q) {
            const Vec4 c = el.weight * (el.grad[q].transpose() * target(e, q));
            for (int a = 0; a < 4; ++a) sys.rhs(m.elements[e][a]) += c(a);
        }
    }
    detail::constrain_inactive(m, 1, sys.constrained_dofs);
    int ncomp = 0;
    const auto comp = detail::node_components(m, &ncomp);
    std::vector<char> pinned(ncomp, 0);
    for (int n = 0; n < m.num_nodes(); ++n)
        if (comp[n] >= 0 && !pinned[comp[n]]) {
            pinned[comp[n]] = 1;
            sys.constrained_dofs.emplace_back(n, 0.0);
        }
    DilationField out;
    out.r = solve(sys).x;

    const VecX w = detail::lumped_node_weights(m);
    std::vector<double> sw(ncomp, 0.0), swr(ncomp, 0.0);
    for (int n = 0; n < m.num_nodes(); ++n)
        if (comp[n] >= 0) {
            sw[comp[n]] += w(n);
            swr[comp[n]] += w(n) * out.r(n);
        }
    for (int n = 0; n < m.num_nodes(); ++n)
        if (comp[n] >= 0 && sw[comp[n]] > 0.0) out.r(n) -= swr[comp[n]] / sw[comp[n]];

    double misfit = 0.0, norm = 0.0;
    for (int e = 0; e < m.num_elements(); ++e) {
        if (!m.active[e]) continue;
        const Vec4 re = detail::gather4(m, out.r, e);
        for (int q = 0; q < 4; ++q) {
            misfit += el.weight * (el.grad[q] * re - target(e, q)).squaredNorm();
            norm += el.weight * target(e, q).squaredNorm();
        }
    }
    out.residual = std::sqrt(misfit / std::max(norm, m.active_area()));
    return out;
}

/// Map on the double cover, stored on the + branch of every element.
struct CoverMap {
    std::vector<Mat2> T;                // per element, a rotation with T^2 = Q(beta)
    std::vector<int> sign;              // branch chosen for T relative to Q(beta / 2)
    std::vector<std::array<Vec4, 2>> phi;  // per element corner values of phi_1, phi_2
    VecX r;                             // nodal dilation
    double energy = 0.0;                // 2 sum_K int_K |grad phi - e^r T|^2
    int components = 0;

    /// phi at reference coordinates s in [0,1]^2 of element e.
    Vec2 eval(int e, const Vec2 &s) const {
        const Vec4 n = Q1Element::shape_values(s);
        return Vec2(n.dot(phi[e][0]), n.dot(phi[e][1]));
    }
};

namespace detail {

/// Union-find over element corners carrying the relative sign of phi.
struct ParityUnion {
    std::vector<int> parent, parity;  // parity relative to the parent
    explicit ParityUnion(int n) : parent(n), parity(n, 0) { std::iota(parent.begin(), parent.end(), 0); }

    std::pair<int, int> find(int x) {
        int p = 0, r = x;
        while (parent[r] != r) {
            p ^= parity[r];
            r = parent[r];
        }
        // compress
        int q = 0;
        for (int y = x; parent[y] != y;) {
            const int next = parent[y], py = parity[y];
            parent[y] = r;
            parity[y] = p ^ q;
            q ^= py;
            y = next;
        }
        return {r, p};
    }

    /// Joins x and y with value(x) = (-1)^rel value(y). Returns false on an odd cycle.
    bool unite(int x, int y, int rel) {
        const auto [rx, px] = find(x);
        const auto [ry, py] = find(y);
        if (rx == ry) return (px ^ py) == rel;
        parent[rx] = ry;
        parity[rx] = px ^ py ^ rel;
        return true;
    }
};

}  // namespace detail

/// Least-squares fit of grad phi_i to e^r T e_i element by element, with
/// values glued across edges up to the branch sign.
inline CoverMap conformal_map(const Mesh2D &m, const OrientationField &nodal, const VecX &r) {
    if (nodal.association != Association::PerNode || nodal.size() != m.num_nodes())
        throw InvalidArgument("expected a nodal orientation field");
    if (r.size() != m.num_nodes()) throw InvalidArgument("dilation field has the wrong size");
    detail::require_regular(m, nodal, "conformal map");
    const int ne = m.num_elements();
    const Q1Element el(m.hx(), m.hy());

    CoverMap cm;
    cm.r = r;
    cm.T.assign(ne, Mat2::Identity());
    cm.sign.assign(ne, 0);
    cm.phi.assign(ne, {Vec4::Zero(), Vec4::Zero()});
    std::vector<Vec4> beta(ne);
    std::vector<Mat2> q0(ne);
    for (int e = 0; e < ne; ++e) {
        beta[e] = detail::local_beta(m, nodal, e);
        q0[e] = rotation2(0.25 * beta[e].sum() * 0.5);
    }

    // branch signs along a breadth-first spanning tree of edge neighbours
    auto neighbours = [&](int e) {
        const int i = e % m.nx, j = e / m.nx;
        std::vector<std::pair<int, int>> out;  // (element, shared edge of e: 0 bottom, 1 right, 2 top, 3 left)
        if (j > 0) out.emplace_back(e - m.nx, 0);
        if (i + 1 < m.nx) out.emplace_back(e + 1, 1);
        if (j + 1 < m.ny) out.emplace_back(e + m.nx, 2);
        if (i > 0) out.emplace_back(e - 1, 3);
        return out;
    };
    for (int seed = 0; seed < ne; ++seed) {
        if (!m.active[seed] || cm.sign[seed] != 0) continue;
        ++cm.components;
        cm.sign[seed] = 1;
        std::queue<int> todo;
        todo.push(seed);
        while (!todo.empty()) {
            const int e = todo.front();
            todo.pop();
            for (const auto &[f, side] : neighbours(e)) {
                if (!m.active[f] || cm.sign[f] != 0) continue;
                cm.sign[f] = (cm.sign[e] * q0[e]).cwiseProduct(q0[f]).sum() >= 0.0 ? 1 : -1;
                todo.push(f);
            }
        }
    }
    for (int e = 0; e < ne; ++e) cm.T[e] = cm.sign[e] * q0[e];

    // glue corners of edge neighbours; an odd cycle means the map is two-valued
    detail::ParityUnion uf(4 * ne);
    static const int edge_corners[4][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}};
    static const int opposite[4][2] = {{3, 2}, {0, 3}, {1, 0}, {2, 1}};  // matching corners in the neighbour
    std::vector<std::pair<int, double>> conflicts;
    for (int e = 0; e < ne; ++e) {
        if (!m.active[e]) continue;
        for (const auto &[f, side] : neighbours(e)) {
            if (!m.active[f] || f < e) continue;
            const int rel = cm.T[e].cwiseProduct(cm.T[f]).sum() >= 0.0 ? 0 : 1;
            for (int k = 0; k < 2; ++k)
                if (!uf.unite(4 * e + edge_corners[side][k], 4 * f + opposite[side][k], rel))
                    conflicts.emplace_back(m.elements[e][edge_corners[side][k]], 0.5);
        }
    }
    if (!conflicts.empty())
        throw SingularityError("conformal map refused: the branch of the orientation is not consistent around " +
                                   std::to_string(conflicts.size()) + " vertices",
                               conflicts);

    // unknowns are the classes of glued corners
    std::vector<int> cls(4 * ne, -1), par(4 * ne, 0), root_index(4 * ne, -1);
    int nclass = 0;
    for (int e = 0; e < ne; ++e) {
        if (!m.active[e]) continue;
        for (int a = 0; a < 4; ++a) {
            const auto [root, p] = uf.find(4 * e + a);
            if (root_index[root] < 0) root_index[root] = nclass++;
            cls[4 * e + a] = root_index[root];
            par[4 * e + a] = p;
        }
    }
    if (nclass == 0) return cm;
    const Mat4 stiff = el.scalar_stiffness(Mat2::Identity());
    std::vector<Triplet> trip;
    MatX rhs = MatX::Zero(nclass, 2);
    auto target = [&](int e, int q, int comp) {
        const Vec4 n = el.shape[q];
        const double alpha = 0.5 * n.dot(beta[e]);
        const double scale = std::exp(n.dot(detail::gather4(m, r, e)));
        const Mat2 t = cm.sign[e] * rotation2(alpha);
        return Vec2(scale * t.col(comp));
    };
    for (int e = 0; e < ne; ++e) {
        if (!m.active[e]) continue;
        Vec4 s;
        for (int a = 0; a < 4; ++a) s(a) = par[4 * e + a] ? -1.0 : 1.0;
        for (int a = 0; a < 4; ++a)
            for (int c = 0; c < 4; ++c) trip.emplace_back(cls[4 * e + a], cls[4 * e + c], s(a) * s(c) * stiff(a, c));
        for (int comp = 0; comp < 2; ++comp) {
            Vec4 b = Vec4::Zero();
            for (int q = 0; q < 4; ++q) b += el.weight * (el.grad[q].transpose() * target(e, q, comp));
            for (int a = 0; a < 4; ++a) rhs(cls[4 * e + a], comp) += s(a) * b(a);
        }
    }
    // one class per component is pinned to zero; components follow the element tree
    std::vector<char> pin_class(nclass, 0);
    {
        std::vector<char> seen(ne, 0);
        for (int e = 0; e < ne; ++e) {
            if (!m.active[e] || seen[e]) continue;
            pin_class[cls[4 * e]] = 1;
            std::queue<int> todo;
            todo.push(e);
            seen[e] = 1;
            while (!todo.empty()) {
                const int x = todo.front();
                todo.pop();
                for (const auto &[f, side] : neighbours(x))
                    if (m.active[f] && !seen[f]) {
                        seen[f] = 1;
                        todo.push(f);
                    }
            }
        }
    }
    SparseSystem sys;
    sys.matrix.resize(nclass, nclass);
    sys.matrix.setFromTriplets(trip.begin(), trip.end());
    for (int c = 0; c < nclass; ++c)
        if (pin_class[c]) sys.constrained_dofs.emplace_back(c, 0.0);
    LinearSolver solver;
    VecX x[2];
    for (int comp = 0; comp < 2; ++comp) {
        sys.rhs = rhs.col(comp);
        x[comp] = solver.solve(sys).x;
    }

    for (int e = 0; e < ne; ++e) {
        if (!m.active[e]) continue;
        for (int comp = 0; comp < 2; ++comp)
            for (int a = 0; a < 4; ++a)
                cm.phi[e][comp](a) = (par[4 * e + a] ? -1.0 : 1.0) * x[comp](cls[4 * e + a]);
        for (int q = 0; q < 4; ++q)
            for (int comp = 0; comp < 2; ++comp)
                cm.energy += 2 * el.weight * (el.grad[q] * cm.phi[e][comp] - target(e, q, comp)).squaredNorm();
    }
    return cm;
}

/// Per element ||J^T J - e^{2r} I|| / e^{2r} at the center, J = grad phi.
inline VecX conformality_defect(const Mesh2D &m, const CoverMap &cm) {
    const Q1Element el(m.hx(), m.hy());
    VecX d = VecX::Zero(m.num_elements());
    for (int e = 0; e < m.num_elements(); ++e) {
        if (!m.active[e]) continue;
        Mat2 j;
        j.row(0) = (el.center_grad * cm.phi[e][0]).transpose();
        j.row(1) = (el.center_grad * cm.phi[e][1]).transpose();
        const double s = std::exp(2 * 0.25 * detail::gather4(m, cm.r, e).sum());
        d(e) = (j.transpose() * j - s * Mat2::Identity()).norm() / s;
    }
    return d;
}

}  // namespace homtopo
