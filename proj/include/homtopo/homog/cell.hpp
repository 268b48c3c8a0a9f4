#pragma once

// Periodic cell problems on Y = (0,1)^2 and the homogenized tensors they define.

#include <algorithm>
#include <array>
#include <vector>

#include "homtopo/fem/postprocess.hpp"
#include "homtopo/fem/solver.hpp"

namespace homtopo {

/// Square cell with a centered rectangular hole of size m1 x m2.
struct CellGeometry {
    double m1 = 0.0, m2 = 0.0;
    int resolution = 64;

    bool is_void(int i, int j) const {
        const double y1 = (i + 0.5) / resolution, y2 = (j + 0.5) / resolution;
        return std::abs(y1 - 0.5) < 0.5 * m1 && std::abs(y2 - 0.5) < 0.5 * m2;
    }

    /// Fraction of pixel (i, j) covered by the hole.
    double coverage(int i, int j) const {
        auto overlap = [&](int k, double m) {
            const double lo = std::max(static_cast<double>(k) / resolution, 0.5 - 0.5 * m);
            const double hi = std::min(static_cast<double>(k + 1) / resolution, 0.5 + 0.5 * m);
            return std::max(hi - lo, 0.0) * resolution;
        };
        return overlap(i, m1) * overlap(j, m2);
    }

    std::vector<char> void_mask() const {
        std::vector<char> v(resolution * resolution);
        for (int j = 0; j < resolution; ++j)
            for (int i = 0; i < resolution; ++i) v[j * resolution + i] = is_void(i, j) ? 1 : 0;
        return v;
    }

    double void_fraction() const {
        double s = 0;
        for (int j = 0; j < resolution; ++j)
            for (int i = 0; i < resolution; ++i) s += coverage(i, j);
        return s / (resolution * resolution);
    }

    double density() const { return 1.0 - m1 * m2; }
};

/// Unit-cell mesh with periodic identification of opposite sides.
class PeriodicCell {
  public:
    explicit PeriodicCell(int n) : mesh_(make_mesh(n, n, 1.0, 1.0)), el_(1.0 / n, 1.0 / n), n_(n) {
        if (n < 2) throw InvalidArgument("cell resolution must be at least 2");
    }

    const Mesh2D &mesh() const { return mesh_; }
    const Q1Element &element() const { return el_; }
    int resolution() const { return n_; }

    /// Pairs of (master, slave) nodes identifying x = 1 with x = 0 and y = 1 with y = 0.
    std::vector<std::pair<int, int>> node_pairs() const {
        std::vector<std::pair<int, int>> p;
        for (int j = 0; j < n_; ++j) p.emplace_back(mesh_.node_index(0, j), mesh_.node_index(n_, j));
        for (int i = 0; i <= n_; ++i) p.emplace_back(mesh_.node_index(i % n_, 0), mesh_.node_index(i, n_));
        return p;
    }

    /// Each distinct periodic node carries weight h^2 so the weighted mean is the cell average.
    VecX node_weights() const {
        VecX w = VecX::Zero(mesh_.num_nodes());
        for (int j = 0; j < n_; ++j)
            for (int i = 0; i < n_; ++i) w(mesh_.node_index(i, j)) = 1.0 / (n_ * n_);
        return w;
    }

    SparseSystem scalar_system(const std::vector<Mat2> &a) const {
        check_size(a.size());
        SparseSystem sys;
        sys.dofs_per_node = 1;
        sys.matrix = assemble_matrix(mesh_, 1, [&](int e) { return el_.scalar_stiffness(a[e]); });
        sys.rhs = VecX::Zero(mesh_.num_nodes());
        sys.periodic_pairs = node_pairs();
        sys.nullspace = Nullspace::Constant;
        sys.dof_weights = node_weights();
        return sys;
    }

    SparseSystem elastic_system(const std::vector<Mat3> &a) const {
        check_size(a.size());
        SparseSystem sys;
        sys.dofs_per_node = 2;
        sys.matrix = assemble_matrix(mesh_, 2, [&](int e) { return el_.elastic_stiffness(a[e]); });
        sys.rhs = VecX::Zero(2 * mesh_.num_nodes());
        for (const auto &[m, s] : node_pairs()) {
            sys.periodic_pairs.emplace_back(2 * m, 2 * s);
            sys.periodic_pairs.emplace_back(2 * m + 1, 2 * s + 1);
        }
        sys.nullspace = Nullspace::Translations;
        const VecX w = node_weights();
        sys.dof_weights.resize(2 * mesh_.num_nodes());
        for (int k = 0; k < mesh_.num_nodes(); ++k) sys.dof_weights(2 * k) = sys.dof_weights(2 * k + 1) = w(k);
        return sys;
    }

    /// Load vector -int A xi . grad(phi) for a constant macroscopic gradient xi.
    VecX scalar_rhs(const std::vector<Mat2> &a, const Vec2 &xi) const {
        VecX b = VecX::Zero(mesh_.num_nodes());
        for (int e = 0; e < mesh_.num_elements(); ++e) {
            Vec4 be = Vec4::Zero();
            for (int q = 0; q < 4; ++q) be -= el_.weight * el_.grad[q].transpose() * (a[e] * xi);
            for (int k = 0; k < 4; ++k) b(mesh_.elements[e][k]) += be(k);
        }
        return b;
    }

    /// Load vector -int A xi : e(phi) for a constant Kelvin strain xi.
    VecX elastic_rhs(const std::vector<Mat3> &a, const Vec3 &xi) const {
        VecX b = VecX::Zero(2 * mesh_.num_nodes());
        for (int e = 0; e < mesh_.num_elements(); ++e) {
            Vec8 be = Vec8::Zero();
            for (int q = 0; q < 4; ++q) be -= el_.weight * el_.strain[q].transpose() * (a[e] * xi);
            for (int k = 0; k < 4; ++k) b.segment<2>(2 * mesh_.elements[e][k]) += be.segment<2>(2 * k);
        }
        return b;
    }

  private:
    void check_size(size_t s) const {
        if (static_cast<int>(s) != n_ * n_) throw InvalidArgument("cell coefficient field has the wrong size");
    }

    Mesh2D mesh_;
    Q1Element el_;
    int n_;
};

/// Scalar correctors w_1, w_2 (nodal, periodic, mean zero) of -div(A (grad w_i + e_i)) = 0.
inline std::array<VecX, 2> correctors_scalar(const CellGeometry &cell, const std::vector<Mat2> &a) {
    for (size_t e = 0; e < a.size(); ++e)
        if (Eigen::SelfAdjointEigenSolver<Mat2>(0.5 * (a[e] + a[e].transpose())).eigenvalues()(0) <= 0.0)
            throw InvalidArgument("cell coefficient is not coercive on element " + std::to_string(e));
    const PeriodicCell pc(cell.resolution);
    LinearSolver solver;
    solver.factorize(pc.scalar_system(a));
    return {solver.solve_rhs(pc.scalar_rhs(a, Vec2(1, 0))).x, solver.solve_rhs(pc.scalar_rhs(a, Vec2(0, 1))).x};
}

/// A*_ji = int A (e_i + grad w_i) . (e_j + grad w_j).
inline Mat2 homogenize_scalar(const CellGeometry &cell, const std::vector<Mat2> &a, const std::array<VecX, 2> &w) {
    const PeriodicCell pc(cell.resolution);
    const Mesh2D &m = pc.mesh();
    const Q1Element &el = pc.element();
    Mat2 out = Mat2::Zero();
    for (int e = 0; e < m.num_elements(); ++e) {
        const Vec4 w1 = detail::gather4(m, w[0], e), w2 = detail::gather4(m, w[1], e);
        for (int q = 0; q < 4; ++q) {
            Mat2 g;
            g.col(0) = Vec2(1, 0) + el.grad[q] * w1;
            g.col(1) = Vec2(0, 1) + el.grad[q] * w2;
            out += el.weight * g.transpose() * a[e] * g;
        }
    }
    return 0.5 * (out + out.transpose());
}

/// Per-element Hooke matrices of the holed cell, with ersatz stiffness in the hole.
/// Pixels cut by the hole boundary mix both phases by area so A* varies continuously with m.
inline std::vector<Mat3> cell_hooke_field(const CellGeometry &cell, const Hooke2D &a, double ersatz) {
    const int n = cell.resolution;
    std::vector<Mat3> k(n * n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const double c = cell.coverage(i, j);
            k[j * n + i] = (1.0 - c + c * ersatz) * a.K;
        }
    return k;
}

/// Correctors in the Kelvin strain basis (e11, e22, sqrt(2) e12).
inline std::array<VecX, 3> kelvin_correctors(const PeriodicCell &pc, const std::vector<Mat3> &k, LinearSolver &solver) {
    solver.factorize(pc.elastic_system(k));
    std::array<VecX, 3> w;
    for (int c = 0; c < 3; ++c) w[c] = solver.solve_rhs(pc.elastic_rhs(k, Vec3::Unit(c))).x;
    return w;
}

/// Elastic correctors w_11, w_22, w_12 for the basis strains e_ij = (e_i e_j^T + e_j e_i^T) / 2.
inline std::array<VecX, 3> correctors_elastic(const CellGeometry &cell, const Hooke2D &a, double ersatz = 1e-3) {
    const PeriodicCell pc(cell.resolution);
    LinearSolver solver;
    auto w = kelvin_correctors(pc, cell_hooke_field(cell, a, ersatz), solver);
    w[2] /= kSqrt2;
    return w;
}

/// Kelvin matrix of A* from correctors in the Kelvin basis.
inline Hooke2D homogenize_kelvin(const PeriodicCell &pc, const std::vector<Mat3> &k, const std::array<VecX, 3> &w) {
    const Mesh2D &m = pc.mesh();
    const Q1Element &el = pc.element();
    Mat3 out = Mat3::Zero();
    for (int e = 0; e < m.num_elements(); ++e) {
        std::array<Vec8, 3> we;
        for (int c = 0; c < 3; ++c) we[c] = detail::gather8(m, w[c], e);
        for (int q = 0; q < 4; ++q) {
            Mat3 s;
            for (int c = 0; c < 3; ++c) s.col(c) = Vec3::Unit(c) + el.strain[q] * we[c];
            out += el.weight * s.transpose() * k[e] * s;
        }
    }
    return Hooke2D(0.5 * (out + out.transpose()));
}

/// A*_ijkl = int A (e_ij + e(w_ij)) : (e_kl + e(w_kl)), returned in Kelvin notation.
inline Hooke2D homogenize_elastic(const CellGeometry &cell, const Hooke2D &a, const std::array<VecX, 3> &w,
                                  double ersatz = 1e-3) {
    const PeriodicCell pc(cell.resolution);
    std::array<VecX, 3> wk = w;
    wk[2] *= kSqrt2;
    return homogenize_kelvin(pc, cell_hooke_field(cell, a, ersatz), wk);
}

/// Effective Hooke's law of the holed cell in one call.
inline Hooke2D cell_hooke(const CellGeometry &cell, const Hooke2D &a, double ersatz = 1e-3) {
    const PeriodicCell pc(cell.resolution);
    LinearSolver solver;
    const auto k = cell_hooke_field(cell, a, ersatz);
    return homogenize_kelvin(pc, k, kelvin_correctors(pc, k, solver));
}

}  // namespace homtopo
