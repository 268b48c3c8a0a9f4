#pragma once

#include <Eigen/Sparse>
#include <string>
#include <utility>
#include <vector>

#include "homtopo/fem/element.hpp"
#include "homtopo/mesh/mesh.hpp"

namespace homtopo {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Kernel of the operator once constraints are applied.
enum class Nullspace { None, Constant, Translations };

/// Linear system K u = F together with the constraints to impose. Periodic
/// pairs are (master, slave): the slave dof takes the master value.
struct SparseSystem {
    SpMat matrix;
    VecX rhs;
    std::vector<std::pair<int, double>> constrained_dofs;
    std::vector<std::pair<int, int>> periodic_pairs;
    int dofs_per_node = 1;
    Nullspace nullspace = Nullspace::None;
    VecX dof_weights;  // integration weight of each dof, defines the mean for Nullspace
};

namespace detail {

inline VecX lumped_node_weights(const Mesh2D &mesh) {
    VecX w = VecX::Zero(mesh.num_nodes());
    const double q = 0.25 * mesh.element_area();
    for (int e = 0; e < mesh.num_elements(); ++e)
        if (mesh.active[e])
            for (int n : mesh.elements[e]) w(n) += q;
    return w;
}

/// Constrains to zero every dof whose node touches no active element.
inline void constrain_inactive(const Mesh2D &mesh, int dpn, std::vector<std::pair<int, double>> &out) {
    const auto act = mesh.active_nodes();
    for (int n = 0; n < mesh.num_nodes(); ++n)
        if (!act[n])
            for (int d = 0; d < dpn; ++d) out.emplace_back(dpn * n + d, 0.0);
}

}  // namespace detail

/// Assembles sum_e scale_e K_unit over active elements. dpn is 1 (scalar) or 2 (vector).
template <class ElementMatrix>
SpMat assemble_scaled(const Mesh2D &mesh, int dpn, const ElementMatrix &unit, const VecX &scale) {
    const int nd = 4 * dpn;
    std::vector<Triplet> trip;
    trip.reserve(static_cast<size_t>(mesh.num_active()) * nd * nd);
    for (int e = 0; e < mesh.num_elements(); ++e) {
        if (!mesh.active[e]) continue;
        const auto &nodes = mesh.elements[e];
        for (int a = 0; a < nd; ++a) {
            const int ga = dpn * nodes[a / dpn] + a % dpn;
            for (int b = 0; b < nd; ++b) {
                const int gb = dpn * nodes[b / dpn] + b % dpn;
                trip.emplace_back(ga, gb, scale(e) * unit(a, b));
            }
        }
    }
    SpMat k(dpn * mesh.num_nodes(), dpn * mesh.num_nodes());
    k.setFromTriplets(trip.begin(), trip.end());
    return k;
}

/// Assembles per-element matrices given by a callback.
template <class ElementFn>
SpMat assemble_matrix(const Mesh2D &mesh, int dpn, ElementFn &&element_matrix) {
    const int nd = 4 * dpn;
    std::vector<Triplet> trip;
    trip.reserve(static_cast<size_t>(mesh.num_active()) * nd * nd);
    for (int e = 0; e < mesh.num_elements(); ++e) {
        if (!mesh.active[e]) continue;
        const auto ke = element_matrix(e);
        const auto &nodes = mesh.elements[e];
        for (int a = 0; a < nd; ++a) {
            const int ga = dpn * nodes[a / dpn] + a % dpn;
            for (int b = 0; b < nd; ++b)
                trip.emplace_back(ga, dpn * nodes[b / dpn] + b % dpn, ke(a, b));
        }
    }
    SpMat k(dpn * mesh.num_nodes(), dpn * mesh.num_nodes());
    k.setFromTriplets(trip.begin(), trip.end());
    return k;
}

/// Load vector of a scalar source (per element or per node) and the Neumann fluxes.
inline VecX scalar_load(const Mesh2D &mesh, const ScalarField &f) {
    VecX rhs = VecX::Zero(mesh.num_nodes());
    const Q1Element el(mesh.hx(), mesh.hy());
    if (f.values.size() > 0) {
        const int expected = f.association == Association::PerElement ? mesh.num_elements() : mesh.num_nodes();
        if (f.values.size() != expected) throw InvalidArgument("source field has the wrong size");
        const Mat4 mass = el.mass();
        for (int e = 0; e < mesh.num_elements(); ++e) {
            if (!mesh.active[e]) continue;
            const auto &nodes = mesh.elements[e];
            Vec4 fe;
            if (f.association == Association::PerElement) {
                fe = Vec4::Constant(f.values(e) * 0.25 * el.area());
            } else {
                Vec4 fn;
                for (int a = 0; a < 4; ++a) fn(a) = f.values(nodes[a]);
                fe = mass * fn;
            }
            for (int a = 0; a < 4; ++a) rhs(nodes[a]) += fe(a);
        }
    }
    for (const auto &edge : mesh.boundary_edges) {
        if (edge.tag != BoundaryTag::Neumann) continue;
        const double g = mesh.segments[edge.segment].load(0);
        rhs(edge.a) += 0.5 * g * edge.length;
        rhs(edge.b) += 0.5 * g * edge.length;
    }
    return rhs;
}

/// -div(A grad u) = f, u = 0 on Dirichlet edges, A grad u . n = g on Neumann edges.
inline SparseSystem assemble_scalar(const Mesh2D &mesh, const std::vector<Mat2> &coeff,
                                    const ScalarField &f, double c0 = 0.0) {
    if (static_cast<int>(coeff.size()) != mesh.num_elements())
        throw InvalidArgument("coefficient field has the wrong size");
    for (int e = 0; e < mesh.num_elements(); ++e) {
        if (!mesh.active[e]) continue;
        const Mat2 sym = 0.5 * (coeff[e] + coeff[e].transpose());
        const double lmin = Eigen::SelfAdjointEigenSolver<Mat2>(sym).eigenvalues()(0);
        if (!(lmin > 0.0) || lmin < c0)
            throw InvalidArgument("coefficient is not coercive on element " + std::to_string(e));
    }
    const Q1Element el(mesh.hx(), mesh.hy());
    SparseSystem sys;
    sys.dofs_per_node = 1;
    sys.matrix = assemble_matrix(mesh, 1, [&](int e) { return el.scalar_stiffness(coeff[e]); });
    sys.rhs = scalar_load(mesh, f);
    for (int n : mesh.dirichlet_nodes()) sys.constrained_dofs.emplace_back(n, 0.0);
    detail::constrain_inactive(mesh, 1, sys.constrained_dofs);
    sys.dof_weights = detail::lumped_node_weights(mesh);
    if (!mesh.has_dirichlet()) sys.nullspace = Nullspace::Constant;
    return sys;
}

/// Isotropic scalar coefficient a_e I per element.
inline SparseSystem assemble_scalar(const Mesh2D &mesh, const VecX &coeff, const ScalarField &f,
                                    double c0 = 0.0) {
    std::vector<Mat2> a(mesh.num_elements());
    for (int e = 0; e < mesh.num_elements(); ++e) a[e] = coeff(e) * Mat2::Identity();
    return assemble_scalar(mesh, a, f, c0);
}

inline VecX elastic_load(const Mesh2D &mesh, const Vec2 &body_force) {
    VecX rhs = VecX::Zero(2 * mesh.num_nodes());
    const double q = 0.25 * mesh.element_area();
    if (body_force.squaredNorm() > 0.0)
        for (int e = 0; e < mesh.num_elements(); ++e) {
            if (!mesh.active[e]) continue;
            for (int n : mesh.elements[e]) rhs.segment<2>(2 * n) += q * body_force;
        }
    for (const auto &edge : mesh.boundary_edges) {
        if (edge.tag != BoundaryTag::Neumann) continue;
        const Vec2 g = mesh.segments[edge.segment].load;
        rhs.segment<2>(2 * edge.a) += 0.5 * edge.length * g;
        rhs.segment<2>(2 * edge.b) += 0.5 * edge.length * g;
    }
    return rhs;
}

/// -div(A e(u)) = f, u = 0 on Dirichlet edges, A e(u) n = g on Neumann edges.
inline SparseSystem assemble_elasticity(const Mesh2D &mesh, const std::vector<Hooke2D> &hooke,
                                        const Vec2 &body_force = Vec2::Zero()) {
    if (static_cast<int>(hooke.size()) != mesh.num_elements())
        throw InvalidArgument("Hooke field has the wrong size");
    if (!mesh.has_dirichlet())
        throw RigidModeError("elasticity problem has no Dirichlet boundary, rigid motions are free");
    for (int e = 0; e < mesh.num_elements(); ++e)
        if (mesh.active[e] && !hooke[e].is_symmetric())
            throw InvalidArgument("Hooke tensor is not symmetric on element " + std::to_string(e));
    const Q1Element el(mesh.hx(), mesh.hy());
    SparseSystem sys;
    sys.dofs_per_node = 2;
    sys.matrix = assemble_matrix(mesh, 2, [&](int e) { return el.elastic_stiffness(hooke[e].K); });
    sys.rhs = elastic_load(mesh, body_force);
    for (int n : mesh.dirichlet_nodes()) {
        sys.constrained_dofs.emplace_back(2 * n, 0.0);
        sys.constrained_dofs.emplace_back(2 * n + 1, 0.0);
    }
    detail::constrain_inactive(mesh, 2, sys.constrained_dofs);
    const VecX w = detail::lumped_node_weights(mesh);
    sys.dof_weights.resize(2 * mesh.num_nodes());
    for (int n = 0; n < mesh.num_nodes(); ++n) sys.dof_weights(2 * n) = sys.dof_weights(2 * n + 1) = w(n);
    return sys;
}

/// Work of the Neumann loads, the integral of g . u over the Neumann edges.
inline double compliance(const Mesh2D &mesh, const VecX &u) {
    const int dpn = static_cast<int>(u.size()) / mesh.num_nodes();
    double c = 0.0;
    for (const auto &edge : mesh.boundary_edges) {
        if (edge.tag != BoundaryTag::Neumann) continue;
        const Vec2 g = mesh.segments[edge.segment].load;
        for (int d = 0; d < dpn; ++d)
            c += 0.5 * edge.length * g(d) * (u(dpn * edge.a + d) + u(dpn * edge.b + d));
    }
    return c;
}

}  // namespace homtopo
