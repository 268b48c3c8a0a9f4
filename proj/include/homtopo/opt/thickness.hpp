#pragma once

// Thickness optimization of a membrane -div(h grad u) = f or of a plate
// -div(h A e(u)) = f, with P0 thickness and Q1 state.

#include <algorithm>
#include <optional>
#include <string>

#include "homtopo/fem/assembly.hpp"
#include "homtopo/fem/postprocess.hpp"
#include "homtopo/fem/solver.hpp"
#include "homtopo/opt/dichotomy.hpp"
#include "homtopo/opt/history.hpp"

namespace homtopo {

enum class ThicknessObjective { Compliance, TargetDisplacement };
enum class ThicknessModel { Membrane, Plate };

/// Mean over the active elements.
inline double active_mean(const Mesh2D &mesh, const VecX &v) {
    double s = 0.0;
    int n = 0;
    for (int e = 0; e < mesh.num_elements(); ++e)
        if (mesh.active[e]) {
            s += v(e);
            ++n;
        }
    return n ? s / n : 0.0;
}

struct ProjectionResult {
    VecX h;
    double multiplier = 0.0;
};

/// P(h) = clamp(h + l, h_min, h_max) with l chosen so the mean over active elements is h0.
inline ProjectionResult project_Uad(const Mesh2D &mesh, const VecX &h, double h_min, double h_max, double h0) {
    if (!(h_min <= h0 && h0 <= h_max)) throw InvalidArgument("target mean thickness outside [h_min, h_max]");
    if (h.size() != mesh.num_elements()) throw InvalidArgument("thickness field has the wrong size");
    const double tol = 1e-12 * h_max;
    auto clamp_shift = [&](double l) { return VecX((h.array() + l).cwiseMax(h_min).cwiseMin(h_max)); };
    auto mean_at = [&](double l) { return active_mean(mesh, clamp_shift(l)); };
    if (std::abs(mean_at(0.0) - h0) <= tol) return {clamp_shift(0.0), 0.0};
    double lo = h_min - h.maxCoeff(), hi = h_max - h.minCoeff();
    const DichotomyResult r = dichotomy(mean_at, h0, lo, hi, tol);
    // The mean is piecewise linear in l: finish with an exact step on the current piece.
    double l = r.x;
    const VecX p = clamp_shift(l);
    int free = 0, n = 0;
    for (int e = 0; e < mesh.num_elements(); ++e)
        if (mesh.active[e]) {
            ++n;
            if (p(e) > h_min && p(e) < h_max) ++free;
        }
    if (free > 0) {
        const double l2 = l + (h0 - active_mean(mesh, p)) * n / free;
        if (std::abs(mean_at(l2) - h0) < std::abs(mean_at(l) - h0)) l = l2;
    }
    return {clamp_shift(l), l};
}

/// Membrane or plate thickness problem on a structured mesh.
struct ThicknessProblem {
    Mesh2D mesh;
    ThicknessModel model = ThicknessModel::Membrane;
    IsotropicModuli plate{};      // Plate only
    ScalarField source{};         // Membrane body source f (empty = 0)
    Vec2 body_force = Vec2::Zero();  // Plate body force
    double h_min = 0.1, h_max = 1.0, h0 = 0.5;
    ThicknessObjective objective = ThicknessObjective::Compliance;
    VecX target;  // nodal u0 for TargetDisplacement

    int dofs_per_node() const { return model == ThicknessModel::Plate ? 2 : 1; }

    void validate() const {
        if (!(0 < h_min && h_min <= h0 && h0 <= h_max))
            throw InvalidArgument("thickness bounds must satisfy 0 < h_min <= h0 <= h_max");
        if (!mesh.has_dirichlet()) throw InvalidArgument("thickness problem needs a Dirichlet boundary");
        if (objective == ThicknessObjective::TargetDisplacement &&
            target.size() != dofs_per_node() * mesh.num_nodes())
            throw InvalidArgument("target displacement has the wrong size");
        if (model == ThicknessModel::Plate) plate.validate();
    }

    /// Element matrix of unit thickness.
    MatX unit_matrix() const {
        const Q1Element el(mesh.hx(), mesh.hy());
        if (model == ThicknessModel::Plate) return el.elastic_stiffness(Hooke2D::isotropic(plate).K);
        return el.scalar_stiffness(Mat2::Identity());
    }

    VecX load() const {
        return model == ThicknessModel::Plate ? elastic_load(mesh, body_force) : scalar_load(mesh, source);
    }

    /// Consistent mass matrix acting componentwise.
    SpMat mass() const {
        const int dpn = dofs_per_node();
        const Mat4 m = Q1Element(mesh.hx(), mesh.hy()).mass();
        MatX unit = MatX::Zero(4 * dpn, 4 * dpn);
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b)
                for (int d = 0; d < dpn; ++d) unit(dpn * a + d, dpn * b + d) = m(a, b);
        return assemble_scaled(mesh, dpn, unit, VecX::Ones(mesh.num_elements()));
    }

    SparseSystem system(const VecX &h) const {
        if (h.size() != mesh.num_elements()) throw InvalidArgument("thickness field has the wrong size");
        for (int e = 0; e < mesh.num_elements(); ++e)
            if (mesh.active[e] && !(h(e) > 0.0))
                throw InvalidArgument("thickness must be positive on element " + std::to_string(e));
        const int dpn = dofs_per_node();
        SparseSystem sys;
        sys.dofs_per_node = dpn;
        sys.matrix = assemble_scaled(mesh, dpn, unit_matrix(), h);
        sys.rhs = load();
        for (int n : mesh.dirichlet_nodes())
            for (int d = 0; d < dpn; ++d) sys.constrained_dofs.emplace_back(dpn * n + d, 0.0);
        detail::constrain_inactive(mesh, dpn, sys.constrained_dofs);
        return sys;
    }
};

/// State, adjoint and objective at one design.
struct ThicknessState {
    VecX u, p;
    double J = 0.0;
};

inline VecX solve_state(const ThicknessProblem &prob, const VecX &h) { return solve(prob.system(h)).x; }

inline double thickness_objective(const ThicknessProblem &prob, const VecX &u) {
    if (prob.objective == ThicknessObjective::Compliance) return prob.load().dot(u);
    const VecX d = u - prob.target;
    return d.dot(prob.mass() * d);
}

/// Adjoint -div(h grad p) = -j'(u). For compliance p = -u exactly.
inline VecX solve_adjoint(const ThicknessProblem &prob, const VecX &h, const VecX &u) {
    if (prob.objective == ThicknessObjective::Compliance) return -u;
    SparseSystem sys = prob.system(h);
    sys.rhs = -2.0 * (prob.mass() * (u - prob.target));
    return solve(sys).x;
}

inline ThicknessState evaluate(const ThicknessProblem &prob, const VecX &h) {
    ThicknessState s;
    LinearSolver solver;
    const SparseSystem sys = prob.system(h);
    solver.factorize(sys);
    s.u = solver.solve_rhs(sys.rhs).x;
    s.J = thickness_objective(prob, s.u);
    if (prob.objective == ThicknessObjective::Compliance) {
        s.p = -s.u;
    } else {
        s.p = solver.solve_rhs(-2.0 * (prob.mass() * (s.u - prob.target))).x;
    }
    return s;
}

/// Element means of grad u . grad p (membrane) or A e(u) : e(p) (plate), the
/// L2 gradient of the discrete objective with respect to the P0 thickness.
inline VecX thickness_gradient(const ThicknessProblem &prob, const VecX &u, const VecX &p) {
    const MatX k = prob.unit_matrix();
    const int dpn = prob.dofs_per_node();
    const Mesh2D &m = prob.mesh;
    const double area = m.element_area();
    VecX g = VecX::Zero(m.num_elements());
    VecX ue(4 * dpn), pe(4 * dpn);
    for (int e = 0; e < m.num_elements(); ++e) {
        if (!m.active[e]) continue;
        for (int a = 0; a < 4; ++a)
            for (int d = 0; d < dpn; ++d) {
                ue(dpn * a + d) = u(dpn * m.elements[e][a] + d);
                pe(dpn * a + d) = p(dpn * m.elements[e][a] + d);
            }
        g(e) = ue.dot(k * pe) / area;
    }
    return g;
}

/// Screened Poisson smoothing -eps^2 lap G + G = g with homogeneous Neumann
/// conditions, solved on Q1 and returned as element means. eps = 0 is the identity.
inline VecX regularize_gradient(const Mesh2D &mesh, const VecX &g, double eps) {
    if (eps < 0) throw InvalidArgument("regularization length must be non-negative");
    if (eps == 0.0) return g;
    const Q1Element el(mesh.hx(), mesh.hy());
    const Mat4 kel = el.scalar_stiffness(Mat2::Identity()) * (eps * eps) + el.mass();
    SparseSystem sys;
    sys.matrix = assemble_scaled(mesh, 1, kel, VecX::Ones(mesh.num_elements()));
    sys.rhs = VecX::Zero(mesh.num_nodes());
    for (int e = 0; e < mesh.num_elements(); ++e)
        if (mesh.active[e])
            for (int n : mesh.elements[e]) sys.rhs(n) += 0.25 * el.area() * g(e);
    detail::constrain_inactive(mesh, 1, sys.constrained_dofs);
    const VecX nodal = solve(sys).x;
    VecX out = VecX::Zero(mesh.num_elements());
    for (int e = 0; e < mesh.num_elements(); ++e)
        if (mesh.active[e]) out(e) = 0.25 * detail::gather4(mesh, nodal, e).sum();
    return out;
}

struct ThicknessOptions {
    int iterations = 50;
    double step = 0.0;        // initial step; 0 picks 0.1 h_max / max|J'|
    double regularization = 0.0;
    double tolerance = 1e-4;  // convergence when residual <= tolerance * step * h_max
    std::function<void(int, const VecX &)> on_iterate;  // called for every accepted design
};

struct ThicknessResult {
    VecX h;
    OptHistory history;
    double multiplier = 0.0;  // J'(h) + l = 0 on {h_min < h < h_max} (gradient); volume price l (criteria)
    bool converged = false;
    bool aborted = false;
    std::string message;
};

/// Projected gradient with step adaptation: accepted steps grow the step by
/// 1.1, rejected ones halve it. Every accepted iterate is feasible.
inline ThicknessResult projected_gradient_run(const ThicknessProblem &prob, const VecX &h_init,
                                              const ThicknessOptions &opt = {}) {
    prob.validate();
    if (opt.iterations < 1) throw InvalidArgument("iterations must be at least 1");
    ThicknessResult res;
    res.h = project_Uad(prob.mesh, h_init, prob.h_min, prob.h_max, prob.h0).h;
    ThicknessState st = evaluate(prob, res.h);
    VecX grad = regularize_gradient(prob.mesh, thickness_gradient(prob, st.u, st.p), opt.regularization);
    double mu = opt.step;
    if (mu <= 0.0) mu = 0.1 * prob.h_max / std::max(grad.cwiseAbs().maxCoeff(), 1e-300);
    for (int it = 1; it <= opt.iterations; ++it) {
        const ProjectionResult trial_proj = project_Uad(prob.mesh, res.h - mu * grad, prob.h_min, prob.h_max, prob.h0);
        const double residual = (res.h - trial_proj.h).cwiseAbs().maxCoeff();
        if (residual <= opt.tolerance * mu * prob.h_max) {
            res.converged = true;
            res.multiplier = -trial_proj.multiplier / mu;
            res.history.push({it, st.J, active_mean(prob.mesh, res.h), mu, res.multiplier, residual, residual});
            if (opt.on_iterate) opt.on_iterate(it, res.h);
            break;
        }
        ProjectionResult proj = trial_proj;
        ThicknessState next = evaluate(prob, proj.h);
        while (next.J >= st.J) {
            mu *= 0.5;
            if (mu < 1e-12) {
                res.aborted = true;
                res.message = "step underflow after " + std::to_string(it - 1) + " accepted iterations";
                return res;
            }
            proj = project_Uad(prob.mesh, res.h - mu * grad, prob.h_min, prob.h_max, prob.h0);
            next = evaluate(prob, proj.h);
        }
        res.h = proj.h;
        res.multiplier = -proj.multiplier / mu;
        st = std::move(next);
        grad = regularize_gradient(prob.mesh, thickness_gradient(prob, st.u, st.p), opt.regularization);
        res.history.push({it, st.J, active_mean(prob.mesh, res.h), mu, res.multiplier, residual, residual});
        if (opt.on_iterate) opt.on_iterate(it, res.h);
        mu *= 1.1;
    }
    return res;
}

/// h_e = clamp(sqrt(S_e / (l |e|))) with l fitted to the volume by dichotomy,
/// the exact minimizer of sum_e S_e / h_e over the admissible set.
inline ProjectionResult oc_thickness_update(const Mesh2D &mesh, const VecX &s, double h_min, double h_max,
                                            double h0) {
    const double area = mesh.element_area();
    VecX root = VecX::Zero(s.size());
    double rmax = 0.0, rmin = 1e300;
    for (int e = 0; e < mesh.num_elements(); ++e) {
        if (!mesh.active[e]) continue;
        root(e) = std::sqrt(std::max(s(e), 0.0) / area);
        rmax = std::max(rmax, root(e));
        if (root(e) > 0) rmin = std::min(rmin, root(e));
    }
    if (!(rmax > 0.0)) throw NumericalError("stress field vanishes everywhere, the load is missing");
    // h = clamp(t * root) is non-decreasing in t = 1/sqrt(l)
    auto field = [&](double t) {
        VecX h = (t * root.array()).cwiseMax(h_min).cwiseMin(h_max);
        for (int e = 0; e < mesh.num_elements(); ++e)
            if (!mesh.active[e]) h(e) = h_min;
        return h;
    };
    auto vol = [&](double t) { return active_mean(mesh, field(t)); };
    const double tol = 1e-12 * h_max;
    double hi = h_max / rmin;
    if (vol(hi) < h0 - tol) return {VecX::Constant(s.size(), h_max), 0.0};
    const DichotomyResult r = dichotomy(vol, h0, 0.0, hi, tol);
    double t = r.x;
    // exact finish on the linear piece
    const VecX h = field(t);
    double slope = 0.0;
    int n = 0;
    for (int e = 0; e < mesh.num_elements(); ++e)
        if (mesh.active[e]) {
            ++n;
            if (h(e) > h_min && h(e) < h_max) slope += root(e);
        }
    if (slope > 0) {
        const double t2 = t + (h0 - active_mean(mesh, h)) * n / slope;
        if (std::abs(vol(t2) - h0) < std::abs(vol(t) - h0)) t = t2;
    }
    return {field(t), t > 0 ? 1.0 / (t * t) : 0.0};
}

/// Optimality criteria for compliance: alternate the state solve with the
/// exact thickness update for the stress tau = h grad u (or sigma = h A e(u)).
inline ThicknessResult optimality_criteria_run(const ThicknessProblem &prob, const VecX &h_init,
                                               const ThicknessOptions &opt = {}) {
    prob.validate();
    if (prob.objective != ThicknessObjective::Compliance)
        throw InvalidArgument("optimality criteria apply to the compliance objective only");
    ThicknessResult res;
    res.h = project_Uad(prob.mesh, h_init, prob.h_min, prob.h_max, prob.h0).h;
    for (int it = 0; it <= opt.iterations; ++it) {
        const VecX u = solve_state(prob, res.h);
        const double J = thickness_objective(prob, u);
        // S_e = h_e^2 times the element energy of u
        const VecX energy = thickness_gradient(prob, u, u) * prob.mesh.element_area();
        const VecX s = res.h.array().square() * energy.array();
        res.history.push({it, J, active_mean(prob.mesh, res.h), 0.0, res.multiplier, 0.0, 0.0});
        if (opt.on_iterate) opt.on_iterate(it, res.h);
        if (it == opt.iterations) break;
        const ProjectionResult next = oc_thickness_update(prob.mesh, s, prob.h_min, prob.h_max, prob.h0);
        const double change = (next.h - res.h).cwiseAbs().maxCoeff();
        res.history.records.back().criterion = change;
        res.history.records.back().residual = change;
        res.h = next.h;
        res.multiplier = next.multiplier;
    }
    res.converged = true;
    return res;
}

}  // namespace homtopo
