#pragma once

// Relaxed (composite) topology optimization: conductivity with rank-1
// laminates, elastic compliance with void laminates, penalization and SIMP.

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "homtopo/laminate/laminate.hpp"
#include "homtopo/opt/thickness.hpp"

namespace homtopo {

// ---------------------------------------------------------------------------
// Pointwise formulas

/// Q(phi) diag(l+, l-) Q(phi)^T, the l+ eigenvector being (cos phi, sin phi).
inline Mat2 rank1_tensor(double theta, double phi, double alpha, double beta) {
    const auto [lm, lp] = lam_bounds(alpha, beta, theta);
    const Mat2 q = rotation2(phi);
    return q * Vec2(lp, lm).asDiagonal() * q.transpose();
}

struct Rank1Derivatives {
    Mat2 d_theta, d_phi;
};

inline Rank1Derivatives rank1_derivatives(double theta, double phi, double alpha, double beta) {
    const auto [lm, lp] = lam_bounds(alpha, beta, theta);
    const double dlp = alpha - beta;
    const double dlm = -lm * lm * (1.0 / alpha - 1.0 / beta);
    const Mat2 q = rotation2(phi);
    Rank1Derivatives d;
    d.d_theta = q * Vec2(dlp, dlm).asDiagonal() * q.transpose();
    const double c = std::cos(2 * phi), s = std::sin(2 * phi);
    d.d_phi << -s, c, c, s;
    d.d_phi *= (lp - lm);
    return d;
}

inline double penalize_theta(double theta) {
    if (theta < 0.0 || theta > 1.0) throw InvalidArgument("density must lie in [0,1]");
    return 0.5 * (1.0 - std::cos(kPi * theta));
}

/// min(1, sqrt((kappa+mu)/(4 mu kappa l)) (|s1|+|s2|)), floored at theta_min.
inline double theta_opt_elastic(const Vec3 &sigma, double kappa, double mu, double ell, double theta_min = 1e-3) {
    if (!(ell > 0.0)) throw InvalidArgument("volume multiplier must be positive");
    const Principal p = principal(sigma);
    const double t = std::sqrt((kappa + mu) / (4 * mu * kappa * ell)) * (std::abs(p.s1) + std::abs(p.s2));
    return std::clamp(t, theta_min, 1.0);
}

/// theta = 1 when A^-1 tau . tau >= l, else sqrt(A^-1 tau . tau / l), floored at theta_min.
inline double simp_theta_update(const Vec3 &tau, const Hooke2D &a, double ell, double theta_min = 1e-3) {
    if (!(ell > 0.0)) throw InvalidArgument("volume multiplier must be positive");
    const double e = tau.dot(a.K.ldlt().solve(tau));
    if (e >= ell) return 1.0;
    return std::max(theta_min, std::sqrt(e / ell));
}

/// argmin over [lo, hi] of s / (a t + b) + c t, a convex function of t.
inline double inverse_affine_argmin(double s, double a, double b, double c, double lo, double hi) {
    auto slope = [&](double t) {
        const double d = a * t + b;
        return -a * s / (d * d) + c;
    };
    if (slope(lo) >= 0.0) return lo;
    if (slope(hi) <= 0.0) return hi;
    return std::clamp((std::sqrt(a * s / c) - b) / a, lo, hi);
}

/// Integral of theta (1 - theta) over the active elements.
inline double gray_level(const Mesh2D &mesh, const VecX &theta) {
    double g = 0.0;
    for (int e = 0; e < mesh.num_elements(); ++e)
        if (mesh.active[e]) g += theta(e) * (1.0 - theta(e)) * mesh.element_area();
    return g;
}

struct VolumeFit {
    VecX theta;
    double multiplier = 0.0;
};

/// Finds l with mean(theta(l)) = target for a family theta(l) non-increasing in l.
inline VolumeFit fit_volume(const Mesh2D &mesh, const std::function<VecX(double)> &theta_of, double target) {
    auto neg_mean = [&](double l) { return -active_mean(mesh, theta_of(l)); };
    double lo = -1.0, hi = 1.0;
    for (int k = 0; neg_mean(lo) > -target && k < 200; ++k) lo *= 4.0;
    for (int k = 0; neg_mean(hi) < -target && k < 200; ++k) hi *= 4.0;
    const DichotomyResult r = dichotomy(neg_mean, -target, lo, hi, 1e-13);
    return {theta_of(r.x), r.x};
}

// ---------------------------------------------------------------------------
// Conductivity

enum class ConductivityObjective { Torsion, Compliance, Target };

/// -div(A* grad u) = f with phases alpha (proportion theta) and beta.
struct ConductivityProblem {
    Mesh2D mesh;
    ScalarField source{};
    double alpha = 1.0, beta = 2.0;
    double volume = 0.5;  // mean of theta
    ConductivityObjective objective = ConductivityObjective::Compliance;
    VecX target;          // nodal u0 for Target

    void validate() const {
        if (!(alpha > 0.0 && beta > 0.0)) throw InvalidArgument("phase conductivities must be positive");
        if (!(volume >= 0.0 && volume <= 1.0)) throw InvalidArgument("volume fraction must lie in [0,1]");
        if (objective == ConductivityObjective::Target && target.size() != mesh.num_nodes())
            throw InvalidArgument("target field has the wrong size");
    }

    SparseSystem system(const std::vector<Mat2> &a) const { return assemble_scalar(mesh, a, source); }

    double objective_value(const VecX &rhs, const VecX &u) const {
        switch (objective) {
            case ConductivityObjective::Torsion: return -rhs.dot(u);
            case ConductivityObjective::Compliance: return rhs.dot(u);
            case ConductivityObjective::Target: {
                const VecX d = u - target;
                return d.dot(scalar_mass(mesh) * d);
            }
        }
        return 0.0;
    }

    static SpMat scalar_mass(const Mesh2D &m) {
        return assemble_scaled(m, 1, Q1Element(m.hx(), m.hy()).mass(), VecX::Ones(m.num_elements()));
    }
};

struct RelaxedDesign {
    VecX theta, phi;
    double multiplier = 0.0;
    double volume_target = 0.0;
};

struct RelaxedState {
    VecX u, p;
    double J = 0.0;
};

inline std::vector<Mat2> rank1_field(const ConductivityProblem &prob, const VecX &theta, const VecX &phi) {
    std::vector<Mat2> a(prob.mesh.num_elements());
    for (int e = 0; e < prob.mesh.num_elements(); ++e) a[e] = rank1_tensor(theta(e), phi(e), prob.alpha, prob.beta);
    return a;
}

inline RelaxedState conductivity_state(const ConductivityProblem &prob, const std::vector<Mat2> &a) {
    const SparseSystem sys = prob.system(a);
    LinearSolver solver;
    solver.factorize(sys);
    RelaxedState s;
    s.u = solver.solve_rhs(sys.rhs).x;
    s.J = prob.objective_value(sys.rhs, s.u);
    switch (prob.objective) {
        case ConductivityObjective::Torsion: s.p = s.u; break;
        case ConductivityObjective::Compliance: s.p = -s.u; break;
        case ConductivityObjective::Target:
            s.p = solver.solve_rhs(-2.0 * (ConductivityProblem::scalar_mass(prob.mesh) * (s.u - prob.target))).x;
            break;
    }
    return s;
}

struct DesignGradient {
    VecX d_theta, d_phi;
};

/// Element means of (dA*/dtheta) grad u . grad p and (dA*/dphi) grad u . grad p.
inline DesignGradient grad_wrt_design(const ConductivityProblem &prob, const VecX &theta, const VecX &phi,
                                      const VecX &u, const VecX &p) {
    const Mesh2D &m = prob.mesh;
    const auto mom = element_gradient_moments(m, u, p);
    DesignGradient g{VecX::Zero(m.num_elements()), VecX::Zero(m.num_elements())};
    for (int e = 0; e < m.num_elements(); ++e) {
        if (!m.active[e]) continue;
        const Rank1Derivatives d = rank1_derivatives(theta(e), phi(e), prob.alpha, prob.beta);
        // sum_q w dA grad u . grad p = trace(dA M) with M = sum_q w grad u grad p^T
        g.d_theta(e) = (d.d_theta * mom[e]).trace() / m.element_area();
        g.d_phi(e) = (d.d_phi * mom[e]).trace() / m.element_area();
    }
    return g;
}

struct RelaxedOptions {
    int iterations = 30;
    double tolerance = 1e-3;          // composite phase stops when the criterion drops below
    int penalization_iterations = 0;
    std::optional<double> fixed_multiplier;  // cost weight l instead of a volume constraint
    double theta_min = 1e-3;
    double regularization = 1e-3;     // relative weight of the isotropic term added to the laminate F
    double step = 0.0;                // gradient loop initial step, 0 = automatic
    std::function<void(int, const VecX &)> on_iterate;
};

struct RelaxedResult {
    RelaxedDesign design;
    OptHistory history;
    int composite_iterations = 0;  // records before the penalization phase
    double composite_gray = 0.0;   // gray level at the end of the composite phase
    bool converged = false;
};

enum class Phase { Composite, Penalize, Done };

namespace detail {

/// Moves from the composite phase to penalization once converged or out of
/// iterations, then stops after the requested number of penalized updates.
inline Phase advance(Phase phase, bool small_change, bool out_of_iterations, int &penalized, int penalization,
                     bool &converged) {
    if (phase == Phase::Composite) {
        if (small_change) converged = true;
        if (!small_change && !out_of_iterations) return Phase::Composite;
        return penalization > 0 ? Phase::Penalize : Phase::Done;
    }
    return ++penalized >= penalization ? Phase::Done : Phase::Penalize;
}

inline VecX conductivity_phi(const Mesh2D &m, const VecX &u, const VecX &previous, double offset) {
    const VectorField g = element_gradients(m, u);
    VecX phi = previous;
    for (int e = 0; e < m.num_elements(); ++e) {
        const Vec2 v = g.values.row(e).transpose();
        if (v.norm() > 0.0) phi(e) = std::fmod(std::atan2(v(1), v(0)) + offset + 2 * kPi, kPi);
    }
    return phi;
}

}  // namespace detail

/// Alternate minimization for the self-adjoint conductivity problems. Torsion
/// uses the worst conductor l-(theta), compliance the best l+(theta); each
/// density update is the exact minimizer of the element-wise convex energy.
inline RelaxedResult alt_min_conductivity(const ConductivityProblem &prob, const VecX &theta0,
                                          const RelaxedOptions &opt = {}) {
    prob.validate();
    if (prob.objective == ConductivityObjective::Target)
        throw InvalidArgument("alternate minimization needs a self-adjoint objective");
    const Mesh2D &m = prob.mesh;
    const bool torsion = prob.objective == ConductivityObjective::Torsion;
    // energy density s / (a theta + b): l-(theta) = 1 / (theta/alpha + (1-theta)/beta) for torsion,
    // 1 / l+(theta) with l+ = theta alpha + (1-theta) beta for compliance
    const double a = torsion ? 1.0 / prob.alpha - 1.0 / prob.beta : prob.alpha - prob.beta;
    const double b = torsion ? 1.0 / prob.beta : prob.beta;
    auto lam = [&](double t) {
        const auto [lm, lp] = lam_bounds(prob.alpha, prob.beta, t);
        return torsion ? lm : lp;
    };
    RelaxedResult res;
    res.design.volume_target = prob.volume;
    res.design.theta = project_Uad(m, theta0, 0.0, 1.0, prob.volume).h;
    res.design.phi = VecX::Zero(m.num_elements());
    const double area = m.element_area();
    Phase phase = Phase::Composite;
    int penalized = 0;
    for (int it = 0;; ++it) {
        VecX coeff(m.num_elements());
        for (int e = 0; e < m.num_elements(); ++e) coeff(e) = lam(res.design.theta(e));
        const SparseSystem sys = assemble_scalar(m, coeff, prob.source);
        const VecX u = solve(sys).x;
        const double J = prob.objective_value(sys.rhs, u);
        res.design.phi = detail::conductivity_phi(m, u, res.design.phi, torsion ? kPi / 2 : 0.0);
        res.history.push({it, J, active_mean(m, res.design.theta), 0.0, res.design.multiplier, 0.0, 0.0});
        if (opt.on_iterate) opt.on_iterate(it, res.design.theta);
        if (phase == Phase::Done) break;

        const auto mom = element_gradient_moments(m, u, u);
        VecX s(m.num_elements());
        for (int e = 0; e < m.num_elements(); ++e) {
            const double grad2 = mom[e].trace();
            // torsion: l-(theta) |grad u|^2; compliance: |tau|^2 / l+ with tau = l+(theta_n) grad u
            s(e) = torsion ? grad2 : coeff(e) * coeff(e) * grad2;
        }
        const bool penalizing = phase == Phase::Penalize;
        auto theta_of = [&](double ell) {
            VecX t = VecX::Zero(m.num_elements());
            for (int e = 0; e < m.num_elements(); ++e) {
                if (!m.active[e]) continue;
                t(e) = inverse_affine_argmin(s(e), a, b, ell * area, 0.0, 1.0);
                if (penalizing) t(e) = penalize_theta(t(e));
            }
            return t;
        };
        VolumeFit fit;
        if (opt.fixed_multiplier) fit = {theta_of(*opt.fixed_multiplier), *opt.fixed_multiplier};
        else fit = fit_volume(m, theta_of, prob.volume);
        const double change = (fit.theta - res.design.theta).cwiseAbs().maxCoeff();
        res.history.records.back().criterion = change;
        res.design.theta = fit.theta;
        res.design.multiplier = fit.multiplier;
        phase = detail::advance(phase, change < opt.tolerance, it + 1 >= opt.iterations, penalized,
                                opt.penalization_iterations, res.converged);
        if (phase != Phase::Composite && res.composite_iterations == 0) {
            res.composite_iterations = static_cast<int>(res.history.size()) + 1;
            res.composite_gray = gray_level(m, res.design.theta);
        }
    }
    return res;
}

inline RelaxedResult alt_min_torsion(ConductivityProblem prob, const VecX &theta0, const RelaxedOptions &opt = {}) {
    prob.objective = ConductivityObjective::Torsion;
    return alt_min_conductivity(prob, theta0, opt);
}

inline RelaxedResult alt_min_cond_compliance(ConductivityProblem prob, const VecX &theta0,
                                             const RelaxedOptions &opt = {}) {
    prob.objective = ConductivityObjective::Compliance;
    return alt_min_conductivity(prob, theta0, opt);
}

/// Projected gradient on (theta, phi) for any conductivity objective, with
/// the volume projection on theta and step adaptation on acceptance.
inline RelaxedResult gradient_run_conductivity(const ConductivityProblem &prob, const VecX &theta0, const VecX &phi0,
                                               const RelaxedOptions &opt = {}) {
    prob.validate();
    const Mesh2D &m = prob.mesh;
    RelaxedResult res;
    res.design.volume_target = prob.volume;
    res.design.theta = project_Uad(m, theta0, 0.0, 1.0, prob.volume).h;
    res.design.phi = phi0;
    RelaxedState st = conductivity_state(prob, rank1_field(prob, res.design.theta, res.design.phi));
    DesignGradient g = grad_wrt_design(prob, res.design.theta, res.design.phi, st.u, st.p);
    double t = opt.step;
    if (t <= 0.0) t = 0.1 / std::max({g.d_theta.cwiseAbs().maxCoeff(), g.d_phi.cwiseAbs().maxCoeff(), 1e-300});
    res.history.push({0, st.J, active_mean(m, res.design.theta), t, 0.0, 0.0, 0.0});
    for (int it = 1; it <= opt.iterations; ++it) {
        ProjectionResult proj;
        VecX phi;
        RelaxedState next;
        for (;;) {
            proj = project_Uad(m, res.design.theta - t * g.d_theta, 0.0, 1.0, prob.volume);
            phi = res.design.phi - t * g.d_phi;
            next = conductivity_state(prob, rank1_field(prob, proj.h, phi));
            if (next.J < st.J) break;
            t *= 0.5;
            if (t < 1e-14) {
                res.converged = true;  // no descent direction left at machine precision
                res.composite_iterations = static_cast<int>(res.history.size());
                res.composite_gray = gray_level(m, res.design.theta);
                return res;
            }
        }
        const double change = (proj.h - res.design.theta).cwiseAbs().maxCoeff();
        res.design.theta = proj.h;
        res.design.phi = phi;
        res.design.multiplier = -proj.multiplier / t;
        st = std::move(next);
        g = grad_wrt_design(prob, res.design.theta, res.design.phi, st.u, st.p);
        res.history.push({it, st.J, active_mean(m, res.design.theta), t, res.design.multiplier, change, change});
        if (opt.on_iterate) opt.on_iterate(it, res.design.theta);
        t *= 1.1;
        if (change < opt.tolerance * 1e-3) {
            res.converged = true;
            break;
        }
    }
    res.composite_iterations = static_cast<int>(res.history.size());
    res.composite_gray = gray_level(m, res.design.theta);
    return res;
}

// ---------------------------------------------------------------------------
// Elasticity

/// Compliance of a structure made of an isotropic material and void.
struct ElasticProblem {
    Mesh2D mesh;
    IsotropicModuli moduli = IsotropicModuli::from_young(1.0, 0.3);
    Vec2 body_force = Vec2::Zero();
    double volume = 0.5;

    void validate() const {
        moduli.validate();
        if (!(volume > 0.0 && volume <= 1.0)) throw InvalidArgument("volume fraction must lie in (0,1]");
        if (!mesh.has_dirichlet()) throw RigidModeError("elasticity problem has no Dirichlet boundary");
        if (elastic_load(mesh, body_force).squaredNorm() == 0.0)
            throw InvalidArgument("the load vanishes, compliance is identically zero");
    }
};

struct ElasticResult {
    VecX theta;
    std::vector<LaminationSpec> laminates;
    std::vector<Hooke2D> hooke;
    VecX angle;  // direction of the first lamination
    OptHistory history;
    int composite_iterations = 0;
    double composite_gray = 0.0;
    double multiplier = 0.0;
    bool converged = false;
    VecX u;
};

namespace detail {

/// F = sum m_i f_c(e_i) plus delta * scale * I, keeping the laminate invertible.
inline Mat3 laminate_f(const IsotropicModuli &m, const LaminationSpec &spec, double delta) {
    Mat3 f = Mat3::Zero();
    for (size_t i = 0; i < spec.weights.size(); ++i) f += spec.weights[i] * fc_tensor(m, spec.directions[i]);
    const double scale = fc_tensor(m, Vec2(1, 0)).trace();
    return f + delta * scale * Mat3::Identity();
}

/// (A^-1 + (1-theta)/theta F^-1)^-1
inline Hooke2D void_laminate(const Mat3 &a_inv, const Mat3 &f, double theta) {
    if (theta >= 1.0) return Hooke2D(a_inv.inverse());
    const Mat3 c = a_inv + ((1.0 - theta) / theta) * f.inverse();
    const Mat3 k = c.inverse();
    return Hooke2D(0.5 * (k + k.transpose()));
}

inline LaminationSpec spec_from_gstar(const GStar2 &g, double theta) {
    LaminationSpec s;
    s.theta = theta;
    s.directions = {g.e1, g.e2};
    s.weights = {g.weights(0), 1.0 - g.weights(0)};
    return s;
}

}  // namespace detail

/// Double alternating minimization: solve for the stress with the current
/// composite, then choose the laminate (among the previous one and the optimal
/// rank-2 laminates of the element stress) and the density minimizing the
/// complementary energy of that stress. With a fixed multiplier the objective
/// is compliance + l * int theta; otherwise l enforces the volume.
inline ElasticResult alt_min_elastic_compliance(const ElasticProblem &prob, const RelaxedOptions &opt = {}) {
    prob.validate();
    const Mesh2D &m = prob.mesh;
    const int ne = m.num_elements();
    const double area = m.element_area();
    const Mat3 a = Hooke2D::isotropic(prob.moduli).K;
    const Mat3 a_inv = a.inverse();
    const double kappa = prob.moduli.kappa(), mu = prob.moduli.mu;

    ElasticResult res;
    res.theta = VecX::Zero(ne);
    for (int e = 0; e < ne; ++e)
        if (m.active[e]) res.theta(e) = std::max(prob.volume, opt.theta_min);
    LaminationSpec init;
    init.directions = {Vec2(1, 0), Vec2(0, 1)};
    init.weights = {0.5, 0.5};
    res.laminates.assign(ne, init);
    std::vector<Mat3> f(ne, detail::laminate_f(prob.moduli, init, opt.regularization));
    res.angle = VecX::Zero(ne);

    Phase phase = Phase::Composite;
    int penalized = 0;
    double previous_J = 0.0;
    const VecX load = elastic_load(m, prob.body_force);
    for (int it = 0;; ++it) {
        res.hooke.assign(ne, Hooke2D(Mat3::Zero()));
        for (int e = 0; e < ne; ++e)
            if (m.active[e]) res.hooke[e] = detail::void_laminate(a_inv, f[e], res.theta(e));
        const SparseSystem sys = assemble_elasticity(m, res.hooke, prob.body_force);
        res.u = solve(sys).x;
        double J = load.dot(res.u);
        if (opt.fixed_multiplier) J += *opt.fixed_multiplier * res.theta.sum() * area;
        res.history.push({it, J, active_mean(m, res.theta), 0.0, res.multiplier, 0.0, 0.0});
        if (opt.on_iterate) opt.on_iterate(it, res.theta);
        if (phase == Phase::Done) break;

        const auto moments = element_stress_moments(m, res.hooke, res.u);
        const TensorField2 center = element_stresses(m, res.hooke, res.u);
        VecX c = VecX::Zero(ne);
        for (int e = 0; e < ne; ++e) {
            if (!m.active[e]) continue;
            const Mat3 &s = moments[e];
            double best = (f[e].inverse() * s).trace();
            auto consider = [&](const Vec3 &sigma) {
                const GStar2 g = g_star_2d(sigma, kappa, mu);
                if (g.degenerate) return;
                const LaminationSpec spec = detail::spec_from_gstar(g, res.theta(e));
                const Mat3 fc = detail::laminate_f(prob.moduli, spec, opt.regularization);
                const double v = (fc.inverse() * s).trace();
                if (v < best) {
                    best = v;
                    f[e] = fc;
                    res.laminates[e] = spec;
                }
            };
            consider(center.values.row(e).transpose());
            Eigen::SelfAdjointEigenSolver<Mat3> es(s);
            consider(es.eigenvectors().col(2) * std::sqrt(std::max(es.eigenvalues()(2), 0.0)));
            c(e) = std::max(best, 0.0);
            const Vec2 d = res.laminates[e].directions[0];
            res.angle(e) = std::fmod(std::atan2(d(1), d(0)) + 2 * kPi, kPi);
        }
        const bool penalizing = phase == Phase::Penalize;
        // element energy (1/theta - 1) c + l |e| theta
        auto theta_of = [&](double ell) {
            VecX t = VecX::Zero(ne);
            for (int e = 0; e < ne; ++e) {
                if (!m.active[e]) continue;
                t(e) = inverse_affine_argmin(c(e), 1.0, 0.0, ell * area, opt.theta_min, 1.0);
                if (penalizing) t(e) = std::max(opt.theta_min, penalize_theta(t(e)));
            }
            return t;
        };
        VolumeFit fit;
        if (opt.fixed_multiplier) fit = {theta_of(*opt.fixed_multiplier), *opt.fixed_multiplier};
        else fit = fit_volume(m, theta_of, prob.volume);
        const double dtheta = (fit.theta - res.theta).cwiseAbs().maxCoeff();
        const double dJ = it > 0 ? std::abs(previous_J - J) / std::max(std::abs(J), 1e-300) : 1.0;
        previous_J = J;
        const double criterion = std::max(dtheta, dJ);
        res.history.records.back().criterion = criterion;
        res.theta = fit.theta;
        res.multiplier = fit.multiplier;
        for (int e = 0; e < ne; ++e) res.laminates[e].theta = res.theta(e);
        phase = detail::advance(phase, criterion < opt.tolerance, it + 1 >= opt.iterations, penalized,
                                opt.penalization_iterations, res.converged);
        if (phase != Phase::Composite && res.composite_iterations == 0) {
            res.composite_iterations = static_cast<int>(res.history.size()) + 1;
            res.composite_gray = gray_level(m, res.theta);
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// SIMP

struct SimpResult {
    VecX theta;
    OptHistory history;
    std::vector<int> phase_end;      // history size at the end of each exponent phase
    std::vector<double> phase_gray;  // gray level at the end of each phase
    double multiplier = 0.0;
    VecX u;
};

/// Alternating minimization with Hooke's law theta^p A. For each exponent the
/// density update theta = (p E / (l |e|))^(1/(p+1)) is the exact minimizer of
/// E / theta^p + l |e| theta for the current stress, so J decreases within a phase.
inline SimpResult simp_run(const ElasticProblem &prob, const std::vector<double> &schedule,
                           const RelaxedOptions &opt = {}) {
    prob.validate();
    if (schedule.empty() || schedule.front() != 1.0) throw InvalidArgument("SIMP schedule must start at p = 1");
    const Mesh2D &m = prob.mesh;
    const int ne = m.num_elements();
    const double area = m.element_area();
    const Mat3 a = Hooke2D::isotropic(prob.moduli).K;
    const Mat3 a_inv = a.inverse();
    const VecX load = elastic_load(m, prob.body_force);
    SimpResult res;
    res.theta = VecX::Zero(ne);
    for (int e = 0; e < ne; ++e)
        if (m.active[e]) res.theta(e) = std::max(prob.volume, opt.theta_min);
    int it = 0;
    for (double p : schedule) {
        if (p < 1.0) throw InvalidArgument("SIMP exponent must be at least 1");
        for (int k = 0; k <= opt.iterations; ++k, ++it) {
            std::vector<Hooke2D> hooke(ne, Hooke2D(Mat3::Zero()));
            for (int e = 0; e < ne; ++e)
                if (m.active[e]) hooke[e] = Hooke2D(std::pow(res.theta(e), p) * a);
            res.u = solve(assemble_elasticity(m, hooke, prob.body_force)).x;
            double J = load.dot(res.u);
            if (opt.fixed_multiplier) J += *opt.fixed_multiplier * res.theta.sum() * area;
            res.history.push({it, J, active_mean(m, res.theta), p, res.multiplier, 0.0, 0.0});
            if (opt.on_iterate) opt.on_iterate(it, res.theta);
            if (k == opt.iterations) break;
            const auto moments = element_stress_moments(m, hooke, res.u);
            VecX energy = VecX::Zero(ne);
            for (int e = 0; e < ne; ++e)
                if (m.active[e]) energy(e) = std::max((a_inv * moments[e]).trace(), 0.0);
            auto theta_of = [&](double ell) {
                VecX t = VecX::Zero(ne);
                for (int e = 0; e < ne; ++e) {
                    if (!m.active[e]) continue;
                    if (ell <= 0.0) {
                        t(e) = 1.0;
                        continue;
                    }
                    t(e) = std::clamp(std::pow(p * energy(e) / (ell * area), 1.0 / (p + 1.0)), opt.theta_min, 1.0);
                }
                return t;
            };
            VolumeFit fit;
            if (opt.fixed_multiplier) fit = {theta_of(*opt.fixed_multiplier), *opt.fixed_multiplier};
            else fit = fit_volume(m, theta_of, prob.volume);
            const double change = (fit.theta - res.theta).cwiseAbs().maxCoeff();
            res.history.records.back().criterion = change;
            res.theta = fit.theta;
            res.multiplier = fit.multiplier;
            if (change < opt.tolerance) {
                ++it;
                // record the design the phase ends on
                for (int e = 0; e < ne; ++e)
                    if (m.active[e]) hooke[e] = Hooke2D(std::pow(res.theta(e), p) * a);
                res.u = solve(assemble_elasticity(m, hooke, prob.body_force)).x;
                double Jf = load.dot(res.u);
                if (opt.fixed_multiplier) Jf += *opt.fixed_multiplier * res.theta.sum() * area;
                res.history.push({it, Jf, active_mean(m, res.theta), p, res.multiplier, 0.0, 0.0});
                break;
            }
        }
        ++it;
        res.phase_end.push_back(static_cast<int>(res.history.size()));
        res.phase_gray.push_back(gray_level(m, res.theta));
    }
    return res;
}

}  // namespace homtopo
