#pragma once

// Closed-form composite algebra for two-phase mixtures: laminates,
// Hashin-Shtrikman bounds and the optimal complementary energy.

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "homtopo/fem/postprocess.hpp"

namespace homtopo {

/// Lamination directions e_i with weights m_i summing to one.
struct LaminationSpec {
    std::vector<Vec2> directions;
    std::vector<double> weights;
    double theta = 1.0;

    void validate() const {
        if (directions.size() != weights.size() || directions.empty())
            throw InvalidArgument("lamination spec needs one weight per direction");
        double s = 0.0;
        for (size_t i = 0; i < weights.size(); ++i) {
            if (weights[i] < 0.0) throw InvalidArgument("lamination weights must be nonnegative");
            if (std::abs(directions[i].norm() - 1.0) > 1e-12) throw InvalidArgument("lamination directions must be unit vectors");
            s += weights[i];
        }
        if (std::abs(s - 1.0) > 1e-12) throw InvalidArgument("lamination weights must sum to one");
        if (theta < 0.0 || theta > 1.0) throw InvalidArgument("proportion must lie in [0,1]");
    }
};

/// Harmonic and arithmetic means (lambda-, lambda+) of alpha and beta in proportions theta, 1-theta.
inline std::pair<double, double> lam_bounds(double alpha, double beta, double theta) {
    if (!(alpha > 0.0) || !(beta > 0.0)) throw InvalidArgument("phase conductivities must be positive");
    if (theta < 0.0 || theta > 1.0) throw InvalidArgument("proportion must lie in [0,1]");
    const double lminus = 1.0 / (theta / alpha + (1.0 - theta) / beta);
    const double lplus = theta * alpha + (1.0 - theta) * beta;
    return {std::min(lminus, lplus), lplus};
}

/// Simple laminate of A (proportion theta) and B in direction e.
inline Mat2 simple_laminate(const Mat2 &a, const Mat2 &b, double theta, const Vec2 &e) {
    const double denom = (1.0 - theta) * e.dot(a * e) + theta * e.dot(b * e);
    if (!(std::abs(denom) > 1e-300)) throw InvalidArgument("simple laminate denominator vanishes");
    const Vec2 d = (a - b) * e;
    const Vec2 dt = (a - b).transpose() * e;
    return theta * a + (1.0 - theta) * b - theta * (1.0 - theta) * d * dt.transpose() / denom;
}

/// Sequential laminate with core A and matrix B:
/// theta (A* - B)^-1 = (A - B)^-1 + (1-theta) sum m_i e_i e_i^T / (B e_i . e_i).
inline Mat2 rank_p_laminate_scalar(const Mat2 &a, const Mat2 &b, double theta, const LaminationSpec &spec) {
    spec.validate();
    const Mat2 diff = a - b;
    if (std::abs(diff.determinant()) <= 1e-14 * std::max(1.0, diff.squaredNorm()))
        throw InvalidArgument("A - B is singular; use simple_laminate for equal or degenerate phases");
    if (theta == 0.0) return b;
    Mat2 s = diff.inverse();
    for (size_t i = 0; i < spec.weights.size(); ++i) {
        const Vec2 &e = spec.directions[i];
        s += (1.0 - theta) * spec.weights[i] * e * e.transpose() / e.dot(b * e);
    }
    const Mat2 out = b + theta * s.inverse();
    return 0.5 * (out + out.transpose());
}

struct HsScalarReport {
    bool eig_bounds_ok = false, lower_trace_ok = false, upper_trace_ok = false;
    double eig_slack = 0.0, lower_slack = 0.0, upper_slack = 0.0;  // rhs - lhs, >= 0 when satisfied
    bool degenerate = false;  // an eigenvalue equals alpha or beta, the affected slack is +inf
};

/// Checks the Hashin-Shtrikman characterization of G_theta for a 2x2 tensor.
inline HsScalarReport hs_check_scalar(const Mat2 &astar, double theta, double alpha, double beta, double tol = 1e-12) {
    const auto [lm, lp] = lam_bounds(alpha, beta, theta);
    const Vec2 ev = Eigen::SelfAdjointEigenSolver<Mat2>(0.5 * (astar + astar.transpose())).eigenvalues();
    const double inf = std::numeric_limits<double>::infinity();
    HsScalarReport r;
    r.eig_slack = std::min(ev(0) - lm, lp - ev(1));
    r.eig_bounds_ok = r.eig_slack >= -tol * beta;
    const bool at_alpha = ev(0) == alpha || ev(1) == alpha;
    const bool at_beta = ev(0) == beta || ev(1) == beta;
    r.degenerate = at_alpha || at_beta;
    if (at_alpha) {
        r.lower_slack = inf;
    } else {
        const double lhs = 1.0 / (ev(0) - alpha) + 1.0 / (ev(1) - alpha);
        const double rhs = 1.0 / (lm - alpha) + 1.0 / (lp - alpha);
        r.lower_slack = rhs - lhs;
    }
    if (at_beta) {
        r.upper_slack = inf;
    } else {
        const double lhs = 1.0 / (beta - ev(0)) + 1.0 / (beta - ev(1));
        const double rhs = 1.0 / (beta - lm) + 1.0 / (beta - lp);
        r.upper_slack = rhs - lhs;
    }
    r.lower_trace_ok = r.lower_slack >= -tol * std::max(1.0, std::abs(r.lower_slack));
    r.upper_trace_ok = r.upper_slack >= -tol * std::max(1.0, std::abs(r.upper_slack));
    return r;
}

/// Rank-2 laminate along the coordinate axes whose eigenvalues are the given
/// targets, which must lie on the upper Hashin-Shtrikman surface.
inline LaminationSpec hs_attaining_weights(const Vec2 &targets, double theta, double alpha, double beta) {
    const auto [lm, lp] = lam_bounds(alpha, beta, theta);
    if (theta >= 1.0) throw InvalidArgument("attaining laminate needs theta < 1");
    for (int i = 0; i < 2; ++i)
        if (targets(i) < lm - 1e-12 || targets(i) > lp + 1e-12)
            throw InvalidArgument("target eigenvalue outside [lambda-, lambda+]");
    const double lhs = 1.0 / (beta - targets(0)) + 1.0 / (beta - targets(1));
    const double rhs = 1.0 / (beta - lm) + 1.0 / (beta - lp);
    if (std::abs(lhs - rhs) > 1e-8 * rhs)
        throw InvalidArgument("targets are off the upper bound surface (residual " + std::to_string(lhs - rhs) + ")");
    LaminationSpec spec;
    spec.theta = theta;
    spec.directions = {Vec2(1, 0), Vec2(0, 1)};
    for (int i = 0; i < 2; ++i)
        spec.weights.push_back(beta * (lp - targets(i)) / ((1.0 - theta) * (beta - alpha) * (beta - targets(i))));
    // remove the rounding drift so that the weights sum to one exactly
    const double s = spec.weights[0] + spec.weights[1];
    spec.weights[0] /= s;
    spec.weights[1] = 1.0 - spec.weights[0];
    return spec;
}

/// Kelvin matrix of the quadratic form f_A^c(e) of an isotropic material.
inline Mat3 fc_tensor(const IsotropicModuli &m, const Vec2 &e) {
    if (!(m.mu > 0.0) || !(2 * m.mu + m.lambda > 0.0)) throw InvalidArgument("f_c needs mu > 0 and 2 mu + lambda > 0");
    const Mat3 k = Hooke2D::isotropic(m).K;
    Eigen::Matrix<double, 2, 3> l;
    Vec3 q;
    for (int c = 0; c < 3; ++c) {
        const Mat2 axi = from_kelvin(k.col(c));
        l.col(c) = axi * e;
        q(c) = e.dot(axi * e);
    }
    const double coef = (m.mu + m.lambda) / (m.mu * (2 * m.mu + m.lambda));
    const Mat3 f = k - l.transpose() * l / m.mu + coef * q * q.transpose();
    return 0.5 * (f + f.transpose());
}

/// Rank-p laminate of A with void: (A*)^-1 = A^-1 + (1-theta)/theta F^-1 with F = sum m_i f_A^c(e_i).
/// In 2-D every f_A^c(e_i) has rank one, so F is inverted on its range and A*
/// vanishes on the stresses the laminate cannot carry.
inline Hooke2D rank_p_laminate_elastic_void(const IsotropicModuli &m, double theta, const LaminationSpec &spec) {
    spec.validate();
    const Mat3 a = Hooke2D::isotropic(m).K;
    if (theta >= 1.0) return Hooke2D(a);
    if (theta <= 0.0) return Hooke2D(Mat3::Zero());
    Mat3 f = Mat3::Zero();
    for (size_t i = 0; i < spec.weights.size(); ++i) f += spec.weights[i] * fc_tensor(m, spec.directions[i]);
    Eigen::SelfAdjointEigenSolver<Mat3> es(f);
    const double fmax = es.eigenvalues().cwiseAbs().maxCoeff();
    std::vector<int> range;
    for (int i = 0; i < 3; ++i)
        if (es.eigenvalues()(i) > 1e-10 * std::max(fmax, 1e-300)) range.push_back(i);
    if (fmax == 0.0 || range.empty())
        throw InvalidArgument("accumulated f_c sum has rank 0; laminate carries no stress");
    const int r = static_cast<int>(range.size());
    Eigen::MatrixXd z(3, r);
    Eigen::VectorXd finv(r);
    for (int j = 0; j < r; ++j) {
        z.col(j) = es.eigenvectors().col(range[j]);
        finv(j) = 1.0 / es.eigenvalues()(range[j]);
    }
    const Eigen::MatrixXd c = z.transpose() * a.inverse() * z + ((1.0 - theta) / theta) * Eigen::MatrixXd(finv.asDiagonal());
    const Mat3 out = z * c.inverse() * z.transpose();
    return Hooke2D(0.5 * (out + out.transpose()));
}

struct GStar2 {
    double g = 0.0;
    Vec2 weights = Vec2(0.5, 0.5);
    Vec2 e1 = Vec2(1, 0), e2 = Vec2(0, 1);  // eigenvectors of sigma for sigma1, sigma2
    double s1 = 0.0, s2 = 0.0;              // eigenvalues, |s1| >= |s2|
    bool degenerate = false;                 // sigma = 0, weights undefined
};

/// Optimal energy density g*(sigma) = (kappa+mu)/(4 mu kappa) (|s1|+|s2|)^2 and the optimal rank-2 laminate.
inline GStar2 g_star_2d(const Vec3 &sigma, double kappa, double mu) {
    GStar2 r;
    const Principal p = principal(sigma);
    r.s1 = p.s1;
    r.s2 = p.s2;
    r.e1 = Vec2(std::cos(p.angle), std::sin(p.angle));
    r.e2 = Vec2(-r.e1(1), r.e1(0));
    const double s = std::abs(p.s1) + std::abs(p.s2);
    r.g = (kappa + mu) / (4.0 * mu * kappa) * s * s;
    if (s == 0.0) {
        r.degenerate = true;
        return r;
    }
    r.weights = Vec2(std::abs(p.s2) / s, std::abs(p.s1) / s);
    return r;
}

struct GStar3 {
    double g = 0.0;
    Vec3 weights = Vec3::Zero();
    int regime = 1;
    bool degenerate = false;
};

/// Three-dimensional optimal energy density for zero Poisson ratio (kappa = 2 mu / 3).
/// Eigenvalues must be sorted by increasing magnitude.
inline GStar3 g_star_3d(const Vec3 &eigs, double mu) {
    const double a1 = std::abs(eigs(0)), a2 = std::abs(eigs(1)), a3 = std::abs(eigs(2));
    if (a1 > a2 || a2 > a3) throw InvalidArgument("eigenvalues must be sorted by absolute value");
    GStar3 r;
    const double total = a1 + a2 + a3;
    if (total == 0.0) {
        r.degenerate = true;
        return r;
    }
    if (a3 <= a1 + a2) {
        r.regime = 1;
        r.g = total * total / (4.0 * mu);
        r.weights = Vec3(a3 + a2 - a1, a1 - a2 + a3, a1 + a2 - a3) / total;
    } else {
        r.regime = 2;
        const double s = a1 + a2;
        r.g = (s * s + a3 * a3) / (2.0 * mu);
        r.weights = s > 0.0 ? Vec3(a2 / s, a1 / s, 0.0) : Vec3(1.0, 0.0, 0.0);
    }
    return r;
}

struct HsModuliReport {
    // order: bulk upper, bulk lower, shear upper, shear lower
    std::array<double, 4> slack{};
    std::array<bool, 4> ok{};
    std::array<bool, 4> guarded{};  // a denominator vanished, the inequality was not evaluated
};

/// Hashin-Shtrikman bounds for an isotropic effective tensor of A (proportion theta) and B.
/// Bulk moduli are kappa = lambda + 2 mu / N.
inline HsModuliReport hs_isotropic_moduli_check(double kstar, double mustar, double theta, const IsotropicModuli &a,
                                                const IsotropicModuli &b, int n) {
    const double ka = a.lambda + 2 * a.mu / n, kb = b.lambda + 2 * b.mu / n;
    const double na = 2 * a.mu + a.lambda, nb = 2 * b.mu + b.lambda;
    const double c = static_cast<double>(n * n + n - 2);
    HsModuliReport r;
    auto set = [&](int i, double lhs_num, double lhs_den, double rhs, bool rhs_ok) {
        if (lhs_den == 0.0 || !rhs_ok || !std::isfinite(rhs)) {
            r.guarded[i] = true;
            r.ok[i] = true;
            r.slack[i] = std::numeric_limits<double>::infinity();
            return;
        }
        const double lhs = lhs_num / lhs_den;
        r.slack[i] = rhs - lhs;
        r.ok[i] = lhs_den > 0.0 ? r.slack[i] >= -1e-12 * std::max(1.0, std::abs(rhs)) : false;
    };
    const bool kgap = ka != kb, mgap = a.mu != b.mu;
    set(0, 1 - theta, ka - kstar, kgap ? 1 / (ka - kb) - theta / na : 0, kgap);
    set(1, theta, kstar - kb, kgap && nb > 0 ? 1 / (ka - kb) + (1 - theta) / nb : 0, kgap && nb > 0);
    set(2, 1 - theta, 2 * (a.mu - mustar),
        mgap ? 1 / (2 * (a.mu - b.mu)) - theta * (n - 1) * (ka + 2 * a.mu) / (c * a.mu * na) : 0, mgap);
    const bool bshear = mgap && b.mu > 0 && nb > 0;
    set(3, theta, 2 * (mustar - b.mu),
        bshear ? 1 / (2 * (a.mu - b.mu)) + (1 - theta) * (n - 1) * (kb + 2 * b.mu) / (c * b.mu * nb) : 0, bshear);
    return r;
}

struct HsModuliBounds {
    double kappa_lower, kappa_upper, mu_lower, mu_upper;
};

/// The four bounds solved for kappa* and mu*.
inline HsModuliBounds hs_moduli_bounds(double theta, const IsotropicModuli &a, const IsotropicModuli &b, int n) {
    const double ka = a.lambda + 2 * a.mu / n, kb = b.lambda + 2 * b.mu / n;
    const double na = 2 * a.mu + a.lambda, nb = 2 * b.mu + b.lambda;
    const double c = static_cast<double>(n * n + n - 2);
    HsModuliBounds h{};
    h.kappa_upper = ka - (1 - theta) / (1 / (ka - kb) - theta / na);
    h.kappa_lower = nb > 0 ? kb + theta / (1 / (ka - kb) + (1 - theta) / nb) : kb;
    h.mu_upper = a.mu - (1 - theta) / (2 * (1 / (2 * (a.mu - b.mu)) - theta * (n - 1) * (ka + 2 * a.mu) / (c * a.mu * na)));
    h.mu_lower = b.mu > 0
                     ? b.mu + theta / (2 * (1 / (2 * (a.mu - b.mu)) + (1 - theta) * (n - 1) * (kb + 2 * b.mu) / (c * b.mu * nb)))
                     : b.mu;
    return h;
}

}  // namespace homtopo
