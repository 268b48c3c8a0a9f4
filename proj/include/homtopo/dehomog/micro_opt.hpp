#pragma once

// Compliance minimization over square-hole cells: hole sizes (m1, m2) and
// orientation per element, with the cell tensors taken from a MicroTable.

#include <functional>
#include <optional>
#include <vector>

#include "homtopo/dehomog/orientation.hpp"
#include "homtopo/homog/micro_table.hpp"
#include "homtopo/opt/relaxed.hpp"

namespace homtopo {

struct MicroOptions {
    int iterations = 100;
    double tolerance = 1e-4;     // on the relative decrease of the compliance
    double initial_step = 0.1;   // largest first change of m
    double min_step = 1e-12;     // relative to the initial step
    std::function<void(int, const VecX &, const VecX &)> on_iterate;
};

struct MicroDesign {
    VecX m1, m2, alpha;            // per element
    OrientationField b;            // per element, b = (cos 2 alpha, sin 2 alpha)
    OptHistory history;
    double multiplier = 0.0;
    bool converged = false;
    VecX u;
    std::vector<Hooke2D> hooke;    // A*(m, alpha)
    std::vector<Hooke2D> unrotated;  // A*(m, 0)
    GaussStresses gauss_stress;

    /// Material fraction 1 - m1 m2 per element.
    VecX density() const { return VecX::Ones(m1.size()) - VecX(m1.cwiseProduct(m2)); }
};

namespace detail {

inline Hooke2D rotated_cell(const MicroTable &t, double m1, double m2, double alpha) {
    return rotate_hooke(t.lookup(Vec2(m1, m2)).a, alpha);
}

/// sum over elements of tr(A*^-1 S_e), the complementary energy of a fixed stress.
inline double micro_energy(const Mesh2D &mesh, const MicroTable &t, const VecX &m1, const VecX &m2,
                           const VecX &alpha, const std::vector<Mat3> &moments) {
    double total = 0.0;
    for (int e = 0; e < mesh.num_elements(); ++e)
        if (mesh.active[e]) total += (rotated_cell(t, m1(e), m2(e), alpha(e)).K.inverse() * moments[e]).trace();
    return total;
}

}  // namespace detail

/// Derivatives of the energy of a fixed stress with respect to m1 and m2,
/// divided by the element area.
inline std::pair<VecX, VecX> micro_gradient(const Mesh2D &mesh, const MicroTable &t, const VecX &m1, const VecX &m2,
                                            const VecX &alpha, const std::vector<Mat3> &moments) {
    const int ne = mesh.num_elements();
    VecX g1 = VecX::Zero(ne), g2 = VecX::Zero(ne);
    for (int e = 0; e < ne; ++e) {
        if (!mesh.active[e]) continue;
        const auto look = t.lookup(Vec2(m1(e), m2(e)));
        const Mat3 r = kelvin_rotation(alpha(e));
        const Mat3 c = (r.transpose() * look.a.K * r).inverse();
        const Mat3 w = c * moments[e] * c;
        g1(e) = -((r.transpose() * look.slope1 * r) * w).trace() / mesh.element_area();
        g2(e) = -((r.transpose() * look.slope2 * r) * w).trace() / mesh.element_area();
    }
    return {g1, g2};
}

/// Alternating scheme: solve for the stress, choose the orientation among the
/// previous one and the principal directions, then take a projected gradient
/// step on (m1, m2) under the volume constraint. The step is halved until the
/// energy of the current stress does not increase, which makes the compliance
/// non-increasing.
inline MicroDesign micro_param_opt(const ElasticProblem &prob, const MicroTable &table, const MicroOptions &opt = {}) {
    prob.validate();
    if (table.n_m < 2) throw InvalidArgument("micro table is empty");
    const Mesh2D &mesh = prob.mesh;
    const int ne = mesh.num_elements();

    MicroDesign d;
    const double m0 = std::sqrt(1.0 - prob.volume);
    d.m1 = VecX::Constant(ne, m0);
    d.m2 = VecX::Constant(ne, m0);
    d.alpha = VecX::Zero(ne);
    for (int e = 0; e < ne; ++e)
        if (!mesh.active[e]) d.m1(e) = d.m2(e) = 1.0;
    const VecX load = elastic_load(mesh, prob.body_force);
    double step = -1.0;

    auto state = [&]() {
        d.hooke.assign(ne, Hooke2D(Mat3::Zero()));
        d.unrotated.assign(ne, Hooke2D(Mat3::Zero()));
        for (int e = 0; e < ne; ++e) {
            if (!mesh.active[e]) continue;
            d.unrotated[e] = table.lookup(Vec2(d.m1(e), d.m2(e))).a;
            d.unrotated[e].K = 0.5 * (d.unrotated[e].K + d.unrotated[e].K.transpose());
            d.hooke[e] = rotate_hooke(d.unrotated[e], d.alpha(e));
            d.hooke[e].K = 0.5 * (d.hooke[e].K + d.hooke[e].K.transpose());
        }
        d.u = solve(assemble_elasticity(mesh, d.hooke, prob.body_force)).x;
        return load.dot(d.u);
    };

    double J = state();
    for (int it = 0;; ++it) {
        d.history.push({it, J, active_mean(mesh, d.density()), step, d.multiplier, 0.0, 0.0});
        if (opt.on_iterate) opt.on_iterate(it, d.m1, d.m2);
        if (it >= opt.iterations) break;

        const auto moments = element_stress_moments(mesh, d.hooke, d.u);
        const TensorField2 center = element_stresses(mesh, d.hooke, d.u);
        // orientation half-step
        VecX alpha = d.alpha;
        for (int e = 0; e < ne; ++e) {
            if (!mesh.active[e]) continue;
            const Hooke2D a0 = table.lookup(Vec2(d.m1(e), d.m2(e))).a;
            auto energy = [&](double a) { return (rotate_hooke(a0, a).K.inverse() * moments[e]).trace(); };
            double best = energy(alpha(e));
            std::vector<double> candidates;
            if (const auto p = pedersen_angle(center.values.row(e).transpose())) candidates.push_back(*p);
            Eigen::SelfAdjointEigenSolver<Mat3> es(moments[e]);
            if (const auto p = pedersen_angle(es.eigenvectors().col(2))) candidates.push_back(*p);
            for (double c : std::vector<double>(candidates))
                for (double a : {c, c + 0.5 * kPi}) {
                    const double v = energy(a);
                    if (v < best) {
                        best = v;
                        alpha(e) = std::fmod(a, kPi);
                    }
                }
        }
        const double e_alpha = detail::micro_energy(mesh, table, d.m1, d.m2, alpha, moments);

        // hole-size half-step with the volume multiplier fitted by dichotomy
        const auto [g1, g2] = micro_gradient(mesh, table, d.m1, d.m2, alpha, moments);
        if (step < 0.0) {
            const double gmax = std::max(g1.cwiseAbs().maxCoeff(), g2.cwiseAbs().maxCoeff());
            step = gmax > 0.0 ? opt.initial_step / gmax : opt.initial_step;
        }
        const double min_step = opt.min_step * step;
        VecX n1, n2;
        double ell = d.multiplier, e_new = e_alpha;
        bool accepted = false;
        for (; step >= min_step; step *= 0.5) {
            auto theta_of = [&](double l) {
                n1 = d.m1;
                n2 = d.m2;
                for (int e = 0; e < ne; ++e) {
                    if (!mesh.active[e]) continue;
                    n1(e) = std::clamp(d.m1(e) - step * (g1(e) - l * d.m2(e)), 0.0, 1.0);
                    n2(e) = std::clamp(d.m2(e) - step * (g2(e) - l * d.m1(e)), 0.0, 1.0);
                }
                return VecX(VecX::Ones(ne) - VecX(n1.cwiseProduct(n2)));
            };
            const VolumeFit fit = fit_volume(mesh, theta_of, prob.volume);
            ell = fit.multiplier;
            e_new = detail::micro_energy(mesh, table, n1, n2, alpha, moments);
            if (e_new <= e_alpha * (1.0 + 1e-10)) {
                accepted = true;
                break;
            }
        }
        d.alpha = alpha;
        if (accepted) {
            d.m1 = n1;
            d.m2 = n2;
            d.multiplier = ell;
        }
        const double previous = J;
        J = state();
        const double rel = std::abs(previous - J) / std::max(std::abs(J), 1e-300);
        if (accepted) step *= 1.2;
        else step = min_step;
        if (!accepted || rel < opt.tolerance) {
            d.converged = true;
            d.history.push({it + 1, J, active_mean(mesh, d.density()), step, d.multiplier, 0.0, rel});
            break;
        }
    }
    d.b = OrientationField::from_angles(Association::PerElement, d.alpha);
    d.gauss_stress = element_gauss_stresses(mesh, d.hooke, d.u);
    return d;
}

}  // namespace homtopo
