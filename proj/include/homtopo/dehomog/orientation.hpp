#pragma once

// Orientation fields stored through the doubled angle b = (cos 2a, sin 2a),
// singularity detection, and the harmonic regularization of beta = 2a.

#include <Eigen/SparseLU>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "homtopo/fem/assembly.hpp"
#include "homtopo/fem/postprocess.hpp"
#include "homtopo/fem/solver.hpp"
#include "homtopo/io/csv.hpp"

namespace homtopo {

using Vec2Field = Eigen::Matrix<double, Eigen::Dynamic, 2>;

/// Unit vectors b = (cos beta, sin beta), per node or per element.
struct OrientationField {
    Association association = Association::PerNode;
    Vec2Field b;

    int size() const { return static_cast<int>(b.rows()); }

    static OrientationField from_angles(Association assoc, const VecX &alpha) {
        OrientationField f{assoc, Vec2Field(alpha.size(), 2)};
        for (Eigen::Index i = 0; i < alpha.size(); ++i) f.b.row(i) << std::cos(2 * alpha(i)), std::sin(2 * alpha(i));
        return f;
    }

    double beta(int i) const { return std::atan2(b(i, 1), b(i, 0)); }

    /// alpha = beta / 2 in [0, pi).
    VecX angles() const {
        VecX a(size());
        for (int i = 0; i < size(); ++i) {
            double v = 0.5 * beta(i);
            if (v < 0) v += kPi;
            if (v >= kPi) v -= kPi;
            a(i) = v;
        }
        return a;
    }

    double max_norm_defect() const {
        double d = 0.0;
        for (int i = 0; i < size(); ++i) d = std::max(d, std::abs(b.row(i).norm() - 1.0));
        return d;
    }
};

namespace detail {

inline double wrap_angle(double d) {
    while (d > kPi) d -= 2 * kPi;
    while (d <= -kPi) d += 2 * kPi;
    return d;
}

inline Vec2 unit_or(const Vec2 &v, const Vec2 &fallback) {
    const double n = v.norm();
    return n > 1e-300 ? Vec2(v / n) : fallback;
}

/// Node (i,j) is interior when it lies inside the domain and all four
/// surrounding elements are active.
inline std::vector<char> interior_nodes(const Mesh2D &m) {
    std::vector<char> in(m.num_nodes(), 0);
    for (int j = 1; j < m.ny; ++j)
        for (int i = 1; i < m.nx; ++i)
            in[m.node_index(i, j)] = m.active[m.element_index(i - 1, j - 1)] && m.active[m.element_index(i, j - 1)] &&
                                     m.active[m.element_index(i, j)] && m.active[m.element_index(i - 1, j)];
    return in;
}

/// Corner values of beta on element e, unwrapped relative to the first corner.
inline Vec4 local_beta(const Mesh2D &m, const OrientationField &f, int e) {
    const auto &n = m.elements[e];
    const double b0 = f.beta(n[0]);
    Vec4 v;
    v(0) = b0;
    for (int a = 1; a < 4; ++a) v(a) = b0 + wrap_angle(f.beta(n[a]) - b0);
    return v;
}

/// Gauss point gradients of the element-wise unwrapped Q1 interpolant of beta.
inline std::vector<std::array<Vec2, 4>> beta_gradients(const Mesh2D &m, const OrientationField &f) {
    const Q1Element el(m.hx(), m.hy());
    std::vector<std::array<Vec2, 4>> out(m.num_elements());
    for (int e = 0; e < m.num_elements(); ++e) {
        const Vec4 be = local_beta(m, f, e);
        for (int q = 0; q < 4; ++q) out[e][q] = el.grad[q] * be;
    }
    return out;
}

inline SpMat laplace_matrix(const Mesh2D &m) {
    const Q1Element el(m.hx(), m.hy());
    return assemble_scaled(m, 1, el.scalar_stiffness(Mat2::Identity()), VecX::Ones(m.num_elements()));
}

}  // namespace detail

/// Node field from element values: normalized mean of the adjacent active elements.
inline OrientationField nodal_orientation(const Mesh2D &m, const OrientationField &elem) {
    if (elem.association != Association::PerElement || elem.size() != m.num_elements())
        throw InvalidArgument("expected an element orientation field");
    Vec2Field acc = Vec2Field::Zero(m.num_nodes(), 2);
    for (int e = 0; e < m.num_elements(); ++e)
        if (m.active[e])
            for (int n : m.elements[e]) acc.row(n) += elem.b.row(e);
    OrientationField out{Association::PerNode, Vec2Field(m.num_nodes(), 2)};
    for (int n = 0; n < m.num_nodes(); ++n)
        out.b.row(n) = detail::unit_or(acc.row(n).transpose(), Vec2(1, 0)).transpose();
    return out;
}

/// Element field from node values: normalized mean of the four corners.
inline OrientationField element_orientation(const Mesh2D &m, const OrientationField &nodal) {
    if (nodal.association != Association::PerNode || nodal.size() != m.num_nodes())
        throw InvalidArgument("expected a nodal orientation field");
    OrientationField out{Association::PerElement, Vec2Field(m.num_elements(), 2)};
    for (int e = 0; e < m.num_elements(); ++e) {
        Vec2 s = Vec2::Zero();
        for (int n : m.elements[e]) s += nodal.b.row(n).transpose();
        out.b.row(e) = detail::unit_or(s, Vec2(1, 0)).transpose();
    }
    return out;
}

struct Singularity {
    int cell = -1;        // element (nodal field) or vertex (element field)
    double charge = 0.0;  // winding of alpha, a multiple of 1/2
    Vec2 position = Vec2::Zero();
};

namespace detail {

inline int loop_winding(const OrientationField &f, const std::array<int, 4> &loop) {
    double total = 0.0;
    for (int k = 0; k < 4; ++k) total += wrap_angle(f.beta(loop[(k + 1) % 4]) - f.beta(loop[k]));
    return static_cast<int>(std::lround(total / (2 * kPi)));
}

}  // namespace detail

/// Nonzero windings of alpha. A nodal field is tested around every active
/// element, an element field around every interior vertex.
inline std::vector<Singularity> detect_singularities(const Mesh2D &m, const OrientationField &f) {
    std::vector<Singularity> out;
    if (f.association == Association::PerNode) {
        if (f.size() != m.num_nodes()) throw InvalidArgument("orientation field has the wrong size");
        for (int e = 0; e < m.num_elements(); ++e) {
            if (!m.active[e]) continue;
            const int w = detail::loop_winding(f, m.elements[e]);
            if (w != 0) out.push_back({e, 0.5 * w, m.element_center(e)});
        }
    } else {
        if (f.size() != m.num_elements()) throw InvalidArgument("orientation field has the wrong size");
        const auto inside = detail::interior_nodes(m);
        for (int j = 1; j < m.ny; ++j)
            for (int i = 1; i < m.nx; ++i) {
                const int v = m.node_index(i, j);
                if (!inside[v]) continue;
                const std::array<int, 4> loop{m.element_index(i - 1, j - 1), m.element_index(i, j - 1),
                                              m.element_index(i, j), m.element_index(i - 1, j)};
                const int w = detail::loop_winding(f, loop);
                if (w != 0) out.push_back({v, 0.5 * w, m.nodes[v]});
            }
    }
    return out;
}

/// Winding of alpha along the outer boundary of a fully active mesh.
inline double boundary_winding(const Mesh2D &m, const OrientationField &nodal) {
    if (nodal.association != Association::PerNode) throw InvalidArgument("expected a nodal orientation field");
    double total = 0.0;
    for (const auto &e : m.boundary_edges) total += detail::wrap_angle(nodal.beta(e.b) - nodal.beta(e.a));
    return 0.5 * std::lround(total / (2 * kPi));
}

inline std::string describe(const std::vector<Singularity> &s) {
    std::string out;
    for (const auto &x : s) {
        if (!out.empty()) out += ", ";
        out += (x.charge > 0 ? "+" : "") + format_double(x.charge) + " at (" + format_double(x.position(0)) + ", " +
               format_double(x.position(1)) + ")";
    }
    return out;
}

/// sup over q in H^1_0 of |int grad beta . grad q| / |grad q|, the dual norm of
/// the discrete weak Laplacian of beta.
inline double harmonic_residual(const Mesh2D &m, const OrientationField &nodal) {
    if (nodal.association != Association::PerNode || nodal.size() != m.num_nodes())
        throw InvalidArgument("expected a nodal orientation field");
    const Q1Element el(m.hx(), m.hy());
    const auto gb = detail::beta_gradients(m, nodal);
    const auto inside = detail::interior_nodes(m);
    VecX r = VecX::Zero(m.num_nodes());
    for (int e = 0; e < m.num_elements(); ++e) {
        if (!m.active[e]) continue;
        for (int q = 0; q < 4; ++q) {
            const Vec4 c = el.weight * (el.grad[q].transpose() * gb[e][q]);
            for (int a = 0; a < 4; ++a) r(m.elements[e][a]) += c(a);
        }
    }
    SparseSystem sys;
    sys.matrix = detail::laplace_matrix(m);
    sys.rhs = VecX::Zero(m.num_nodes());
    for (int n = 0; n < m.num_nodes(); ++n) {
        if (inside[n]) sys.rhs(n) = r(n);
        else sys.constrained_dofs.emplace_back(n, 0.0);
    }
    if (static_cast<int>(sys.constrained_dofs.size()) == m.num_nodes()) return 0.0;
    const VecX x = solve(sys).x;
    return std::sqrt(std::max(sys.rhs.dot(x), 0.0));
}

/// Kelvin stresses at the four Gauss points of every element.
using GaussStresses = std::vector<std::array<Vec3, 4>>;

inline GaussStresses element_gauss_stresses(const Mesh2D &m, const std::vector<Hooke2D> &hooke, const VecX &u) {
    const Q1Element el(m.hx(), m.hy());
    GaussStresses out(m.num_elements());
    for (int e = 0; e < m.num_elements(); ++e) {
        const Vec8 ue = detail::gather8(m, u, e);
        for (int q = 0; q < 4; ++q)
            out[e][q] = m.active[e] ? Vec3(hooke[e].K * (el.strain[q] * ue)) : Vec3::Zero();
    }
    return out;
}

struct RegularizeOptions {
    double eta = 0.05;
    int iterations = 50;
    double tolerance = 1e-10;  // on the largest rotation of a step
    bool presmooth = true;     // start from the anisotropy-weighted smoothing of b0
    double proximal = 1e-8;    // relative weight of |delta beta|^2 keeping the step system definite
};

struct RegularizeResult {
    OrientationField b;             // nodal
    std::vector<double> residual;   // harmonic residual of b0, then after each stage
    std::vector<double> objective;  // compliance + eta^2 |grad beta|^2, same indexing
    int iterations = 0;
    std::vector<std::string> warnings;
};

namespace detail {

/// Angle at the Gauss points of element e from the unwrapped corner values.
inline Vec4 gauss_beta(const Q1Element &el, const Vec4 &corners) {
    Vec4 out;
    for (int q = 0; q < 4; ++q) out(q) = el.shape[q].dot(corners);
    return out;
}

inline Vec2 unit(double beta) { return Vec2(std::cos(beta), std::sin(beta)); }

inline std::vector<Mat3> compliances(const Mesh2D &m, const std::vector<Hooke2D> &a0) {
    std::vector<Mat3> c(m.num_elements(), Mat3::Zero());
    for (int e = 0; e < m.num_elements(); ++e)
        if (m.active[e]) c[e] = a0[e].K.inverse();
    return c;
}

}  // namespace detail

/// int (A0^-1 S(b) s . S(b) s + eta^2 |grad beta|^2).
inline double orientation_objective(const Mesh2D &m, const OrientationField &nodal, const std::vector<Hooke2D> &a0,
                                    const GaussStresses &sigma, double eta) {
    const Q1Element el(m.hx(), m.hy());
    const RotationBasis &rb = rotation_basis();
    double total = 0.0;
    for (int e = 0; e < m.num_elements(); ++e) {
        if (!m.active[e]) continue;
        const Mat3 c = a0[e].K.inverse();
        const Vec4 be = detail::local_beta(m, nodal, e);
        const Vec4 bq = detail::gauss_beta(el, be);
        for (int q = 0; q < 4; ++q) {
            const Vec3 s = rb(detail::unit(bq(q))) * sigma[e][q];
            total += el.weight * (s.dot(c * s) + eta * eta * (el.grad[q] * be).squaredNorm());
        }
    }
    return total;
}

/// Per element, the spread max - min of the energy density over all
/// orientations, scaled to [0, 1]. Zero where the orientation is irrelevant.
inline VecX orientation_sensitivity(const Mesh2D &m, const std::vector<Hooke2D> &a0, const GaussStresses &sigma) {
    const RotationBasis &rb = rotation_basis();
    VecX w = VecX::Zero(m.num_elements());
    for (int e = 0; e < m.num_elements(); ++e) {
        if (!m.active[e]) continue;
        const Mat3 c = a0[e].K.inverse();
        Mat3 moment = Mat3::Zero();
        for (int q = 0; q < 4; ++q) moment += sigma[e][q] * sigma[e][q].transpose();
        double lo = 1e300, hi = -1e300;
        for (int k = 0; k < 32; ++k) {
            const Mat3 s = rb(detail::unit(2 * kPi * k / 32));
            const double v = (c * s * moment * s.transpose()).trace();
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        w(e) = hi - lo;
    }
    const double top = w.maxCoeff();
    if (top > 0.0) w /= top;
    return w;
}

/// Nodal field minimizing sum_e w_e int_e |b - b_e|^2 + eta^2 int |grad b|^2
/// over unconstrained vectors, then normalized. Orientation survives where
/// the cell is anisotropic and is interpolated smoothly elsewhere.
inline OrientationField smooth_orientation(const Mesh2D &m, const OrientationField &elem, const VecX &weight,
                                           double eta) {
    if (elem.association != Association::PerElement || elem.size() != m.num_elements())
        throw InvalidArgument("expected an element orientation field");
    const Q1Element el(m.hx(), m.hy());
    const Mat4 mass = el.mass(), stiff = el.scalar_stiffness(Mat2::Identity());
    VecX w = weight.cwiseMax(1e-6);
    SparseSystem sys;
    sys.matrix = assemble_matrix(m, 1, [&](int e) { return Mat4(w(e) * mass + eta * eta * stiff); });
    detail::constrain_inactive(m, 1, sys.constrained_dofs);
    OrientationField out{Association::PerNode, Vec2Field(m.num_nodes(), 2)};
    LinearSolver solver;
    for (int d = 0; d < 2; ++d) {
        sys.rhs = VecX::Zero(m.num_nodes());
        for (int e = 0; e < m.num_elements(); ++e) {
            if (!m.active[e]) continue;
            const Vec4 r = w(e) * elem.b(e, d) * (mass * Vec4::Ones());
            for (int a = 0; a < 4; ++a) sys.rhs(m.elements[e][a]) += r(a);
        }
        out.b.col(d) = solver.solve(sys).x;
    }
    for (int n = 0; n < m.num_nodes(); ++n)
        out.b.row(n) = detail::unit_or(out.b.row(n).transpose(), Vec2(1, 0)).transpose();
    return out;
}

/// Minimizes compliance + eta^2 int |grad beta|^2 under the weak harmonic
/// constraint on beta. Each Newton step solves for a nodal increment
/// delta beta, i.e. delta b = delta beta b^perp, with the constraint
/// linearized exactly and the compliance in Gauss-Newton form. The
/// increment is applied as a rotation so b stays unit.
/// `a0` holds the unrotated cell tensors A*(m, 0) per element.
inline RegularizeResult regularize_orientation(const Mesh2D &m, const OrientationField &b0,
                                               const std::vector<Hooke2D> &a0, const GaussStresses &sigma,
                                               const RegularizeOptions &opt = {}) {
    if (!(opt.eta > 0.0)) throw InvalidArgument("eta must be positive");
    if (static_cast<int>(a0.size()) != m.num_elements() || static_cast<int>(sigma.size()) != m.num_elements())
        throw InvalidArgument("cell tensors or stresses have the wrong size");
    const bool per_element = b0.association == Association::PerElement;
    if (b0.size() != (per_element ? m.num_elements() : m.num_nodes()))
        throw InvalidArgument("orientation field has the wrong size");
    const Q1Element el(m.hx(), m.hy());
    const RotationBasis &rb = rotation_basis();
    const auto inside = detail::interior_nodes(m);
    const auto active_node = m.active_nodes();
    const auto compliance = detail::compliances(m, a0);
    const VecX lumped = detail::lumped_node_weights(m);
    const double eta2 = opt.eta * opt.eta;
    std::vector<int> row(m.num_nodes(), -1);
    int nc = 0;
    for (int n = 0; n < m.num_nodes(); ++n)
        if (inside[n]) row[n] = nc++;
    const int nn = m.num_nodes(), ntot = nn + nc;

    RegularizeResult res;
    OrientationField start = per_element ? nodal_orientation(m, b0) : b0;
    for (int n = 0; n < nn; ++n)
        start.b.row(n) = detail::unit_or(start.b.row(n).transpose(), Vec2(1, 0)).transpose();
    res.residual.push_back(harmonic_residual(m, start));
    res.objective.push_back(orientation_objective(m, start, a0, sigma, opt.eta));
    if (opt.presmooth) {
        const OrientationField target = per_element ? b0 : element_orientation(m, start);
        start = smooth_orientation(m, target, orientation_sensitivity(m, a0, sigma), opt.eta);
        res.residual.push_back(harmonic_residual(m, start));
        res.objective.push_back(orientation_objective(m, start, a0, sigma, opt.eta));
    }
    res.b = start;
    double residual = res.residual.back(), objective = res.objective.back();

    for (int it = 0; it < opt.iterations; ++it) {
        std::vector<Triplet> trip;
        VecX rhs = VecX::Zero(ntot);
        double diag_sum = 0.0;
        for (int e = 0; e < m.num_elements(); ++e) {
            if (!m.active[e]) continue;
            const auto &nodes = m.elements[e];
            const Vec4 be = detail::local_beta(m, res.b, e);
            const Vec4 bq = detail::gauss_beta(el, be);
            Mat4 h = Mat4::Zero(), lap = Mat4::Zero();
            Vec4 g = Vec4::Zero(), r = Vec4::Zero();
            for (int q = 0; q < 4; ++q) {
                const Vec2 u = detail::unit(bq(q)), up(-u(1), u(0));
                const Vec3 s = rb(u) * sigma[e][q];
                const Vec3 ds = (up(0) * rb.S1 + up(1) * rb.S2) * sigma[e][q];
                const Vec2 grad = el.grad[q] * be;
                const Vec4 &n = el.shape[q];
                h += 2 * el.weight * (ds.dot(compliance[e] * ds) * n * n.transpose() +
                                      eta2 * el.grad[q].transpose() * el.grad[q]);
                g += 2 * el.weight * (ds.dot(compliance[e] * s) * n + eta2 * el.grad[q].transpose() * grad);
                lap += el.weight * el.grad[q].transpose() * el.grad[q];
                r += el.weight * el.grad[q].transpose() * grad;
            }
            for (int a = 0; a < 4; ++a) {
                rhs(nodes[a]) -= g(a);
                diag_sum += h(a, a);
                for (int c = 0; c < 4; ++c) trip.emplace_back(nodes[a], nodes[c], h(a, c));
                const int k = row[nodes[a]];
                if (k < 0) continue;
                rhs(nn + k) -= r(a);
                for (int c = 0; c < 4; ++c) {
                    trip.emplace_back(nn + k, nodes[c], lap(a, c));
                    trip.emplace_back(nodes[c], nn + k, lap(a, c));
                }
            }
        }
        const double tau = opt.proximal * std::max(diag_sum / nn, 1e-300);
        for (int n = 0; n < nn; ++n) {
            if (active_node[n]) trip.emplace_back(n, n, tau * lumped(n) / m.element_area());
            else trip.emplace_back(n, n, 1.0);
        }
        SpMat kkt(ntot, ntot);
        kkt.setFromTriplets(trip.begin(), trip.end());
        Eigen::SparseLU<SpMat> lu;
        lu.compute(kkt);
        VecX x;
        if (lu.info() == Eigen::Success) x = lu.solve(rhs);
        if (lu.info() != Eigen::Success || !x.allFinite()) {
            // fall back to a damped gradient step on the objective
            res.warnings.push_back("singular regularization system at iteration " + std::to_string(it) +
                                   ", taking a damped gradient step");
            x = VecX::Zero(ntot);
            const double scale = std::max(diag_sum / nn, 1e-300);
            x.head(nn) = rhs.head(nn) / scale;
        }
        const VecX delta = x.head(nn);

        // halve the step while both the objective and the residual would grow
        OrientationField next = res.b;
        double t = 1.0, next_res = residual, next_obj = objective;
        for (int k = 0; k < 5; ++k, t *= 0.5) {
            for (int n = 0; n < nn; ++n) {
                if (!active_node[n]) continue;
                const double c = std::cos(t * delta(n)), s = std::sin(t * delta(n));
                const double b1 = res.b.b(n, 0), b2 = res.b.b(n, 1);
                next.b.row(n) << c * b1 - s * b2, s * b1 + c * b2;
            }
            next_res = harmonic_residual(m, next);
            next_obj = orientation_objective(m, next, a0, sigma, opt.eta);
            if (next_obj <= objective || next_res <= residual) break;
            if (k == 4) res.warnings.push_back("damped step accepted without decrease at iteration " + std::to_string(it));
        }
        res.b = std::move(next);
        const bool stalled = std::abs(objective - next_obj) <= 1e-12 * std::abs(objective) && next_res <= residual;
        residual = next_res;
        objective = next_obj;
        res.residual.push_back(residual);
        res.objective.push_back(objective);
        res.iterations = it + 1;
        if (t * delta.cwiseAbs().maxCoeff() < opt.tolerance || stalled) break;
    }
    return res;
}

}  // namespace homtopo
