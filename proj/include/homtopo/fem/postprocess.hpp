#pragma once

#include <optional>
#include <vector>

#include "homtopo/fem/assembly.hpp"

namespace homtopo {

namespace detail {

inline Vec4 gather4(const Mesh2D &mesh, const VecX &u, int e) {
    const auto &n = mesh.elements[e];
    return Vec4(u(n[0]), u(n[1]), u(n[2]), u(n[3]));
}

inline Vec8 gather8(const Mesh2D &mesh, const VecX &u, int e) {
    Vec8 v;
    const auto &n = mesh.elements[e];
    for (int a = 0; a < 4; ++a) v.segment<2>(2 * a) = u.segment<2>(2 * n[a]);
    return v;
}

}  // namespace detail

/// Element-center gradient of a scalar Q1 field.
inline VectorField element_gradients(const Mesh2D &mesh, const VecX &u) {
    const Q1Element el(mesh.hx(), mesh.hy());
    VectorField g{Association::PerElement, Eigen::Matrix<double, Eigen::Dynamic, 2>(mesh.num_elements(), 2)};
    for (int e = 0; e < mesh.num_elements(); ++e)
        g.values.row(e) = (el.center_grad * detail::gather4(mesh, u, e)).transpose();
    return g;
}

/// Element-center Kelvin strain of a displacement.
inline TensorField2 element_strains(const Mesh2D &mesh, const VecX &u) {
    const Q1Element el(mesh.hx(), mesh.hy());
    TensorField2 s{Association::PerElement, Eigen::Matrix<double, Eigen::Dynamic, 3>(mesh.num_elements(), 3)};
    for (int e = 0; e < mesh.num_elements(); ++e)
        s.values.row(e) = (el.center_strain * detail::gather8(mesh, u, e)).transpose();
    return s;
}

/// Element-center Kelvin stress A e(u).
inline TensorField2 element_stresses(const Mesh2D &mesh, const std::vector<Hooke2D> &hooke, const VecX &u) {
    TensorField2 s = element_strains(mesh, u);
    for (int e = 0; e < mesh.num_elements(); ++e)
        s.values.row(e) = (hooke[e].K * s.values.row(e).transpose()).transpose();
    return s;
}

/// Per element sum over Gauss points of w_q s_q s_q^T with s_q = A e(u)(x_q).
/// The energy of any compliance C against this stress is trace(C M).
inline std::vector<Mat3> element_stress_moments(const Mesh2D &mesh, const std::vector<Hooke2D> &hooke,
                                                const VecX &u) {
    const Q1Element el(mesh.hx(), mesh.hy());
    std::vector<Mat3> out(mesh.num_elements(), Mat3::Zero());
    for (int e = 0; e < mesh.num_elements(); ++e) {
        if (!mesh.active[e]) continue;
        const Vec8 ue = detail::gather8(mesh, u, e);
        for (int q = 0; q < 4; ++q) {
            const Vec3 s = hooke[e].K * (el.strain[q] * ue);
            out[e] += el.weight * s * s.transpose();
        }
    }
    return out;
}

/// Per element integral of grad u (x) grad v, exact for Q1 fields.
inline std::vector<Mat2> element_gradient_moments(const Mesh2D &mesh, const VecX &u, const VecX &v) {
    const Q1Element el(mesh.hx(), mesh.hy());
    std::vector<Mat2> out(mesh.num_elements(), Mat2::Zero());
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const Vec4 ue = detail::gather4(mesh, u, e), ve = detail::gather4(mesh, v, e);
        for (int q = 0; q < 4; ++q) out[e] += el.weight * (el.grad[q] * ue) * (el.grad[q] * ve).transpose();
    }
    return out;
}

struct Principal {
    double s1 = 0.0, s2 = 0.0;  // ordered by decreasing magnitude
    double angle = 0.0;          // direction of s1 in [0, pi)
    bool indeterminate = false;  // isotropic tensor, any direction is principal
};

inline Principal principal(const Vec3 &kelvin) {
    const Mat2 t = from_kelvin(kelvin);
    Eigen::SelfAdjointEigenSolver<Mat2> es(t);
    const Vec2 ev = es.eigenvalues();
    int lead = 1;  // larger value
    if (std::abs(ev(0)) > std::abs(ev(1)) * (1 + 1e-14)) lead = 0;
    Principal p;
    p.s1 = ev(lead);
    p.s2 = ev(1 - lead);
    const Vec2 d = es.eigenvectors().col(lead);
    double a = std::atan2(d(1), d(0));
    if (a < 0) a += kPi;
    if (a >= kPi) a -= kPi;
    p.angle = a;
    const double scale = std::max(std::abs(ev(0)), std::abs(ev(1)));
    p.indeterminate = std::abs(ev(1) - ev(0)) <= 1e-12 * scale || scale == 0.0;
    return p;
}

/// Orientation aligning the laminate axes with the principal stresses, or
/// nothing for an isotropic stress.
inline std::optional<double> pedersen_angle(const Vec3 &sigma) {
    const Principal p = principal(sigma);
    if (p.indeterminate) return std::nullopt;
    return p.angle;
}

}  // namespace homtopo
