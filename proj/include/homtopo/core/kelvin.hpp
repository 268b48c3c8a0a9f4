#pragma once

// Symmetric 2x2 tensors are stored in the orthonormal Kelvin basis
// (t11, t22, sqrt(2) t12). Fourth-order tensors with minor and major
// symmetries become symmetric 3x3 matrices and the double contraction
// A xi : xi reduces to a plain quadratic form.

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <string>

#include "homtopo/core/errors.hpp"

namespace homtopo {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

inline constexpr double kSqrt2 = std::numbers::sqrt2;
inline constexpr double kPi = std::numbers::pi;

inline Vec3 to_kelvin(const Mat2 &t) {
    return Vec3(t(0, 0), t(1, 1), kSqrt2 * 0.5 * (t(0, 1) + t(1, 0)));
}

inline Mat2 from_kelvin(const Vec3 &v) {
    Mat2 t;
    t << v(0), v(2) / kSqrt2, v(2) / kSqrt2, v(1);
    return t;
}

/// Lame coefficients of an isotropic 2-D material.
struct IsotropicModuli {
    double lambda = 0.0;
    double mu = 0.0;

    double kappa() const { return lambda + mu; }  // 2-D bulk modulus

    static IsotropicModuli from_young(double young, double poisson) {
        // plane stress
        const double mu = young / (2.0 * (1.0 + poisson));
        const double lambda = young * poisson / (1.0 - poisson * poisson);
        return {lambda, mu};
    }

    static IsotropicModuli from_bulk_shear(double kappa, double mu) { return {kappa - mu, mu}; }

    void validate() const {
        if (!(mu > 0.0) || !(kappa() > 0.0))
            throw InvalidArgument("isotropic moduli must satisfy mu > 0 and lambda + mu > 0");
    }
};

/// Hooke's law in Kelvin notation.
struct Hooke2D {
    Mat3 K = Mat3::Zero();

    Hooke2D() = default;
    explicit Hooke2D(const Mat3 &k) : K(k) {}

    static Hooke2D isotropic(const IsotropicModuli &m) {
        Mat3 k;
        k << 2 * m.mu + m.lambda, m.lambda, 0,
             m.lambda, 2 * m.mu + m.lambda, 0,
             0, 0, 2 * m.mu;
        return Hooke2D(k);
    }

    double energy(const Vec3 &xi) const { return xi.dot(K * xi); }

    bool is_symmetric(double tol = 1e-10) const {
        return (K - K.transpose()).norm() <= tol * std::max(1.0, K.norm());
    }

    /// Smallest eigenvalue of the symmetric part.
    double min_eigenvalue() const {
        Eigen::SelfAdjointEigenSolver<Mat3> es(0.5 * (K + K.transpose()));
        return es.eigenvalues()(0);
    }

    Hooke2D inverse() const { return Hooke2D(K.inverse()); }
};

/// Kelvin matrix of xi -> Q^T xi Q where Q rotates by alpha.
inline Mat3 kelvin_rotation(double alpha) {
    const double c = std::cos(2 * alpha), s = std::sin(2 * alpha);
    Mat3 r;
    r << 0.5 * (1 + c), 0.5 * (1 - c), s / kSqrt2,
         0.5 * (1 - c), 0.5 * (1 + c), -s / kSqrt2,
         -s / kSqrt2, s / kSqrt2, c;
    return r;
}

/// Affine pieces of the rotation as a function of b = (cos 2a, sin 2a).
struct RotationBasis {
    Mat3 S0, S1, S2;
    RotationBasis() {
        S0 << 0.5, 0.5, 0, 0.5, 0.5, 0, 0, 0, 0;
        S1 << 0.5, -0.5, 0, -0.5, 0.5, 0, 0, 0, 1;
        S2 << 0, 0, 1 / kSqrt2, 0, 0, -1 / kSqrt2, -1 / kSqrt2, 1 / kSqrt2, 0;
    }
    Mat3 operator()(const Vec2 &b) const { return S0 + b(0) * S1 + b(1) * S2; }
};

inline const RotationBasis &rotation_basis() {
    static const RotationBasis basis;
    return basis;
}

/// Hooke's law of the material rotated by alpha: R^T A R.
inline Hooke2D rotate_hooke(const Hooke2D &a, double alpha) {
    const Mat3 r = kelvin_rotation(alpha);
    return Hooke2D(r.transpose() * a.K * r);
}

inline Mat2 rotation2(double alpha) {
    Mat2 q;
    q << std::cos(alpha), -std::sin(alpha), std::sin(alpha), std::cos(alpha);
    return q;
}

/// Rotated conductivity tensor Q A Q^T.
inline Mat2 rotate_conductivity(const Mat2 &a, double alpha) {
    const Mat2 q = rotation2(alpha);
    return q * a * q.transpose();
}

}  // namespace homtopo
