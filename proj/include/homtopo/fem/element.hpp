#pragma once

// Bilinear (Q1) element on an axis-aligned hx x hy rectangle with a 2x2 Gauss rule.

#include <array>

#include "homtopo/core/kelvin.hpp"

namespace homtopo {

using Mat4 = Eigen::Matrix4d;
using Mat8 = Eigen::Matrix<double, 8, 8>;
using Vec4 = Eigen::Vector4d;
using Vec8 = Eigen::Matrix<double, 8, 1>;
using Grad4 = Eigen::Matrix<double, 2, 4>;
using StrainMatrix = Eigen::Matrix<double, 3, 8>;

struct Q1Element {
    double hx = 1.0, hy = 1.0;
    std::array<Vec2, 4> points;      // reference coordinates in [0,1]^2
    std::array<Vec4, 4> shape;       // shape values at each point
    std::array<Grad4, 4> grad;       // physical gradients at each point
    std::array<StrainMatrix, 4> strain;
    Grad4 center_grad;
    StrainMatrix center_strain;
    double weight = 0.25;            // physical quadrature weight = area / 4

    Q1Element(double hx_, double hy_) : hx(hx_), hy(hy_) {
        const double g = 0.5 / std::sqrt(3.0);
        const double coords[2] = {0.5 - g, 0.5 + g};
        int q = 0;
        for (int b = 0; b < 2; ++b)
            for (int a = 0; a < 2; ++a) {
                points[q] = Vec2(coords[a], coords[b]);
                shape[q] = shape_values(points[q]);
                grad[q] = gradients(points[q]);
                strain[q] = strain_matrix(grad[q]);
                ++q;
            }
        center_grad = gradients(Vec2(0.5, 0.5));
        center_strain = strain_matrix(center_grad);
        weight = 0.25 * hx * hy;
    }

    double area() const { return hx * hy; }

    static Vec4 shape_values(const Vec2 &s) {
        return Vec4((1 - s(0)) * (1 - s(1)), s(0) * (1 - s(1)), s(0) * s(1), (1 - s(0)) * s(1));
    }

    Grad4 gradients(const Vec2 &s) const {
        Grad4 g;
        g << -(1 - s(1)) / hx, (1 - s(1)) / hx, s(1) / hx, -s(1) / hx,
             -(1 - s(0)) / hy, -s(0) / hy, s(0) / hy, (1 - s(0)) / hy;
        return g;
    }

    /// Kelvin strain of the displacement with dofs (ux0, uy0, ux1, uy1, ...).
    static StrainMatrix strain_matrix(const Grad4 &g) {
        StrainMatrix b = StrainMatrix::Zero();
        for (int a = 0; a < 4; ++a) {
            b(0, 2 * a) = g(0, a);
            b(1, 2 * a + 1) = g(1, a);
            b(2, 2 * a) = g(1, a) / kSqrt2;
            b(2, 2 * a + 1) = g(0, a) / kSqrt2;
        }
        return b;
    }

    Mat4 scalar_stiffness(const Mat2 &a) const {
        Mat4 k = Mat4::Zero();
        for (int q = 0; q < 4; ++q) k += weight * grad[q].transpose() * a * grad[q];
        return k;
    }

    Mat8 elastic_stiffness(const Mat3 &c) const {
        Mat8 k = Mat8::Zero();
        for (int q = 0; q < 4; ++q) k += weight * strain[q].transpose() * c * strain[q];
        return k;
    }

    Mat4 mass() const {
        Mat4 m = Mat4::Zero();
        for (int q = 0; q < 4; ++q) m += weight * shape[q] * shape[q].transpose();
        return m;
    }

    /// Load vector of a unit source over the element.
    Vec4 unit_load() const { return Vec4::Constant(0.25 * area()); }
};

}  // namespace homtopo
