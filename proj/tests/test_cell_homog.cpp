#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "homtopo/homog/micro_table.hpp"
#include "homtopo/laminate/laminate.hpp"

using namespace homtopo;

namespace {

const IsotropicModuli kSolid = IsotropicModuli::from_young(1.0, 0.3);

std::vector<Mat2> phase_field(int n, const std::function<bool(double, double)> &is_alpha, double alpha, double beta) {
    std::vector<Mat2> a(n * n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            a[j * n + i] = (is_alpha((i + 0.5) / n, (j + 0.5) / n) ? alpha : beta) * Mat2::Identity();
    return a;
}

double rel(const Mat3 &a, const Mat3 &b) { return (a - b).norm() / b.norm(); }

// Small table shared by the property tests.
const MicroTable &small_table() {
    static const MicroTable t = build_micro_table(kSolid, 9, 32);
    return t;
}

// Simple laminate of A (proportion theta) with B = eps A, normal e, from
// (1-theta)(A*^-1 - A^-1)^-1 = (B^-1 - A^-1)^-1 + theta f_A^c(e).
Mat3 elastic_simple_laminate(const IsotropicModuli &m, double eps, double theta, const Vec2 &e) {
    const Mat3 a = Hooke2D::isotropic(m).K;
    const Mat3 d = a * eps / (1 - eps) + theta * fc_tensor(m, e);
    return (a.inverse() + (1 - theta) * d.inverse()).inverse();
}

}  // namespace

TEST(CellGeometry, VoidFractionIsExact) {
    const CellGeometry c{0.5, 0.3, 128};
    EXPECT_NEAR(c.void_fraction(), 0.15, 1e-12);
    EXPECT_DOUBLE_EQ(c.density(), 0.85);
}

TEST(ScalarCell, ConstantCoefficientHasZeroCorrectors) {
    const CellGeometry cell{0, 0, 16};
    const std::vector<Mat2> a(256, 2.5 * Mat2::Identity());
    const auto w = correctors_scalar(cell, a);
    EXPECT_LT(w[0].norm(), 1e-12);
    EXPECT_LT(w[1].norm(), 1e-12);
    EXPECT_LT((homogenize_scalar(cell, a, w) - 2.5 * Mat2::Identity()).norm(), 1e-12);
}

TEST(ScalarCell, LayeredMatchesHarmonicAndArithmeticMeans) {
    const int n = 64;
    const CellGeometry cell{0, 0, n};
    const auto a = phase_field(n, [](double y1, double) { return y1 < 0.5; }, 1.0, 2.0);
    const auto w = correctors_scalar(cell, a);
    const Mat2 astar = homogenize_scalar(cell, a, w);
    EXPECT_NEAR(astar(0, 0), 4.0 / 3.0, 0.02 * 4.0 / 3.0);
    EXPECT_NEAR(astar(1, 1), 1.5, 0.02 * 1.5);
    EXPECT_NEAR(astar(0, 1), 0.0, 1e-12);
    EXPECT_LT(w[1].norm(), 1e-10);
    // w1 depends on y1 only and is piecewise linear inside each phase
    const PeriodicCell pc(n);
    const Mesh2D &m = pc.mesh();
    for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i) EXPECT_NEAR(w[0](m.node_index(i, j)), w[0](m.node_index(i, 0)), 1e-10);
    for (int i = 1; i < n; ++i) {
        if (i == n / 2) continue;
        const double d2 = w[0](m.node_index(i + 1, 0)) - 2 * w[0](m.node_index(i, 0)) + w[0](m.node_index(i - 1, 0));
        EXPECT_NEAR(d2, 0.0, 1e-10);
    }
}

TEST(ScalarCell, CheckerboardCorrectorSymmetry) {
    const int n = 32;
    const CellGeometry cell{0, 0, n};
    auto tile = [](double y) { return std::abs(y - 0.5) < 0.25; };
    const auto a = phase_field(n, [&](double y1, double y2) { return tile(y1) != tile(y2); }, 1.0, 3.0);
    const auto w = correctors_scalar(cell, a);
    const PeriodicCell pc(n);
    const Mesh2D &m = pc.mesh();
    for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i) EXPECT_NEAR(w[0](m.node_index(i, j)), -w[0](m.node_index(n - i, j)), 1e-10);
    EXPECT_GT(w[0].norm(), 1e-3);
}

TEST(ScalarCell, RandomCellsWithinMeanBounds) {
    std::mt19937 rng(2);
    std::bernoulli_distribution coin(0.4);
    std::normal_distribution<double> nd(0, 1);
    const int n = 16;
    const CellGeometry cell{0, 0, n};
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<Mat2> a(n * n);
        Mat2 arith = Mat2::Zero(), harm_inv = Mat2::Zero();
        for (auto &x : a) {
            x = (coin(rng) ? 1.0 : 5.0) * Mat2::Identity();
            arith += x / (n * n);
            harm_inv += x.inverse() / (n * n);
        }
        const Mat2 astar = homogenize_scalar(cell, a, correctors_scalar(cell, a));
        EXPECT_LT((astar - astar.transpose()).norm(), 1e-12 * astar.norm());
        const Mat2 harm = harm_inv.inverse();
        for (int k = 0; k < 10; ++k) {
            const Vec2 v(nd(rng), nd(rng));
            EXPECT_LE(v.dot(harm * v), v.dot(astar * v) + 1e-6 * 5 * v.squaredNorm());
            EXPECT_LE(v.dot(astar * v), v.dot(arith * v) + 1e-6 * 5 * v.squaredNorm());
        }
    }
}

TEST(ElasticCell, SolidCellReturnsBase) {
    const Hooke2D a = Hooke2D::isotropic(kSolid);
    const CellGeometry cell{0, 0, 16};
    const auto w = correctors_elastic(cell, a);
    for (const auto &x : w) EXPECT_LT(x.norm(), 1e-12);
    EXPECT_LT(rel(homogenize_elastic(cell, a, w).K, a.K), 1e-12);
}

TEST(ElasticCell, ZeroAreaSlitKeepsBase) {
    const Hooke2D a = Hooke2D::isotropic(kSolid);
    EXPECT_LT(rel(cell_hooke({0.7, 0.0, 32}, a).K, a.K), 1e-12);
}

TEST(ElasticCell, SquareHoleSymmetryAndOrthotropy) {
    const Hooke2D a = Hooke2D::isotropic(kSolid);
    const Hooke2D h = cell_hooke({0.5, 0.5, 32}, a);
    EXPECT_NEAR(h.K(0, 0), h.K(1, 1), 1e-8 * h.K(0, 0));
    EXPECT_LE(std::abs(h.K(0, 2)), 1e-6 * h.K.norm());
    EXPECT_LE(std::abs(h.K(1, 2)), 1e-6 * h.K.norm());
    EXPECT_LT((h.K - h.K.transpose()).norm(), 1e-12 * h.K.norm());
    EXPECT_GT(h.min_eigenvalue(), 0.0);
}

TEST(ElasticCell, EnergyFormsAgree) {
    const Hooke2D a = Hooke2D::isotropic(kSolid);
    const CellGeometry cell{0.4, 0.6, 24};
    const PeriodicCell pc(cell.resolution);
    const auto k = cell_hooke_field(cell, a, 1e-3);
    LinearSolver solver;
    const auto w = kelvin_correctors(pc, k, solver);
    const Mesh2D &m = pc.mesh();
    const Q1Element &el = pc.element();
    std::mt19937 rng(4);
    std::normal_distribution<double> nd(0, 1);
    for (int trial = 0; trial < 3; ++trial) {
        const Vec3 xi(nd(rng), nd(rng), nd(rng));
        const VecX wx = xi(0) * w[0] + xi(1) * w[1] + xi(2) * w[2];
        double full = 0, reduced = 0;
        for (int e = 0; e < m.num_elements(); ++e) {
            const Vec8 we = detail::gather8(m, wx, e);
            for (int q = 0; q < 4; ++q) {
                const Vec3 s = xi + el.strain[q] * we;
                full += el.weight * s.dot(k[e] * s);
                reduced += el.weight * xi.dot(k[e] * s);
            }
        }
        const double direct = xi.dot(homogenize_kelvin(pc, k, w).K * xi);
        EXPECT_NEAR(full, reduced, 1e-10 * full);
        EXPECT_NEAR(full, direct, 1e-10 * full);
    }
}

TEST(ElasticCell, FullWidthHoleIsExactLaminate) {
    const Hooke2D a = Hooke2D::isotropic(kSolid);
    for (double m2 : {0.25, 0.5}) {
        const Mat3 lam = elastic_simple_laminate(kSolid, 1e-3, 1.0 - m2, Vec2(0, 1));
        EXPECT_LT(rel(cell_hooke({1.0, m2, 32}, a).K, lam), 1e-8) << "m2 = " << m2;
    }
}

// The thin ligaments left at m1 < 1 carry load across the layers, so only the
// in-layer stiffness is laminate-like; the transverse entries decay as m1 -> 1.
TEST(ElasticCell, NearlyFullWidthHoleApproachesLaminate) {
    const Hooke2D a = Hooke2D::isotropic(kSolid);
    for (double m2 : {0.25, 0.5}) {
        const Mat3 lam = elastic_simple_laminate(kSolid, 1e-3, 1.0 - m2, Vec2(0, 1));
        const Mat3 k = cell_hooke({0.96, m2, 64}, a).K;
        EXPECT_NEAR(k(0, 0), lam(0, 0), 0.1 * lam(0, 0)) << "m2 = " << m2;
        double prev = 1e300;
        for (double m1 : {0.8, 0.9, 0.96, 1.0}) {
            const Mat3 c = cell_hooke({m1, m2, 64}, a).K;
            const double gap = std::abs(c(1, 1) - lam(1, 1)) + std::abs(c(2, 2) - lam(2, 2));
            EXPECT_LT(gap, prev) << "m1 = " << m1;
            prev = gap;
        }
        EXPECT_LT(prev, 1e-6);
    }
}

TEST(Rotation, IdentityHalfTurnAndGroupAction) {
    const Hooke2D h = cell_hooke({0.6, 0.3, 16}, Hooke2D::isotropic(kSolid));
    EXPECT_LT((rotate_hooke(h, 0.0).K - h.K).norm(), 1e-14);
    EXPECT_LT((rotate_hooke(h, kPi).K - h.K).norm(), 1e-12 * h.K.norm());
    const double a = 0.37, b = 1.21;
    EXPECT_LT((rotate_hooke(rotate_hooke(h, a), b).K - rotate_hooke(h, a + b).K).norm(), 1e-12 * h.K.norm());
    const Eigen::Vector3d e0 = Eigen::SelfAdjointEigenSolver<Mat3>(h.K).eigenvalues();
    const Eigen::Vector3d e1 = Eigen::SelfAdjointEigenSolver<Mat3>(rotate_hooke(h, a).K).eigenvalues();
    EXPECT_LT((e0 - e1).norm(), 1e-12 * e0.norm());
}

TEST(Rotation, QuarterTurnMatchesSwappedHole) {
    const Hooke2D a = Hooke2D::isotropic(kSolid);
    const Hooke2D h = cell_hooke({0.7, 0.3, 32}, a);
    const Hooke2D swapped = cell_hooke({0.3, 0.7, 32}, a);
    const Mat3 r = rotate_hooke(h, kPi / 2).K;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) EXPECT_NEAR(r(i, j), swapped.K(i, j), 0.02 * swapped.K.norm());
}

TEST(MicroTable, CornersAndBounds) {
    const MicroTable &t = small_table();
    const Mat3 a = Hooke2D::isotropic(kSolid).K;
    EXPECT_LT(rel(t.values[t.index(0, 0)], a), 1e-12);
    EXPECT_LE(t.values[t.index(t.n_m - 1, t.n_m - 1)].norm(), 2e-3 * a.norm());
    std::mt19937 rng(8);
    std::normal_distribution<double> nd(0, 1);
    for (int i2 = 0; i2 < t.n_m; ++i2)
        for (int i1 = 0; i1 < t.n_m; ++i1) {
            const CellGeometry cell{t.sample(i1), t.sample(i2), t.resolution};
            const double vf = cell.void_fraction();
            const Mat3 arith = (1 - vf + vf * t.ersatz) * a;
            const Mat3 harm = (1.0 / (1 - vf + vf / t.ersatz)) * a;
            const Mat3 &k = t.values[t.index(i1, i2)];
            EXPECT_LE(std::abs(k(0, 2)), 1e-6 * k.norm() + 1e-14);
            EXPECT_LE(std::abs(k(1, 2)), 1e-6 * k.norm() + 1e-14);
            for (int trial = 0; trial < 10; ++trial) {
                const Vec3 v(nd(rng), nd(rng), nd(rng));
                EXPECT_LE(v.dot(harm * v), v.dot(k * v) + 1e-6 * a.norm() * v.squaredNorm());
                EXPECT_LE(v.dot(k * v), v.dot(arith * v) + 1e-6 * a.norm() * v.squaredNorm());
            }
        }
}

TEST(MicroTable, WeakerAsHoleWidens) {
    const MicroTable &t = small_table();
    for (int i1 = 0; i1 < t.n_m; ++i1)
        for (int i2 = 0; i2 + 1 < t.n_m; ++i2)
            for (int d = 0; d < 3; ++d)
                EXPECT_LE(t.values[t.index(i1, i2 + 1)](d, d), t.values[t.index(i1, i2)](d, d) + 1e-12)
                    << i1 << "," << i2 << "," << d;
}

TEST(MicroTable, GradientSignsAndSensitivity) {
    const MicroTable &t = small_table();
    double sum1 = 0, sum2 = 0;
    for (int i2 = 1; i2 + 1 < t.n_m; ++i2)
        for (int i1 = 1; i1 + 1 < t.n_m; ++i1) {
            EXPECT_LE(t.grad2[t.index(i1, i2)](0, 0), 1e-12);
            sum1 += std::abs(t.grad1[t.index(i1, i2)](0, 0));
            sum2 += std::abs(t.grad2[t.index(i1, i2)](0, 0));
        }
    EXPECT_GE(sum2, sum1);
}

TEST(MicroTable, LookupIsBilinear) {
    const MicroTable &t = small_table();
    const auto node = t.lookup(Vec2(t.sample(3), t.sample(5)));
    EXPECT_EQ(node.a.K, t.values[t.index(3, 5)]);
    const auto mid = t.lookup(Vec2(0.5 * (t.sample(2) + t.sample(3)), 0.5 * (t.sample(6) + t.sample(7))));
    const Mat3 avg = 0.25 * (t.values[t.index(2, 6)] + t.values[t.index(3, 6)] + t.values[t.index(2, 7)] +
                             t.values[t.index(3, 7)]);
    EXPECT_LT((mid.a.K - avg).norm(), 1e-14 * avg.norm());
    const long before = t.clamp_count();
    const auto clamped = t.lookup(Vec2(1.2, -0.1));
    EXPECT_EQ(t.clamp_count(), before + 1);
    EXPECT_EQ(clamped.a.K, t.values[t.index(t.n_m - 1, 0)]);
}

TEST(MicroTable, LookupMatchesDirectSolveOffGrid) {
    const MicroTable t = build_micro_table(kSolid, 17, 32);
    const Hooke2D a = Hooke2D::isotropic(kSolid);
    for (const Vec2 &m : {Vec2(0.3, 0.41), Vec2(0.55, 0.2), Vec2(0.72, 0.66)}) {
        const Hooke2D direct = cell_hooke({m(0), m(1), 32}, a);
        EXPECT_LT(rel(t.lookup(m).a.K, direct.K), 0.05) << m.transpose();
    }
}

TEST(MicroTable, CsvRoundTripIsBitExact) {
    const MicroTable &t = small_table();
    const auto path = (std::filesystem::temp_directory_path() / "homtopo_table.csv").string();
    t.save(path);
    const MicroTable r = MicroTable::load(path);
    EXPECT_EQ(r.n_m, t.n_m);
    EXPECT_EQ(r.resolution, t.resolution);
    EXPECT_EQ(r.base.lambda, t.base.lambda);
    for (size_t k = 0; k < t.values.size(); ++k) {
        EXPECT_EQ(r.values[k], t.values[k]);
        EXPECT_EQ(r.grad1[k], t.grad1[k]);
        EXPECT_EQ(r.grad2[k], t.grad2[k]);
    }
}
