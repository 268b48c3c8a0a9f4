#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "homtopo/opt/thickness.hpp"

using namespace homtopo;

namespace {

Mesh2D clamped_square(int n) {
    return make_mesh(n, n, 1.0, 1.0,
                     {{Side::Bottom, 0, 1, BoundaryTag::Dirichlet},
                      {Side::Right, 0, 1, BoundaryTag::Dirichlet},
                      {Side::Top, 0, 1, BoundaryTag::Dirichlet},
                      {Side::Left, 0, 1, BoundaryTag::Dirichlet}});
}

ThicknessProblem membrane(int n) {
    ThicknessProblem p;
    p.mesh = clamped_square(n);
    p.source = element_field(VecX::Ones(p.mesh.num_elements()));
    p.h_min = 0.1;
    p.h_max = 1.0;
    p.h0 = 0.5;
    return p;
}

ThicknessProblem plate(int nx, int ny) {
    ThicknessProblem p;
    p.model = ThicknessModel::Plate;
    p.plate = IsotropicModuli::from_young(1.0, 0.3);
    p.mesh = make_mesh(nx, ny, 2.0, 1.0,
                       {{Side::Left, 0, 1, BoundaryTag::Dirichlet},
                        {Side::Right, 0.4, 0.6, BoundaryTag::Neumann, Vec2(0, -1)}});
    p.h_min = 0.1;
    p.h_max = 1.0;
    p.h0 = 0.5;
    return p;
}

VecX hx_field(const Mesh2D &m) {
    VecX h(m.num_elements());
    for (int e = 0; e < m.num_elements(); ++e) h(e) = 1.0 + m.element_center(e)(0);
    return h;
}

// Dense solve of the reduced system with homogeneous Dirichlet data.
VecX dense_solve(const SparseSystem &sys, const VecX &rhs) {
    const int n = static_cast<int>(rhs.size());
    std::vector<char> fixed(n, 0);
    for (const auto &[d, v] : sys.constrained_dofs) fixed[d] = 1;
    std::vector<int> free;
    for (int i = 0; i < n; ++i)
        if (!fixed[i]) free.push_back(i);
    const MatX k = MatX(sys.matrix);
    MatX kr(free.size(), free.size());
    VecX br(free.size());
    for (size_t a = 0; a < free.size(); ++a) {
        br(a) = rhs(free[a]);
        for (size_t b = 0; b < free.size(); ++b) kr(a, b) = k(free[a], free[b]);
    }
    const VecX xr = kr.ldlt().solve(br);
    VecX x = VecX::Zero(n);
    for (size_t a = 0; a < free.size(); ++a) x(free[a]) = xr(a);
    return x;
}

double objective_at(const ThicknessProblem &p, const VecX &h) { return thickness_objective(p, solve_state(p, h)); }

void check_directional_derivatives(const ThicknessProblem &p, const VecX &h, unsigned seed) {
    const ThicknessState st = evaluate(p, h);
    const VecX g = thickness_gradient(p, st.u, st.p);
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> ud(-1, 1);
    const double t = 1e-4;
    for (int trial = 0; trial < 5; ++trial) {
        VecX k(h.size());
        for (auto &x : k) x = ud(rng);
        const double fd = (objective_at(p, h + t * k) - objective_at(p, h - t * k)) / (2 * t);
        const double an = g.dot(k) * p.mesh.element_area();
        EXPECT_NEAR(an, fd, 1e-4 * std::abs(fd)) << "trial " << trial;
    }
}

}  // namespace

TEST(State, UnitThicknessIsPlainPoisson) {
    const ThicknessProblem p = membrane(8);
    const VecX u = solve_state(p, VecX::Ones(p.mesh.num_elements()));
    const VecX ref = solve(assemble_scalar(p.mesh, VecX::Ones(p.mesh.num_elements()), p.source)).x;
    EXPECT_LT((u - ref).norm(), 1e-12 * ref.norm());
}

TEST(State, ScalingThicknessScalesSolution) {
    const ThicknessProblem p = membrane(8);
    const VecX h = hx_field(p.mesh);
    EXPECT_LT((solve_state(p, 3.0 * h) - solve_state(p, h) / 3.0).norm(), 1e-12 * solve_state(p, h).norm());
}

TEST(State, MatchesDenseOracle) {
    const ThicknessProblem p = membrane(32);
    const VecX h = hx_field(p.mesh);
    const SparseSystem sys = p.system(h);
    const VecX ref = dense_solve(sys, sys.rhs);
    EXPECT_LT((solve_state(p, h) - ref).norm(), 1e-10 * ref.norm());
}

TEST(Adjoint, ComplianceIsSelfAdjoint) {
    const ThicknessProblem p = membrane(12);
    const VecX h = hx_field(p.mesh);
    const VecX u = solve_state(p, h);
    EXPECT_LT((solve_adjoint(p, h, u) + u).norm(), 1e-10 * u.norm());
}

TEST(Adjoint, TargetEqualToStateGivesZero) {
    ThicknessProblem p = membrane(12);
    const VecX h = hx_field(p.mesh);
    p.objective = ThicknessObjective::TargetDisplacement;
    p.target = solve_state(p, h);
    const ThicknessState st = evaluate(p, h);
    EXPECT_LT(st.p.norm(), 1e-14);
    EXPECT_LT(thickness_gradient(p, st.u, st.p).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Adjoint, ZeroTargetMatchesDenseOracle) {
    ThicknessProblem p = membrane(16);
    p.objective = ThicknessObjective::TargetDisplacement;
    p.target = VecX::Zero(p.mesh.num_nodes());
    const VecX h = hx_field(p.mesh);
    const VecX u = solve_state(p, h);
    const VecX ref = dense_solve(p.system(h), -2.0 * (p.mass() * u));
    const VecX adj = solve_adjoint(p, h, u);
    EXPECT_LT((adj - ref).norm(), 1e-10 * ref.norm());
    EXPECT_LT((evaluate(p, h).p - ref).norm(), 1e-10 * ref.norm());
}

TEST(Gradient, ComplianceGradientIsMinusGradientSquared) {
    const ThicknessProblem p = membrane(16);
    const VecX h = hx_field(p.mesh);
    const ThicknessState st = evaluate(p, h);
    const VecX g = thickness_gradient(p, st.u, st.p);
    const auto mom = element_gradient_moments(p.mesh, st.u, st.u);
    for (int e = 0; e < p.mesh.num_elements(); ++e) {
        EXPECT_LE(g(e), 0.0);
        EXPECT_NEAR(g(e), -mom[e].trace() / p.mesh.element_area(), 1e-12 * std::abs(g(e)) + 1e-15);
    }
}

TEST(Gradient, MembraneComplianceMatchesFiniteDifferences) {
    const ThicknessProblem p = membrane(32);
    check_directional_derivatives(p, hx_field(p.mesh), 1);
}

TEST(Gradient, MembraneTargetMatchesFiniteDifferences) {
    ThicknessProblem p = membrane(32);
    p.objective = ThicknessObjective::TargetDisplacement;
    p.target = VecX::Constant(p.mesh.num_nodes(), 0.01);
    check_directional_derivatives(p, hx_field(p.mesh), 2);
}

TEST(Gradient, PlateComplianceMatchesFiniteDifferences) {
    const ThicknessProblem p = plate(32, 16);
    check_directional_derivatives(p, hx_field(p.mesh), 3);
}

TEST(Regularize, ZeroLengthIsIdentity) {
    const Mesh2D m = clamped_square(8);
    const VecX g = hx_field(m);
    EXPECT_EQ(regularize_gradient(m, g, 0.0), g);
    EXPECT_THROW(regularize_gradient(m, g, -1.0), InvalidArgument);
}

TEST(Regularize, ConstantIsPreserved) {
    const Mesh2D m = clamped_square(10);
    const VecX out = regularize_gradient(m, VecX::Constant(m.num_elements(), -2.5), 0.3);
    EXPECT_LT((out.array() + 2.5).abs().maxCoeff(), 1e-12);
}

TEST(Regularize, MeanIsPreserved) {
    const Mesh2D m = clamped_square(16);
    std::mt19937 rng(5);
    std::normal_distribution<double> nd(0, 1);
    VecX g(m.num_elements());
    for (auto &x : g) x = nd(rng);
    const VecX out = regularize_gradient(m, g, 0.1);
    EXPECT_NEAR(out.sum(), g.sum(), 1e-10 * g.cwiseAbs().sum());
}

TEST(Regularize, CheckerboardIsDamped) {
    const Mesh2D m = clamped_square(32);
    VecX g(m.num_elements());
    for (int j = 0; j < m.ny; ++j)
        for (int i = 0; i < m.nx; ++i) g(m.element_index(i, j)) = ((i + j) % 2) ? 1.0 : -1.0;
    const VecX out = regularize_gradient(m, g, 2.0 * m.hx());
    EXPECT_LE(out.squaredNorm() * 10.0, g.squaredNorm());
}

TEST(Projection, ShiftsConstantField) {
    const Mesh2D m = clamped_square(4);
    const auto r = project_Uad(m, VecX::Constant(16, 0.3), 0.1, 1.0, 0.5);
    EXPECT_NEAR(r.multiplier, 0.2, 1e-12);
    EXPECT_LT((r.h.array() - 0.5).abs().maxCoeff(), 1e-12);
}

TEST(Projection, FeasibleFieldIsUnchanged) {
    const Mesh2D m = make_mesh(2, 1, 2.0, 1.0);
    VecX h(2);
    h << 0.0, 1.0;
    const auto r = project_Uad(m, h, 0.0, 1.0, 0.5);
    EXPECT_EQ(r.multiplier, 0.0);
    EXPECT_EQ(r.h, h);
}

TEST(Projection, MeanBoundsAndIdempotence) {
    const Mesh2D m = clamped_square(16);
    std::mt19937 rng(6);
    std::normal_distribution<double> nd(0.5, 0.6);
    for (int trial = 0; trial < 10; ++trial) {
        VecX h(m.num_elements());
        for (auto &x : h) x = nd(rng);
        const auto r = project_Uad(m, h, 0.1, 1.0, 0.4);
        EXPECT_NEAR(active_mean(m, r.h), 0.4, 1e-10);
        EXPECT_GE(r.h.minCoeff(), 0.1);
        EXPECT_LE(r.h.maxCoeff(), 1.0);
        const auto again = project_Uad(m, r.h, 0.1, 1.0, 0.4);
        EXPECT_LT((again.h - r.h).cwiseAbs().maxCoeff(), 1e-12);
        double prev = -1;
        for (double l = -2; l <= 2; l += 0.05) {
            const double v = active_mean(m, VecX((h.array() + l).cwiseMax(0.1).cwiseMin(1.0)));
            EXPECT_GE(v, prev);
            prev = v;
        }
    }
}

TEST(Projection, InfeasibleTargetThrows) {
    const Mesh2D m = clamped_square(2);
    EXPECT_THROW(project_Uad(m, VecX::Ones(4), 0.1, 1.0, 1.5), InvalidArgument);
}

TEST(ProjectedGradient, SingleElementStartsAtOptimum) {
    ThicknessProblem p;
    p.mesh = make_mesh(1, 1, 1.0, 1.0, {{Side::Left, 0, 1, BoundaryTag::Dirichlet}});
    p.source = element_field(VecX::Ones(1));
    const auto r = projected_gradient_run(p, VecX::Constant(1, 0.5));
    ASSERT_EQ(r.history.size(), 1u);
    EXPECT_EQ(r.history.back().residual, 0.0);
    EXPECT_TRUE(r.converged);
}

TEST(ProjectedGradient, ComplianceDescendsAndSatisfiesKkt) {
    const ThicknessProblem p = membrane(32);
    ThicknessOptions opt;
    opt.iterations = 50;
    const auto r = projected_gradient_run(p, VecX::Constant(p.mesh.num_elements(), 0.5), opt);
    ASSERT_FALSE(r.aborted) << r.message;
    ASSERT_GE(r.history.size(), 2u);
    EXPECT_LE(r.history.max_increase(), 0.0);
    for (const auto &rec : r.history.records) EXPECT_NEAR(rec.volume, 0.5, 1e-10);

    opt.iterations = 2000;
    opt.tolerance = 1e-6;
    const auto fine = projected_gradient_run(p, VecX::Constant(p.mesh.num_elements(), 0.5), opt);
    EXPECT_TRUE(fine.converged) << fine.history.size();
    const ThicknessState st = evaluate(p, fine.h);
    const VecX g = thickness_gradient(p, st.u, st.p);
    const double gmax = g.cwiseAbs().maxCoeff();
    double worst = 0.0;
    for (int e = 0; e < p.mesh.num_elements(); ++e)
        if (fine.h(e) > p.h_min + 1e-9 && fine.h(e) < p.h_max - 1e-9)
            worst = std::max(worst, std::abs(g(e) + fine.multiplier));
    EXPECT_LE(worst, 1e-3 * gmax);
}

TEST(ProjectedGradient, PlateTargetDescends) {
    ThicknessProblem p = plate(16, 8);
    p.objective = ThicknessObjective::TargetDisplacement;
    p.target = VecX::Zero(2 * p.mesh.num_nodes());
    ThicknessOptions opt;
    opt.iterations = 20;
    opt.regularization = 0.1;
    const auto r = projected_gradient_run(p, VecX::Constant(p.mesh.num_elements(), 0.5), opt);
    ASSERT_FALSE(r.aborted) << r.message;
    EXPECT_LE(r.history.max_increase(), 0.0);
    EXPECT_LT(r.history.back().J, r.history.records.front().J);
}

TEST(OptimalityCriteria, MembraneMonotoneAndFeasible) {
    const ThicknessProblem p = membrane(32);
    ThicknessOptions opt;
    opt.iterations = 30;
    const auto r = optimality_criteria_run(p, VecX::Constant(p.mesh.num_elements(), 0.5), opt);
    EXPECT_LE(r.history.max_increase(), 1e-10);
    for (const auto &rec : r.history.records) EXPECT_NEAR(rec.volume, 0.5, 1e-10);
    EXPECT_GE(r.h.minCoeff(), p.h_min);
    EXPECT_LE(r.h.maxCoeff(), p.h_max);
}

TEST(OptimalityCriteria, ThicknessFollowsStressRanking) {
    ThicknessProblem p;
    p.mesh = make_mesh(40, 4, 1.0, 0.1, {{Side::Left, 0, 0.1, BoundaryTag::Dirichlet}});
    p.source = element_field(VecX::Ones(p.mesh.num_elements()));
    p.h_min = 0.01;
    p.h_max = 10.0;
    p.h0 = 1.0;
    const VecX h = VecX::Ones(p.mesh.num_elements());
    const VecX u = solve_state(p, h);
    const VecX tau2 = thickness_gradient(p, u, u);
    const VecX next = oc_thickness_update(p.mesh, tau2 * p.mesh.element_area(), p.h_min, p.h_max, p.h0).h;
    auto ranks = [](const VecX &v) {
        std::vector<int> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v(a) < v(b); });
        VecX r(v.size());
        for (size_t k = 0; k < idx.size(); ++k) r(idx[k]) = static_cast<double>(k);
        return r;
    };
    const VecX ra = ranks(tau2), rb = ranks(next);
    const double n = static_cast<double>(ra.size());
    const double rho = 1.0 - 6.0 * (ra - rb).squaredNorm() / (n * (n * n - 1));
    EXPECT_GE(rho, 0.99);
    EXPECT_GT(next(p.mesh.element_index(0, 0)), next(p.mesh.element_index(39, 0)));
}

TEST(OptimalityCriteria, FullVolumeGivesMaximalThickness) {
    ThicknessProblem p = membrane(8);
    p.h0 = p.h_max;
    ThicknessOptions opt;
    opt.iterations = 3;
    const auto r = optimality_criteria_run(p, VecX::Constant(64, 0.3), opt);
    EXPECT_LT((r.h.array() - p.h_max).abs().maxCoeff(), 1e-12);
}

TEST(OptimalityCriteria, PlateMonotone) {
    const ThicknessProblem p = plate(32, 16);
    ThicknessOptions opt;
    opt.iterations = 30;
    const auto r = optimality_criteria_run(p, VecX::Constant(p.mesh.num_elements(), 0.5), opt);
    EXPECT_LE(r.history.max_increase(), 1e-10);
    EXPECT_LT(r.history.back().J, 0.8 * r.history.records.front().J);
}

TEST(OptimalityCriteria, MissingLoadThrows) {
    ThicknessProblem p = membrane(4);
    p.source = {};
    EXPECT_THROW(optimality_criteria_run(p, VecX::Constant(16, 0.5)), NumericalError);
}

TEST(OptimalityCriteria, RejectsTargetObjective) {
    ThicknessProblem p = membrane(4);
    p.objective = ThicknessObjective::TargetDisplacement;
    p.target = VecX::Zero(p.mesh.num_nodes());
    EXPECT_THROW(optimality_criteria_run(p, VecX::Constant(16, 0.5)), InvalidArgument);
}
