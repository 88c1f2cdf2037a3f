#include <gtest/gtest.h>

#include <numbers>

#include "freespec/rng.hpp"
#include "freespec/subordination.hpp"

using namespace freespec;

namespace {

HermMatrix random_hermitian(Eigen::Index n, GaussianStream& rng, double scale = 1.0) {
    CMatrix m(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) m(i, j) = scale * Complex(rng.normal(), rng.normal());
    return HermMatrix(m);
}

Complex semicircle_transform(Complex lambda) {
    const Complex s = std::sqrt(lambda * lambda - 4.0);
    const Complex g1 = 0.5 * (lambda - s);
    const Complex g2 = 0.5 * (lambda + s);
    return std::abs(g1) <= std::abs(g2) ? g1 : g2;
}

Pencil scalar_gue_pencil(int p) {
    Pencil L;
    L.k = 1;
    L.a0 = HermMatrix::zero(1);
    for (int j = 0; j < p; ++j) L.a.push_back(HermMatrix::identity(1));
    return L;
}

}  // namespace

TEST(SolvePoint, NoGuePartIsOneStep) {
    GaussianStream rng(3, 0);
    const auto model = DeterministicModel::quantile({QuantileTable::uniform(-1.0, 1.0)}, {}, 256);
    const std::vector<HermMatrix> b = {random_hermitian(2, rng)};
    const TransformEvaluator GT(model, b, 2);
    const HermMatrix a0 = random_hermitian(2, rng, 0.3);
    const CMatrix lam = Complex(0, 2) * identity(2);
    FixedPointConfig cfg;
    const auto sol = solve_point(GT, a0, {}, lam, cfg);
    EXPECT_TRUE(sol.converged);
    EXPECT_EQ(sol.iterations, 1);
    EXPECT_LE((sol.G - GT.eval(CMatrix(lam - a0.mat()))).norm(), 1e-14);
}

TEST(SolvePoint, SemicircleQuadraticOracle) {
    // k=1, p=1, q=0, Lambda=2i: fixed point of G = 1/(2i - G) is i(1 - sqrt 2).
    const TransformEvaluator GT(DeterministicModel::none(), {}, 1);
    const Pencil L = scalar_gue_pencil(1);
    FixedPointConfig cfg;
    const auto sol = solve_point(GT, L.a0, L.a, CMatrix(Complex(0, 2) * identity(1)), cfg);
    EXPECT_TRUE(sol.converged);
    EXPECT_TRUE(sol.in_contraction_domain);
    const Complex want(0.0, 1.0 - std::sqrt(2.0));
    EXPECT_LE(std::abs(sol.G(0, 0) - want), 1e-11);
    EXPECT_NEAR(sol.G(0, 0).imag(), -0.41421356, 1e-7);
}

TEST(SolvePoint, VarianceTwoOracle) {
    // p=2 with unit coefficients: G = 1/(iy - 2G), i.e. the variance-2
    // semicircle transform (lambda - sqrt(lambda^2 - 8)) / 4 at lambda = 3i.
    const TransformEvaluator GT(DeterministicModel::none(), {}, 1);
    const Pencil L = scalar_gue_pencil(2);
    FixedPointConfig cfg;
    const Complex lam(0, 3);
    const auto sol = solve_point(GT, L.a0, L.a, CMatrix(lam * identity(1)), cfg);
    EXPECT_TRUE(sol.converged);
    const Complex s = std::sqrt(lam * lam - 8.0);
    const Complex w1 = (lam - s) / 4.0, w2 = (lam + s) / 4.0;
    const Complex want = std::abs(w1) <= std::abs(w2) ? w1 : w2;
    EXPECT_LE(std::abs(sol.G(0, 0) - want), 1e-11);
}

TEST(SolvePoint, ScalarQuadraticIdentity) {
    // G^2 - Lambda G + 1 = 0 for the scalar semicircle fixed point.
    const TransformEvaluator GT(DeterministicModel::none(), {}, 1);
    const Pencil L = scalar_gue_pencil(1);
    FixedPointConfig cfg;
    GaussianStream rng(8, 0);
    for (int rep = 0; rep < 25; ++rep) {
        const Complex lam(4.0 * rng.uniform() - 2.0, 0.3 + 2.0 * rng.uniform());
        const auto sol = solve_point(GT, L.a0, L.a, CMatrix(lam * identity(1)), cfg);
        ASSERT_TRUE(sol.converged);
        const Complex g = sol.G(0, 0);
        EXPECT_LE(std::abs(g * g - lam * g + 1.0), 1e-10);
    }
}

TEST(SolvePoint, UniquenessUnderDifferentStarts) {
    GaussianStream rng(12, 0);
    const auto model = DeterministicModel::quantile({QuantileTable::bernoulli_pm1()}, {}, 64);
    const std::vector<HermMatrix> b = {random_hermitian(3, rng)};
    const TransformEvaluator GT(model, b, 3);
    Pencil L;
    L.k = 3;
    L.a0 = HermMatrix::zero(3);
    L.a = {random_hermitian(3, rng, 0.4)};
    FixedPointConfig cfg;
    const CMatrix lam = random_hermitian(3, rng, 0.2).mat() + Complex(0, 4) * identity(3);

    const auto sol1 = solve_point(GT, L.a0, L.a, lam, cfg);
    const CMatrix other_start = Complex(0, -0.05) * identity(3);
    const auto sol2 = solve_point(GT, L.a0, L.a, lam, cfg, other_start);
    ASSERT_TRUE(sol1.converged);
    ASSERT_TRUE(sol2.converged);
    EXPECT_LE(op_norm(CMatrix(sol1.G - sol2.G)), 10.0 * cfg.tol);
}

TEST(SolvePoint, DomainPreservation) {
    // Im(Lambda - a0 - R_s(G)) > 0 and its inverse norm bounded by
    // ||(Im Lambda)^{-1}|| at the solution, across random models.
    GaussianStream rng(13, 0);
    for (int rep = 0; rep < 50; ++rep) {
        const int k = 1 + int(rng.uniform() * 2);
        const auto model = DeterministicModel::quantile({QuantileTable::uniform(-1, 1)}, {}, 32);
        const std::vector<HermMatrix> b = {random_hermitian(k, rng)};
        const TransformEvaluator GT(model, b, k);
        Pencil L;
        L.k = k;
        L.a0 = random_hermitian(k, rng, 0.2);
        L.a = {random_hermitian(k, rng, 0.5)};
        FixedPointConfig cfg;
        const CMatrix lam =
            random_hermitian(k, rng, 0.3).mat() + Complex(0, 1.0 + 3.0 * rng.uniform()) * identity(k);
        const auto sol = solve_point(GT, L.a0, L.a, lam, cfg);
        ASSERT_TRUE(sol.converged);
        const CMatrix interior = lam - L.a0.mat() - semicircular_rmap(L.a, sol.G);
        EXPECT_TRUE(in_upper_half(interior));
        EXPECT_LE(inv_imag_norm(interior), inv_imag_norm(lam) * (1.0 + 1e-9));
    }
}

TEST(SolveGrid, SemicircleDensity) {
    const TransformEvaluator GT(DeterministicModel::none(), {}, 1);
    Pencil L = scalar_gue_pencil(1);
    LinearizationCertificate cert;
    cert.pencil = L;
    GridSpec grid;
    grid.t_min = -2.5;
    grid.t_max = 2.5;
    grid.step = 0.01;
    grid.eta = 1e-3;
    FixedPointConfig cfg;
    const auto rep = solve_grid(GT, L, cert, grid, cfg, DeterministicModel::none(), 2);

    EXPECT_EQ(rep.diagnostics.unconverged_points, 0);
    double sup_err = 0.0;
    for (size_t i = 0; i < rep.grid.size(); ++i) {
        const double t = rep.grid[i];
        const double want =
            std::abs(t) <= 2.0 ? std::sqrt(4.0 - t * t) / (2.0 * std::numbers::pi) : 0.0;
        sup_err = std::max(sup_err, std::abs(rep.density[i] - want));
    }
    EXPECT_LE(sup_err, 2e-2);
    ASSERT_EQ(rep.support.size(), 1u);
    EXPECT_NEAR(rep.support[0].first, -2.0, 0.05);
    EXPECT_NEAR(rep.support[0].second, 2.0, 0.05);
    const size_t mid = rep.grid.size() / 2;
    EXPECT_NEAR(rep.grid[mid], 0.0, 1e-9);
    EXPECT_NEAR(rep.density[mid], 1.0 / std::numbers::pi, 0.01);
    EXPECT_NEAR(rep.diagnostics.mass, 1.0, 2e-2);
}

TEST(SolveGrid, TwoSmoothedAtoms) {
    // p=0, q=1, empirical Y = diag(+-1) balanced, b=1: two atoms at +-1.
    RVector d(4);
    d << -1, -1, 1, 1;
    const auto model = DeterministicModel::empirical({HermMatrix::diagonal(d)});
    const TransformEvaluator GT(model, {HermMatrix::identity(1)}, 1);
    Pencil L;
    L.k = 1;
    L.a0 = HermMatrix::zero(1);
    L.b = {HermMatrix::identity(1)};
    LinearizationCertificate cert;
    cert.pencil = L;
    GridSpec grid;
    grid.t_min = -2.0;
    grid.t_max = 2.0;
    grid.step = 0.005;
    grid.eta = 5e-3;
    FixedPointConfig cfg;
    const auto rep = solve_grid(GT, L, cert, grid, cfg, model, 2, 1.0);
    ASSERT_EQ(rep.support.size(), 2u);
    EXPECT_NEAR(0.5 * (rep.support[0].first + rep.support[0].second), -1.0, 0.02);
    EXPECT_NEAR(0.5 * (rep.support[1].first + rep.support[1].second), 1.0, 0.02);
}

TEST(SolveGrid, MonotoneMassDecay) {
    // iy g(iy) -> 1 at rate 1/y^2 for the solved transform.
    const TransformEvaluator GT(DeterministicModel::none(), {}, 1);
    const Pencil L = scalar_gue_pencil(1);
    FixedPointConfig cfg;
    auto defect = [&](double y) {
        const auto sol = solve_point(GT, L.a0, L.a, CMatrix(Complex(0, y) * identity(1)), cfg);
        return std::abs(Complex(0, y) * sol.G(0, 0) - 1.0);
    };
    const double c_fit = defect(10.0) * 100.0;
    EXPECT_LE(defect(100.0), 1.5 * c_fit / 1e4);
}

TEST(ThetaResidual, ExactFixedPointGivesZero) {
    const TransformEvaluator GT(DeterministicModel::none(), {}, 1);
    const Pencil L = scalar_gue_pencil(1);
    FixedPointConfig cfg;
    const CMatrix lam = Complex(0, 2) * identity(1);
    const auto sol = solve_point(GT, L.a0, L.a, lam, cfg);
    const auto th = theta_residual(sol.G, GT, L.a0, L.a, lam);
    EXPECT_LE(th.norm, 10.0 * cfg.tol);
}

TEST(ThetaResidual, FirstOrderInPerturbation) {
    const TransformEvaluator GT(DeterministicModel::none(), {}, 1);
    const Pencil L = scalar_gue_pencil(1);
    FixedPointConfig cfg;
    const CMatrix lam = Complex(0, 2) * identity(1);
    const auto sol = solve_point(GT, L.a0, L.a, lam, cfg);
    CMatrix dir(1, 1);
    dir(0, 0) = Complex(0.6, -0.8);

    const double d1 = 1e-4, d2 = 1e-5;
    const auto t1 = theta_residual(CMatrix(sol.G + d1 * dir), GT, L.a0, L.a, lam);
    const auto t2 = theta_residual(CMatrix(sol.G + d2 * dir), GT, L.a0, L.a, lam);
    const double r1 = t1.norm / d1, r2 = t2.norm / d2;
    EXPECT_NEAR(r1, r2, 0.02 * std::max(r1, r2));
    EXPECT_GT(r2, 0.0);
}

TEST(ThetaResidual, RejectsEstimateOutsideLowerHalfPlane) {
    const TransformEvaluator GT(DeterministicModel::none(), {}, 1);
    const Pencil L = scalar_gue_pencil(1);
    const CMatrix lam = Complex(0, 0.5) * identity(1);
    CMatrix bad(1, 1);
    bad(0, 0) = Complex(0, 2.0);  // Im > Im Lambda: interior leaves the half-plane
    EXPECT_THROW(theta_residual(bad, GT, L.a0, L.a, lam), SolverError);
}

TEST(StabilityBound, FormulaAndGuard) {
    const std::vector<HermMatrix> a = {HermMatrix::identity(1)};  // sum ||a||^2 = 1
    const CMatrix lam = Complex(0, 1) * identity(1);              // ||(Im)^{-1}|| = 1

    const auto ok = stability_bound(1e-4, lam, a, 0.5);
    EXPECT_TRUE(ok.available);
    EXPECT_NEAR(ok.bound, 3e-4, 1e-12);

    EXPECT_EQ(stability_bound(0.0, lam, a, 0.5).bound, 0.0);

    const auto blocked = stability_bound(0.6, lam, a, 0.5);  // kappa = 0.6 >= 1 - eps
    EXPECT_FALSE(blocked.available);
}

TEST(SolvePoint, ContractionDomainFlag) {
    const TransformEvaluator GT(DeterministicModel::none(), {}, 1);
    const Pencil L = scalar_gue_pencil(1);
    FixedPointConfig cfg;
    const auto deep = solve_point(GT, L.a0, L.a, CMatrix(Complex(0, 5) * identity(1)), cfg);
    EXPECT_TRUE(deep.in_contraction_domain);
    const auto shallow = solve_point(GT, L.a0, L.a, CMatrix(Complex(0, 0.5) * identity(1)), cfg);
    EXPECT_FALSE(shallow.in_contraction_domain);
}
