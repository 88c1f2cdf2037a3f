#include <gtest/gtest.h>

#include <numbers>

#include "freespec/rng.hpp"
#include "freespec/stieltjes.hpp"

using namespace freespec;

namespace {

HermMatrix random_hermitian(Eigen::Index n, GaussianStream& rng, double scale = 1.0) {
    CMatrix m(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) m(i, j) = scale * Complex(rng.normal(), rng.normal());
    return HermMatrix(m);
}

// Closed-form Stieltjes transform of the semicircle law of radius 2, branch
// with g ~ 1/lambda at infinity (Im g < 0 on the upper half-plane).
Complex semicircle_transform(Complex lambda) {
    const Complex s = std::sqrt(lambda * lambda - 4.0);
    const Complex g1 = 0.5 * (lambda - s);
    const Complex g2 = 0.5 * (lambda + s);
    return std::abs(g1) <= std::abs(g2) ? g1 : g2;
}

}  // namespace

TEST(EvalGT, NoDeterministicPartIsInverse) {
    GaussianStream rng(1, 0);
    const TransformEvaluator GT(DeterministicModel::none(), {}, 3);
    const CMatrix gamma = random_hermitian(3, rng).mat() + Complex(0, 1.5) * identity(3);
    const CMatrix got = GT.eval(gamma);
    EXPECT_LE((gamma * got - identity(3)).norm(), 1e-12);
}

TEST(EvalGT, ConstantQuantileTable) {
    const double c = 0.75;
    const auto model = DeterministicModel::quantile({QuantileTable::constant(c)});
    const TransformEvaluator GT(model, {HermMatrix::identity(1)}, 1);
    CMatrix gamma(1, 1);
    gamma(0, 0) = Complex(0.3, 2.0);
    const Complex got = GT.eval(gamma)(0, 0);
    EXPECT_LE(std::abs(got - 1.0 / (gamma(0, 0) - c)), 1e-14);
}

TEST(EvalGT, TwoAtomEmpiricalByHand) {
    CMatrix y = CMatrix::Zero(2, 2);
    y(0, 0) = -1.0;
    y(1, 1) = 1.0;
    const auto model = DeterministicModel::empirical({HermMatrix(y)});
    const TransformEvaluator GT(model, {HermMatrix::identity(1)}, 1);
    CMatrix gamma(1, 1);
    gamma(0, 0) = Complex(0, 1);
    const Complex got = GT.eval(gamma)(0, 0);
    const Complex want = 0.5 * (1.0 / (Complex(0, 1) + 1.0) + 1.0 / (Complex(0, 1) - 1.0));
    EXPECT_LE(std::abs(got - want), 1e-14);
    EXPECT_LE(std::abs(got - Complex(0, -0.5)), 1e-14);
}

TEST(EvalGT, RejectsLowerHalfPlane) {
    const TransformEvaluator GT(DeterministicModel::none(), {}, 2);
    EXPECT_THROW(GT.eval(CMatrix(identity(2))), SolverError);
    EXPECT_THROW(GT.eval(CMatrix(Complex(0, -1) * identity(2))), SolverError);
}

TEST(EvalGT, HalfPlaneMappingAndNormBound) {
    // 1000 randomized cases across all three modes: output strictly in the
    // lower half-plane and bounded by ||(Im Gamma)^{-1}||.
    GaussianStream rng(42, 0);
    for (int rep = 0; rep < 1000; ++rep) {
        const int k = 1 + int(rng.uniform() * 3);
        const int q = int(rng.uniform() * 3);
        std::vector<HermMatrix> b;
        for (int j = 0; j < q; ++j) b.push_back(random_hermitian(k, rng));

        DeterministicModel model;
        const double pick = rng.uniform();
        if (q == 0 || pick < 0.25) {
            b.clear();
            model = DeterministicModel::none();
        } else if (pick < 0.6) {
            std::vector<QuantileTable> tables;
            for (int j = 0; j < q; ++j)
                tables.push_back(QuantileTable::atoms({-1.0 - rng.uniform(), rng.uniform()}, {0.4, 0.6}));
            model = DeterministicModel::quantile(tables, {}, 64);
        } else {
            std::vector<HermMatrix> ys;
            for (int j = 0; j < q; ++j) ys.push_back(random_hermitian(4, rng));
            model = DeterministicModel::empirical(ys);
        }
        const TransformEvaluator GT(model, b, k);
        const CMatrix gamma =
            random_hermitian(k, rng).mat() + Complex(0, 0.2 + 2.0 * rng.uniform()) * identity(k);
        const CMatrix g = GT.eval(gamma);
        EXPECT_LT(herm_eigenvalues(imag_part(g)).maxCoeff(), 0.0);
        EXPECT_LE(op_norm(g), inv_imag_norm(gamma) * (1.0 + 1e-9));
    }
}

TEST(EvalGT, ScalarConjugationSymmetry) {
    // k = 1 real measure: g(conj lambda) = conj(g(lambda)); the lower
    // half-plane value is computed by a test-side sum.
    GaussianStream rng(4, 4);
    std::vector<double> diag;
    for (int i = 0; i < 7; ++i) diag.push_back(-2.0 + 4.0 * rng.uniform());
    std::sort(diag.begin(), diag.end());
    const auto model = DeterministicModel::quantile({QuantileTable::from_sorted_values(diag)}, {}, 7);
    const TransformEvaluator GT(model, {HermMatrix::identity(1)}, 1);
    const Complex lambda(0.37, 0.9);
    CMatrix gamma(1, 1);
    gamma(0, 0) = lambda;
    const Complex g = GT.eval(gamma)(0, 0);
    Complex oracle(0.0);
    for (double d : diag) oracle += 1.0 / (std::conj(lambda) - d) / double(diag.size());
    EXPECT_LE(std::abs(std::conj(g) - oracle), 1e-13);
}

TEST(EvalGT, QuantileMatchesAlignedEmpirical) {
    // Sorted diagonal empirical model vs the step-table quantile model built
    // from the same empirical cdf: identical when m = N and nodes align.
    GaussianStream rng(6, 0);
    const int n = 16;
    std::vector<double> vals;
    for (int i = 0; i < n; ++i) vals.push_back(-3.0 + 6.0 * rng.uniform());
    std::sort(vals.begin(), vals.end());
    RVector d(n);
    for (int i = 0; i < n; ++i) d(i) = vals[i];

    const auto empirical = DeterministicModel::empirical({HermMatrix::diagonal(d)});
    const auto quant = DeterministicModel::quantile({QuantileTable::from_sorted_values(vals)}, {}, n);
    const std::vector<HermMatrix> b = {random_hermitian(2, rng)};
    const TransformEvaluator GTe(empirical, b, 2);
    const TransformEvaluator GTq(quant, b, 2);
    const CMatrix gamma = random_hermitian(2, rng).mat() + Complex(0, 1.1) * identity(2);
    EXPECT_LE((GTe.eval(gamma) - GTq.eval(gamma)).norm(), 1e-8);
}

TEST(InvertDensity, Examples) {
    // point mass at 0 seen from i: g = -i, density 1/pi
    const auto rho = invert_density({Complex(0, -1)});
    EXPECT_NEAR(rho[0], 1.0 / std::numbers::pi, 1e-14);

    // purely real g -> zero density
    const auto zero = invert_density({Complex(0.3, 0)});
    EXPECT_EQ(zero[0], 0.0);

    // semicircle at t = 0, small eta: -> 1/pi
    const Complex g = semicircle_transform(Complex(0, 1e-6));
    const auto r = invert_density({g});
    EXPECT_NEAR(r[0], 1.0 / std::numbers::pi, 1e-5);
}

TEST(InvertDensity, ClampsAndReportsPreclampMin) {
    double pre = 0.0;
    const auto rho = invert_density({Complex(0, 0.5), Complex(0, -0.5)}, &pre);
    EXPECT_EQ(rho[0], 0.0);
    EXPECT_NEAR(pre, -0.5 / std::numbers::pi, 1e-15);
    EXPECT_NEAR(rho[1], 0.5 / std::numbers::pi, 1e-15);
}

TEST(DetectSupport, SemicircleFromClosedForm) {
    GridSpec grid;
    grid.t_min = -2.5;
    grid.t_max = 2.5;
    grid.step = 0.005;
    grid.eta = 1e-3;
    const auto ts = grid.points();
    std::vector<Complex> g;
    g.reserve(ts.size());
    for (double t : ts) g.push_back(semicircle_transform(Complex(t, grid.eta)));
    const auto rho = invert_density(g);
    const auto support = detect_support(ts, rho, 5e-3);
    ASSERT_EQ(support.size(), 1u);
    EXPECT_NEAR(support[0].first, -2.0, 0.05);
    EXPECT_NEAR(support[0].second, 2.0, 0.05);
    EXPECT_NEAR(norm_estimate(support), 2.0, 0.05);
}

TEST(DetectSupport, VarianceTwoSemicircleFromClosedForm) {
    // Free sum of two standard semicirculars = semicircle of variance 2,
    // support [-2 sqrt 2, 2 sqrt 2]; transform g = (l - sqrt(l^2 - 8)) / 4.
    GridSpec grid;
    grid.t_min = -3.2;
    grid.t_max = 3.2;
    grid.step = 0.005;
    grid.eta = 1e-3;
    const auto ts = grid.points();
    std::vector<Complex> g;
    for (double t : ts) {
        const Complex lam(t, grid.eta);
        const Complex s = std::sqrt(lam * lam - 8.0);
        const Complex g1 = (lam - s) / 4.0, g2 = (lam + s) / 4.0;
        g.push_back(std::abs(g1) <= std::abs(g2) ? g1 : g2);
    }
    const auto rho = invert_density(g);
    const auto support = detect_support(ts, rho, 5e-3);
    ASSERT_EQ(support.size(), 1u);
    const double edge = 2.0 * std::sqrt(2.0);
    EXPECT_NEAR(support[0].first, -edge, 0.05);
    EXPECT_NEAR(support[0].second, edge, 0.05);
    EXPECT_NEAR(norm_estimate(support), edge, 0.05);
}

TEST(DetectSupport, SmoothedAtomAndThresholdFailure) {
    // single atom at 0.3 smoothed at eta: one interval containing the atom
    GridSpec grid;
    grid.t_min = -1.0;
    grid.t_max = 1.5;
    grid.step = 0.005;
    grid.eta = 1e-3;
    const auto ts = grid.points();
    std::vector<Complex> g;
    for (double t : ts) g.push_back(1.0 / (Complex(t, grid.eta) - 0.3));
    const auto rho = invert_density(g);
    const auto support = detect_support(ts, rho, 5e-3);
    ASSERT_GE(support.size(), 1u);
    EXPECT_LE(support[0].first, 0.3);
    EXPECT_GE(support.back().second, 0.3);

    // all density below threshold -> diagnostic failure
    std::vector<double> flat(ts.size(), 1e-7);
    EXPECT_THROW(detect_support(ts, flat, 5e-3), SolverError);
}

TEST(DetectSupport, MergesOnePointGaps) {
    const std::vector<double> grid = {0, 1, 2, 3, 4, 5, 6};
    const std::vector<double> rho = {0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0};
    const auto support = detect_support(grid, rho, 0.5);
    ASSERT_EQ(support.size(), 1u);
}

TEST(NormEstimate, Trivials) {
    EXPECT_EQ(norm_estimate({{-2.0, 2.0}}), 2.0);
    EXPECT_EQ(norm_estimate({{0.0, 4.0}}), 4.0);
    EXPECT_EQ(norm_estimate({{-5.0, -1.0}, {0.5, 2.0}}), 5.0);
}

TEST(MassNormalization, InverseSquareRate) {
    // |iy g(iy) - 1| <= C / y^2 with C fitted at y = 10 and checked at y = 100.
    auto defect = [](double y) {
        const Complex g = semicircle_transform(Complex(0, y));
        return std::abs(Complex(0, y) * g - 1.0);
    };
    const double c_fit = defect(10.0) * 100.0;
    EXPECT_LE(defect(100.0), 1.5 * c_fit / (100.0 * 100.0));
}

TEST(QuantileTable, SemicircleInverseCdf) {
    const auto t = QuantileTable::semicircle(2.0);
    EXPECT_NEAR(t(0.5), 0.0, 1e-9);
    // F(1) = 1/2 + sqrt(3)/(4 pi) + asin(1/2)/pi
    const double f1 = 0.5 + std::sqrt(3.0) / (4.0 * std::numbers::pi) + std::asin(0.5) / std::numbers::pi;
    EXPECT_NEAR(t(f1), 1.0, 1e-8);
    // periodic extension
    EXPECT_NEAR(t(1.25), t(0.25), 1e-12);
}
