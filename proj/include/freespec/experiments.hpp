#pragma once

// Monte-Carlo verification harness: spectrum inclusion against the predicted
// support, eigenvalue histograms vs predicted densities, decay regressions
// for the subordination defect and the scalar transform difference, and the
// mean Schwinger-Dyson residual.
//
// Estimators are unbiased averages of exact per-sample quantities; trials run
// in parallel into indexed slots and are reduced by pairwise summation, so
// results are identical for any thread count.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "freespec/ensembles.hpp"
#include "freespec/pencil.hpp"
#include "freespec/subordination.hpp"
#include "freespec/util.hpp"

namespace freespec {

namespace detail {

template <class T>
T pairwise_sum(const std::vector<T>& xs, size_t lo, size_t hi) {
    if (hi - lo == 1) return xs[lo];
    const size_t mid = lo + (hi - lo) / 2;
    return pairwise_sum(xs, lo, mid) + pairwise_sum(xs, mid, hi);
}

template <class T>
T pairwise_mean(const std::vector<T>& xs) {
    return pairwise_sum(xs, 0, xs.size()) * (1.0 / double(xs.size()));
}

inline CMatrix pairwise_mean_mat(const std::vector<CMatrix>& xs) {
    std::function<CMatrix(size_t, size_t)> rec = [&](size_t lo, size_t hi) -> CMatrix {
        if (hi - lo == 1) return xs[lo];
        const size_t mid = lo + (hi - lo) / 2;
        return rec(lo, mid) + rec(mid, hi);
    };
    return rec(0, xs.size()) / double(xs.size());
}

inline std::uint64_t trial_seed(std::uint64_t seed, int n) {
    return mix64(seed ^ (0x7f4a7c15ULL + std::uint64_t(n) * 0x9e3779b97f4a7c15ULL));
}

// Per-trial sampled family for a pencil: fresh GUE X's, fixed deterministic Y.
inline std::vector<HermMatrix> sample_gue_family(int p, Eigen::Index n, std::uint64_t seed,
                                                 std::uint64_t trial) {
    std::vector<HermMatrix> X;
    GaussianStream rng(seed, trial);
    for (int j = 0; j < p; ++j) X.push_back(sample_gue(n, rng));
    return X;
}

inline double slope_fit(const std::vector<double>& logx, const std::vector<double>& logy,
                        double* intercept = nullptr) {
    const size_t n = logx.size();
    double mx = 0, my = 0;
    for (size_t i = 0; i < n; ++i) {
        mx += logx[i];
        my += logy[i];
    }
    mx /= double(n);
    my /= double(n);
    double sxx = 0, sxy = 0;
    for (size_t i = 0; i < n; ++i) {
        sxx += (logx[i] - mx) * (logx[i] - mx);
        sxy += (logx[i] - mx) * (logy[i] - my);
    }
    const double slope = sxy / sxx;
    if (intercept) *intercept = my - slope * mx;
    return slope;
}

}  // namespace detail

// --- Spectrum inclusion -----------------------------------------------------

struct InclusionResult {
    int trials = 0;
    int violating_trials = 0;
    double worst_excess = 0.0;  // max distance of an eigenvalue outside supp+(-eps,eps)
    bool pass = false;
};

// Fraction of trials in which every eigenvalue of P(X_N, Y_N) lies inside the
// predicted support fattened by eps; pass requires that fraction to be one.
inline InclusionResult spectrum_inclusion(const NCPolynomial& P, const DeterministicModel& model,
                                          const std::vector<SupportInterval>& support, Eigen::Index N,
                                          int trials, double eps, std::uint64_t seed, int threads = 1) {
    if (support.empty()) throw ConfigError("spectrum_inclusion: missing predicted support");
    const NCPolynomial canon = P.assuming_hermitian_y();
    const int p = canon.required_x();
    const std::vector<HermMatrix> Yh = realize_model(model, N);
    std::vector<CMatrix> Y;
    for (const auto& y : Yh) Y.push_back(y.mat());

    std::vector<double> excess(trials, 0.0);
    parallel_for(trials, threads, [&](int t) {
        const auto X = detail::sample_gue_family(p, N, seed, std::uint64_t(t));
        const HermMatrix h(canon.evaluate(X, Y, N));
        const RVector ev = herm_eigenvalues(h);
        double worst = 0.0;
        for (Eigen::Index i = 0; i < ev.size(); ++i) {
            double dist = std::numeric_limits<double>::infinity();
            for (const auto& [a, b] : support) {
                if (ev(i) >= a - eps && ev(i) <= b + eps) {
                    dist = 0.0;
                    break;
                }
                dist = std::min(dist, std::min(std::abs(ev(i) - (a - eps)), std::abs(ev(i) - (b + eps))));
            }
            worst = std::max(worst, dist);
        }
        excess[t] = worst;
    });

    InclusionResult out;
    out.trials = trials;
    for (double e : excess) {
        if (e > 0.0) ++out.violating_trials;
        out.worst_excess = std::max(out.worst_excess, e);
    }
    out.pass = out.violating_trials == 0;
    return out;
}

// --- Histogram vs predicted density ----------------------------------------

// Kolmogorov-Smirnov distance between the pooled empirical cdf of the sampled
// eigenvalues and the predicted cdf (trapezoid-integrated density).
inline double ks_distance(std::vector<double> eigenvalues, const SpectralReport& report) {
    if (eigenvalues.empty()) throw ConfigError("ks_distance: no samples");
    std::sort(eigenvalues.begin(), eigenvalues.end());
    const double n = double(eigenvalues.size());
    double ks = 0.0;
    for (size_t i = 0; i < eigenvalues.size(); ++i) {
        const double f = report.cdf(eigenvalues[i]);
        ks = std::max(ks, std::max(std::abs(double(i) / n - f), std::abs(double(i + 1) / n - f)));
    }
    return ks;
}

// Pooled eigenvalues of P(X, Y) over the given number of trials.
inline std::vector<double> sample_eigenvalues(const NCPolynomial& P, const DeterministicModel& model,
                                              Eigen::Index N, int trials, std::uint64_t seed,
                                              int threads = 1) {
    const NCPolynomial canon = P.assuming_hermitian_y();
    const int p = canon.required_x();
    const std::vector<HermMatrix> Yh = realize_model(model, N);
    std::vector<CMatrix> Y;
    for (const auto& y : Yh) Y.push_back(y.mat());
    std::vector<std::vector<double>> per_trial(trials);
    parallel_for(trials, threads, [&](int t) {
        const auto X = detail::sample_gue_family(p, N, seed, std::uint64_t(t));
        const RVector ev = herm_eigenvalues(HermMatrix(canon.evaluate(X, Y, N)));
        per_trial[t].assign(ev.data(), ev.data() + ev.size());
    });
    std::vector<double> pooled;
    for (const auto& v : per_trial) pooled.insert(pooled.end(), v.begin(), v.end());
    return pooled;
}

// --- Subordination-defect decay ---------------------------------------------

struct DecayStat {
    int n = 0;
    int trials = 0;
    double value = 0.0;    // ||Theta_hat|| (or |g difference|)
    double stderr_ = 0.0;  // batch stderr of the same statistic
    bool inconclusive = false;
};

struct DecayResult {
    std::vector<DecayStat> stats;
    double slope = std::numeric_limits<double>::quiet_NaN();
    double intercept = std::numeric_limits<double>::quiet_NaN();
    bool inconclusive = false;  // some point had stderr > 50% of its value
    bool pass = false;          // slope <= threshold and conclusive
};

namespace detail {

// Mean transform estimate per (N, lambda): averages the exact per-sample
// partial traces H = (id (x) tau)[(Lambda (x) 1 - L_N)^{-1}]; the k = 1, q = 0
// case reuses one eigendecomposition per trial for all lambdas.
inline std::vector<std::vector<CMatrix>> mean_transform_samples(
    const Pencil& L, const DeterministicModel& model, Eigen::Index N, int trials,
    const std::vector<CMatrix>& lambdas, std::uint64_t seed, int threads) {
    const std::vector<HermMatrix> Y = realize_model(model, N);
    const bool scalar_fast = (L.k == 1 && L.q() == 0);
    std::vector<std::vector<CMatrix>> samples(lambdas.size(), std::vector<CMatrix>(trials));
    parallel_for(trials, threads, [&](int t) {
        const auto X = detail::sample_gue_family(L.p(), N, seed, std::uint64_t(t));
        if (scalar_fast) {
            CMatrix m = CMatrix::Zero(N, N);
            m += L.a0.mat()(0, 0) * identity(N);
            for (int j = 0; j < L.p(); ++j) m += L.a[j].mat()(0, 0) * X[j].mat();
            const RVector ev = herm_eigenvalues(HermMatrix(m));
            for (size_t li = 0; li < lambdas.size(); ++li) {
                Complex acc(0.0);
                for (Eigen::Index i = 0; i < N; ++i) acc += 1.0 / (lambdas[li](0, 0) - ev(i));
                CMatrix h(1, 1);
                h(0, 0) = acc / double(N);
                samples[li][t] = h;
            }
        } else {
            const BlockOperator LN = evaluate_pencil(L, X, Y);
            for (size_t li = 0; li < lambdas.size(); ++li)
                samples[li][t] = partial_trace(resolvent(lambdas[li], LN));
        }
    });
    return samples;
}

}  // namespace detail

// Theta_N decay: estimate G_LN(Lambda) by the trial mean, evaluate the
// subordination defect Theta = G_hat - G_T(Lambda - a0 - R_s(G_hat)), fit
// log||Theta|| against log N. The batch stderr of ||Theta|| is reported and a
// point whose stderr exceeds half its value marks the result inconclusive.
inline std::vector<DecayResult> theta_decay(const Pencil& L, const DeterministicModel& model,
                                            const std::vector<int>& n_list,
                                            const std::vector<int>& trials_list,
                                            const std::vector<Complex>& lambdas, std::uint64_t seed,
                                            int threads = 1, double slope_threshold = -1.6,
                                            int batches = 10) {
    if (n_list.size() < 2) throw ConfigError("theta_decay: need at least two N values");
    if (trials_list.size() != n_list.size())
        throw ConfigError("theta_decay: one trial count per N");
    const TransformEvaluator GT(model, L.b, L.k);

    std::vector<DecayResult> out(lambdas.size());
    for (auto& r : out) r.stats.resize(n_list.size());

    for (size_t ni = 0; ni < n_list.size(); ++ni) {
        const int N = n_list[ni];
        const int trials = trials_list[ni];
        std::vector<CMatrix> lam_mats;
        for (Complex z : lambdas) lam_mats.push_back(z * identity(L.k));
        const auto samples = detail::mean_transform_samples(L, model, N, trials, lam_mats,
                                                            detail::trial_seed(seed, N), threads);
        for (size_t li = 0; li < lambdas.size(); ++li) {
            const CMatrix g_hat = detail::pairwise_mean_mat(samples[li]);
            const auto th = L.p() == 0
                                ? ThetaResidual{CMatrix::Zero(L.k, L.k), 0.0}
                                : theta_residual(g_hat, GT, L.a0, L.a, lam_mats[li]);

            // batch replicas of the same nonlinear statistic
            const int B = std::min(batches, trials);
            std::vector<double> batch_norm;
            for (int b = 0; b < B; ++b) {
                std::vector<CMatrix> part;
                for (int t = b; t < trials; t += B) part.push_back(samples[li][t]);
                const CMatrix gb = detail::pairwise_mean_mat(part);
                if (L.p() == 0) {
                    batch_norm.push_back(0.0);
                } else {
                    batch_norm.push_back(theta_residual(gb, GT, L.a0, L.a, lam_mats[li]).norm);
                }
            }
            double bm = 0.0, bv = 0.0;
            for (double v : batch_norm) bm += v;
            bm /= double(B);
            for (double v : batch_norm) bv += (v - bm) * (v - bm);
            const double se = B > 1 ? std::sqrt(bv / double(B - 1) / double(B)) : 0.0;

            DecayStat& st = out[li].stats[ni];
            st.n = N;
            st.trials = trials;
            st.value = th.norm;
            st.stderr_ = se;
            st.inconclusive = (st.value <= 0.0) || (se > 0.5 * st.value);
        }
    }

    for (size_t li = 0; li < lambdas.size(); ++li) {
        DecayResult& r = out[li];
        std::vector<double> lx, ly;
        bool all_zero = true;
        for (const auto& st : r.stats) {
            r.inconclusive = r.inconclusive || st.inconclusive;
            all_zero = all_zero && st.value <= 1e-14;
            if (st.value > 0.0) {
                lx.push_back(std::log(double(st.n)));
                ly.push_back(std::log(st.value));
            }
        }
        if (lx.size() >= 2) r.slope = detail::slope_fit(lx, ly, &r.intercept);
        r.pass = all_zero || (!r.inconclusive && r.slope <= slope_threshold);
    }
    return out;
}

// --- Mean Schwinger-Dyson residual -------------------------------------------

struct SdResidualResult {
    int trials = 0;
    double residual_norm = 0.0;  // Frobenius norm of the trial mean
    double stderr_ = 0.0;        // sqrt of summed entrywise variances of the mean
    bool pass = false;           // residual <= 3 stderr
};

// Monte-Carlo mean of the exact per-sample expression
//   H(Lambda) - H_T(Gamma) - (id (x) tau)[ h_T(Gamma)
//       ((R_s(H(Lambda)) - Lambda + Gamma) (x) 1) h(Lambda) ],
// whose expectation vanishes identically.
inline SdResidualResult sd_mean_residual(const std::vector<HermMatrix>& a,
                                         const std::vector<HermMatrix>& b,
                                         const DeterministicModel& model, Eigen::Index N, int trials,
                                         const CMatrix& Lambda, const CMatrix& Gamma,
                                         std::uint64_t seed, int threads = 1) {
    const int k = int(Lambda.rows());
    const std::vector<HermMatrix> Y = realize_model(model, N);
    if (int(b.size()) != int(Y.size())) throw ConfigError("sd_mean_residual: b/model mismatch");

    CMatrix tmat = CMatrix::Zero(k * N, k * N);
    for (size_t j = 0; j < b.size(); ++j) tmat += kron(b[j].mat(), Y[j].mat());
    const BlockOperator T(k, N, tmat);
    const BlockOperator hT = resolvent(Gamma, T);
    const CMatrix HT = partial_trace(hT);

    std::vector<CMatrix> psi(trials);
    parallel_for(trials, threads, [&](int t) {
        const auto X = detail::sample_gue_family(int(a.size()), N, seed, std::uint64_t(t));
        CMatrix smat = tmat;
        for (size_t j = 0; j < a.size(); ++j) smat += kron(a[j].mat(), X[j].mat());
        const BlockOperator h = resolvent(Lambda, BlockOperator(k, N, smat));
        const CMatrix H = partial_trace(h);
        const CMatrix M = semicircular_rmap(a, H) - Lambda + Gamma;

        // (id (x) tau)[ h_T (M (x) 1) h ] via block contractions: O(k^3 N^2).
        CMatrix middle = CMatrix::Zero(k, k);
        for (int u = 0; u < k; ++u)
            for (int v = 0; v < k; ++v) {
                Complex acc(0.0);
                for (int w = 0; w < k; ++w)
                    for (int w2 = 0; w2 < k; ++w2) {
                        if (M(w, w2) == Complex(0.0)) continue;
                        acc += M(w, w2) * (hT.value.block(u * N, w * N, N, N)
                                               .cwiseProduct(h.value.block(w2 * N, v * N, N, N).transpose()))
                                              .sum();
                    }
                middle(u, v) = acc / double(N);
            }
        psi[t] = H - HT - middle;
    });

    const CMatrix mean = detail::pairwise_mean_mat(psi);
    double var_sum = 0.0;
    for (int u = 0; u < k; ++u)
        for (int v = 0; v < k; ++v) {
            double s = 0.0;
            for (const auto& p : psi) s += std::norm(p(u, v) - mean(u, v));
            var_sum += s / double(trials - 1) / double(trials);
        }

    SdResidualResult out;
    out.trials = trials;
    out.residual_norm = mean.norm();
    out.stderr_ = std::sqrt(var_sum);
    out.pass = out.residual_norm <= 3.0 * out.stderr_;
    return out;
}

// --- Scalar transform difference decay ---------------------------------------

// |g_hat_{L_N}(lambda) - g_{l_N}(lambda)| against N, where g_{l_N} is the
// deterministic fixed point at the same finite N (empirical model) and
// g_hat_{L_N} the Monte-Carlo mean of the normalized-trace resolvent.
inline DecayResult g_difference_decay(const Pencil& L, const DeterministicModel& model,
                                      const std::vector<int>& n_list, const std::vector<int>& trials_list,
                                      Complex lambda, std::uint64_t seed, int threads = 1,
                                      double slope_threshold = -1.6, int batches = 10) {
    if (trials_list.size() != n_list.size())
        throw ConfigError("g_difference_decay: one trial count per N");
    DecayResult r;
    r.stats.resize(n_list.size());
    FixedPointConfig cfg;
    for (size_t ni = 0; ni < n_list.size(); ++ni) {
        const int N = n_list[ni];
        const int trials = trials_list[ni];

        // deterministic side at the same finite N
        const std::vector<HermMatrix> Y = realize_model(model, N);
        const auto empirical = Y.empty() ? DeterministicModel::none() : DeterministicModel::empirical(Y);
        const TransformEvaluator GT(empirical, L.b, L.k);
        const CMatrix lam = lambda * identity(L.k);
        const auto sol = solve_point(GT, L.a0, L.a, lam, cfg);
        if (!sol.converged) throw SolverError("g_difference_decay: fixed point did not converge");
        const Complex g_det = normalized_trace(sol.G);

        const auto samples = detail::mean_transform_samples(L, model, N, trials, {lam},
                                                            detail::trial_seed(seed, N), threads);
        const CMatrix g_hat = detail::pairwise_mean_mat(samples[0]);
        const double diff = std::abs(normalized_trace(g_hat) - g_det);

        const int B = std::min(batches, trials);
        std::vector<double> batch_diff;
        for (int bidx = 0; bidx < B; ++bidx) {
            std::vector<CMatrix> part;
            for (int t = bidx; t < trials; t += B) part.push_back(samples[0][t]);
            batch_diff.push_back(std::abs(normalized_trace(detail::pairwise_mean_mat(part)) - g_det));
        }
        double bm = 0.0, bv = 0.0;
        for (double v : batch_diff) bm += v;
        bm /= double(B);
        for (double v : batch_diff) bv += (v - bm) * (v - bm);
        const double se = B > 1 ? std::sqrt(bv / double(B - 1) / double(B)) : 0.0;

        DecayStat& st = r.stats[ni];
        st.n = N;
        st.trials = trials;
        st.value = diff;
        st.stderr_ = se;
        st.inconclusive = (L.p() > 0) && ((diff <= 0.0) || (se > 0.5 * diff));
    }
    std::vector<double> lx, ly;
    bool all_zero = true;
    for (const auto& st : r.stats) {
        r.inconclusive = r.inconclusive || st.inconclusive;
        all_zero = all_zero && st.value <= 1e-14;
        if (st.value > 0.0) {
            lx.push_back(std::log(double(st.n)));
            ly.push_back(std::log(st.value));
        }
    }
    if (lx.size() >= 2) r.slope = detail::slope_fit(lx, ly, &r.intercept);
    r.pass = all_zero || (!r.inconclusive && r.slope <= slope_threshold);
    return r;
}

}  // namespace freespec
