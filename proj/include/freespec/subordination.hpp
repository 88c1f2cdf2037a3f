#pragma once

// Subordination fixed point G = G_T(Lambda - a0 - R_s(G)), solved by damped
// Picard iteration with continuation in the imaginary direction.
//
// High in the half-plane the map is a strict contraction with ratio
// ||(Im Lambda)^{-1}||^2 sum_j ||a_j||^2, so the solver starts there and
// follows the analytic solution down to the requested height, warm-starting
// every step. Near the spectrum the map can be barely non-expansive; an
// oscillation guard halves the damping when the residual grows twice in a row.

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "freespec/linalg.hpp"
#include "freespec/pencil.hpp"
#include "freespec/stieltjes.hpp"
#include "freespec/util.hpp"

namespace freespec {

struct FixedPointConfig {
    double tol = 1e-12;
    int max_iter = 10000;
    double damping = 1.0;            // halved on oscillation
    double start_im = 0.0;           // 0 = auto: 8 sum||a_j|| + ||a0|| + model bound
    double continuation_factor = 0.9;
    double epsilon_pad = 1e-8;
};

inline double auto_start_im(const Pencil& L, const DeterministicModel& model) {
    double s = 0.0;
    for (const auto& aj : L.a) s += op_norm(aj);
    return 8.0 * s + op_norm(L.a0) + model.bound(L.b) + 1.0;
}

struct SubordinationSolution {
    CMatrix lambda;
    CMatrix G;
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
    bool in_contraction_domain = false;  // ||(Im Lambda)^{-1}||^2 sum||a_j||^2 < 1
};

// One evaluation point. Picard iteration from the warm start (or from
// G_T(Lambda - a0), the exact p = 0 limit, which always lies in M_k(C)^-).
inline SubordinationSolution solve_point(const TransformEvaluator& GT, const HermMatrix& a0,
                                         const std::vector<HermMatrix>& a, const CMatrix& lambda,
                                         const FixedPointConfig& cfg,
                                         const std::optional<CMatrix>& warm_start = std::nullopt) {
    if (!in_upper_half(lambda))
        throw SolverError("solve_point: evaluation point not in the upper half-plane");
    const double a_sq = [&] {
        double s = 0.0;
        for (const auto& aj : a) {
            const double v = op_norm(aj);
            s += v * v;
        }
        return s;
    }();

    SubordinationSolution sol;
    sol.lambda = lambda;
    sol.in_contraction_domain = a.empty() || inv_imag_norm(lambda) * inv_imag_norm(lambda) * a_sq < 1.0;

    auto map = [&](const CMatrix& g) { return GT.eval(lambda - a0.mat() - semicircular_rmap(a, g)); };

    if (a.empty()) {
        sol.G = GT.eval(lambda - a0.mat());
        sol.iterations = 1;
        sol.residual = 0.0;
        sol.converged = true;
        return sol;
    }
    CMatrix g = warm_start ? *warm_start : GT.eval(lambda - a0.mat());

    double theta = cfg.damping;
    double prev = std::numeric_limits<double>::infinity();
    int rising = 0;
    CMatrix delta_prev;
    bool have_delta = false;
    for (int it = 1; it <= cfg.max_iter; ++it) {
        CMatrix gm = map(g);
        CMatrix delta = gm - g;
        double res = op_norm(delta);
        sol.iterations = it;
        if (res <= cfg.tol) {
            sol.G = gm;
            sol.residual = op_norm(CMatrix(map(gm) - gm));
            sol.converged = sol.residual <= cfg.tol * 10.0;
            if (sol.converged) return sol;
            g = gm;
            have_delta = false;
            continue;
        }

        // Aitken extrapolation on the dominant contraction mode: near the
        // real axis the Picard ratio approaches 1 and plain iteration crawls;
        // the geometric-series limit jumps ahead. Candidates are accepted
        // only if their own residual actually improves.
        if (have_delta && (it & 3) == 0) {
            const Complex num = (delta_prev.conjugate().cwiseProduct(delta)).sum();
            const double den = delta_prev.squaredNorm();
            if (den > 0.0) {
                const Complex rho = num / den;
                if (std::abs(rho) < 0.9999 && std::abs(Complex(1.0) - rho) > 1e-6) {
                    const CMatrix cand = gm + (rho / (Complex(1.0) - rho)) * delta;
                    if (min_imag_eigenvalue(cand) < 0.0) {
                        const CMatrix cand_m = map(cand);
                        const double cand_res = op_norm(CMatrix(cand_m - cand));
                        if (cand_res < res) {
                            g = cand;
                            gm = cand_m;
                            delta = gm - g;
                            res = cand_res;
                            have_delta = false;
                        }
                    }
                }
            }
        }

        if (res <= cfg.tol) {
            sol.G = gm;
            sol.residual = res;
            sol.converged = true;
            return sol;
        }
        if (res > prev) {
            if (++rising >= 2 && theta > 1.0 / 64.0) {
                theta *= 0.5;
                rising = 0;
            }
        } else {
            rising = 0;
        }
        prev = res;
        g = (theta == 1.0) ? gm : CMatrix((1.0 - theta) * g + theta * gm);
        delta_prev = delta;
        have_delta = true;
        sol.G = g;
        sol.residual = res;
    }
    sol.converged = false;
    return sol;
}

namespace detail {

// Continuation column: descend the additive lift i y 1_k from start_im to 0,
// keeping the target Lambda_eps(t + i eta) fixed underneath.
struct ColumnResult {
    Complex g;
    bool converged;
    double residual;
    int iterations;
};

inline ColumnResult solve_column(const TransformEvaluator& GT, const Pencil& L,
                                 const LinearizationCertificate& cert, double t, double eta,
                                 double start_im, const FixedPointConfig& cfg) {
    const CMatrix target = lambda_pad(cert, Complex(t, eta));
    std::vector<double> lifts;
    for (double y = start_im; y > eta * 0.5; y *= cfg.continuation_factor) lifts.push_back(y);
    lifts.push_back(0.0);

    std::optional<CMatrix> warm;
    ColumnResult out{Complex(0.0), false, 0.0, 0};
    const CMatrix eye = identity(L.k);
    for (double y : lifts) {
        const CMatrix lam = target + Complex(0.0, y) * eye;
        const SubordinationSolution sol = solve_point(GT, L.a0, L.a, lam, cfg, warm);
        warm = sol.G;
        out.iterations += sol.iterations;
        if (y == 0.0) {
            out.g = corner_extract(sol.G, cert);
            out.converged = sol.converged;
            out.residual = sol.residual;
        }
    }
    return out;
}

}  // namespace detail

// Sweep a real grid at height eta. Columns are independent (each owns its
// continuation chain), so they are solved in parallel and written back by
// index; the report is identical for any thread count.
inline SpectralReport solve_grid(const TransformEvaluator& GT, const Pencil& L,
                                 const LinearizationCertificate& cert, const GridSpec& grid,
                                 const FixedPointConfig& cfg, const DeterministicModel& model,
                                 int threads = 1, double support_threshold = 5e-3) {
    SpectralReport rep;
    rep.grid = grid.points();
    rep.eta = grid.eta;
    const int n = int(rep.grid.size());
    rep.stieltjes.assign(n, Complex(0.0));
    std::vector<char> ok(n, 0);
    std::vector<double> res(n, 0.0);

    const double start_im = cfg.start_im > 0.0 ? cfg.start_im : auto_start_im(L, model);
    parallel_for(n, threads, [&](int i) {
        const auto col = detail::solve_column(GT, L, cert, rep.grid[i], grid.eta, start_im, cfg);
        rep.stieltjes[i] = col.g;
        ok[i] = col.converged ? 1 : 0;
        res[i] = col.residual;
    });

    for (int i = 0; i < n; ++i) {
        if (!ok[i]) ++rep.diagnostics.unconverged_points;
        rep.diagnostics.max_residual = std::max(rep.diagnostics.max_residual, res[i]);
    }
    if (rep.diagnostics.unconverged_points * 100 > n)
        throw SolverError("solve_grid: more than 1% of grid points failed to converge");

    rep.density = invert_density(rep.stieltjes, &rep.diagnostics.min_preclamp_density);
    rep.support = detect_support(rep.grid, rep.density, support_threshold);
    rep.norm_estimate = freespec::norm_estimate(rep.support);
    rep.diagnostics.mass = rep.integrated_mass();
    return rep;
}

// Subordination defect of an external estimate G_hat (typically a Monte-Carlo
// transform): Theta = G_hat - G_T(Lambda - a0 - R_s(G_hat)).
struct ThetaResidual {
    CMatrix theta;
    double norm;
};

inline ThetaResidual theta_residual(const CMatrix& g_hat, const TransformEvaluator& GT,
                                    const HermMatrix& a0, const std::vector<HermMatrix>& a,
                                    const CMatrix& lambda) {
    const CMatrix interior = lambda - a0.mat() - semicircular_rmap(a, g_hat);
    if (!in_upper_half(interior))
        throw SolverError("theta_residual: interior point left the upper half-plane "
                          "(estimate has nonnegative imaginary part)");
    CMatrix theta = g_hat - GT.eval(interior);
    const double nrm = op_norm(theta);
    return {std::move(theta), nrm};
}

// Certified deviation bound from the stability of the fixed point:
// ||G - G_exact|| <= (1 + (1/eps) sum||a_j||^2 ||(Im Lambda)^{-1}||^2) ||Theta||,
// valid while kappa = ||Theta|| ||(Im Lambda)^{-1}|| sum||a_j||^2 < 1 - eps.
struct StabilityBound {
    bool available = false;
    double bound = 0.0;
    double kappa = 0.0;
};

inline StabilityBound stability_bound(double theta_norm, const CMatrix& lambda,
                                      const std::vector<HermMatrix>& a, double eps = 0.5) {
    double a_sq = 0.0;
    for (const auto& aj : a) {
        const double v = op_norm(aj);
        a_sq += v * v;
    }
    const double inv_im = inv_imag_norm(lambda);
    StabilityBound out;
    out.kappa = theta_norm * inv_im * a_sq;
    if (out.kappa >= 1.0 - eps) return out;
    out.available = true;
    out.bound = (1.0 + (1.0 / eps) * a_sq * inv_im * inv_im) * theta_norm;
    return out;
}

}  // namespace freespec
