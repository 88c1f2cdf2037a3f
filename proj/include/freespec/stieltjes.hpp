#pragma once

// Matrix-valued Stieltjes transforms G_T of the deterministic part, density
// recovery on a grid, and support detection.
//
// G_T maps the matrix upper half-plane into the lower one and satisfies
// ||G_T(Gamma)|| <= ||(Im Gamma)^{-1}||; both facts are property-tested.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "freespec/linalg.hpp"

namespace freespec {

// Generalized inverse cdf on (0,1], extended 1-periodically. Either a sorted
// step table (value_i on ((i-1)/n, i/n]) or an analytic callable.
class QuantileTable {
public:
    QuantileTable() = default;

    static QuantileTable from_sorted_values(std::vector<double> values) {
        QuantileTable t;
        for (size_t i = 0; i + 1 < values.size(); ++i)
            if (values[i] > values[i + 1] + 1e-12)
                throw ConfigError("QuantileTable: step values must be nondecreasing");
        t.step_ = std::move(values);
        return t;
    }

    static QuantileTable constant(double c) { return from_sorted_values({c}); }

    static QuantileTable uniform(double lo = 0.0, double hi = 1.0) {
        QuantileTable t;
        t.fn_ = [lo, hi](double u) { return lo + (hi - lo) * u; };
        return t;
    }

    // Atoms at the given values with the given weights (values ascending).
    static QuantileTable atoms(std::vector<double> values, std::vector<double> weights) {
        if (values.size() != weights.size() || values.empty())
            throw ConfigError("QuantileTable::atoms: values/weights mismatch");
        double total = 0.0;
        for (double w : weights) {
            if (w < 0.0) throw ConfigError("QuantileTable::atoms: negative weight");
            total += w;
        }
        std::vector<double> cum(weights.size());
        double acc = 0.0;
        for (size_t i = 0; i < weights.size(); ++i) {
            acc += weights[i] / total;
            cum[i] = acc;
        }
        QuantileTable t;
        t.fn_ = [values = std::move(values), cum = std::move(cum)](double u) {
            for (size_t i = 0; i < cum.size(); ++i)
                if (u <= cum[i] + 1e-15) return values[i];
            return values.back();
        };
        return t;
    }

    static QuantileTable bernoulli_pm1() { return atoms({-1.0, 1.0}, {0.5, 0.5}); }

    // Restriction of a table to the block (offset, offset + width], rescaled
    // to its own unit interval; zero outside. Used to couple block-diagonal
    // families on one common uniform variable.
    static QuantileTable window(const QuantileTable& inner, double offset, double width) {
        if (width <= 0.0 || offset < 0.0 || offset + width > 1.0 + 1e-12)
            throw ConfigError("QuantileTable::window: bad block");
        QuantileTable t;
        t.fn_ = [inner, offset, width](double u) {
            if (u <= offset || u > offset + width + 1e-15) return 0.0;
            return inner((u - offset) / width);
        };
        return t;
    }

    // Inverse cdf of the semicircle law of the given radius, by bisection.
    static QuantileTable semicircle(double radius = 2.0) {
        QuantileTable t;
        t.fn_ = [radius](double u) {
            const double r2 = radius * radius;
            auto cdf = [&](double x) {
                return 0.5 + x * std::sqrt(std::max(0.0, r2 - x * x)) / (std::numbers::pi * r2) +
                       std::asin(std::clamp(x / radius, -1.0, 1.0)) / std::numbers::pi;
            };
            double lo = -radius, hi = radius;
            for (int it = 0; it < 80; ++it) {
                const double mid = 0.5 * (lo + hi);
                (cdf(mid) < u ? lo : hi) = mid;
            }
            return 0.5 * (lo + hi);
        };
        return t;
    }

    double operator()(double u) const {
        double v = u - std::floor(u);
        if (v == 0.0) v = 1.0;
        if (fn_) return fn_(v);
        if (step_.empty()) throw ConfigError("QuantileTable: empty table");
        const size_t n = step_.size();
        size_t idx = size_t(std::ceil(v * double(n) - 1e-12));
        idx = std::clamp<size_t>(idx, 1, n);
        return step_[idx - 1];
    }

    // Upper bound on |F^{-1}| over (0,1], used for solver continuation starts.
    double abs_bound() const {
        double m = 0.0;
        const int probes = 512;
        for (int i = 1; i <= probes; ++i) m = std::max(m, std::abs((*this)((i - 0.5) / probes)));
        m = std::max(m, std::abs((*this)(1.0)));
        return m;
    }

private:
    std::vector<double> step_;
    std::function<double(double)> fn_;
};

// The deterministic family Y: explicit Hermitian matrices, or inverse-cdf
// tables with offsets realizing the commuting quantile coupling.
struct DeterministicModel {
    enum class Mode { None, Empirical, Quantile };
    Mode mode = Mode::None;

    std::vector<HermMatrix> matrices;   // Empirical
    std::vector<QuantileTable> tables;  // Quantile
    std::vector<double> offsets;        // Quantile, in [0,1]
    int quad_m = 4096;                  // midpoint quadrature count

    static DeterministicModel none() { return {}; }

    static DeterministicModel empirical(std::vector<HermMatrix> ms) {
        DeterministicModel m;
        m.mode = Mode::Empirical;
        m.matrices = std::move(ms);
        for (size_t j = 1; j < m.matrices.size(); ++j)
            if (m.matrices[j].dim() != m.matrices[0].dim())
                throw ConfigError("DeterministicModel: empirical matrices must share one dim");
        return m;
    }

    static DeterministicModel quantile(std::vector<QuantileTable> tables, std::vector<double> offsets = {},
                                       int quad_m = 4096) {
        DeterministicModel m;
        m.mode = Mode::Quantile;
        m.tables = std::move(tables);
        m.offsets = std::move(offsets);
        m.offsets.resize(m.tables.size(), 0.0);
        for (double v : m.offsets)
            if (v < 0.0 || v > 1.0) throw ConfigError("DeterministicModel: offsets must lie in [0,1]");
        m.quad_m = quad_m;
        return m;
    }

    int q() const {
        switch (mode) {
            case Mode::None: return 0;
            case Mode::Empirical: return int(matrices.size());
            case Mode::Quantile: return int(tables.size());
        }
        return 0;
    }

    // Crude upper bound on sum_j ||b_j|| ||Y_j||.
    double bound(const std::vector<HermMatrix>& b) const {
        double s = 0.0;
        for (int j = 0; j < q(); ++j) {
            const double bn = op_norm(b[j]);
            double yn = 0.0;
            if (mode == Mode::Empirical) yn = op_norm(matrices[j]);
            else yn = tables[j].abs_bound();
            s += bn * yn;
        }
        return s;
    }
};

// Evaluator Gamma -> G_T(Gamma). For commuting (diagonal or quantile) models
// the transform collapses to a weighted sum over joint scalar nodes; repeated
// nodes are merged, which makes step tables (projections, Bernoulli spectra)
// cost a handful of k x k inverses per call.
class TransformEvaluator {
public:
    TransformEvaluator() = default;

    TransformEvaluator(const DeterministicModel& model, std::vector<HermMatrix> b, int k)
        : k_(k), b_(std::move(b)) {
        if (int(b_.size()) != model.q())
            throw ConfigError("TransformEvaluator: coefficient count must match the model");
        for (const auto& m : b_)
            if (m.dim() != k_) throw ConfigError("TransformEvaluator: coefficient dim mismatch");
        switch (model.mode) {
            case DeterministicModel::Mode::None:
                mode_ = Mode::Inverse;
                break;
            case DeterministicModel::Mode::Quantile: {
                mode_ = Mode::Nodes;
                const int m = model.quad_m;
                std::map<std::vector<double>, double> merged;
                for (int i = 1; i <= m; ++i) {
                    const double u = (i - 0.5) / double(m);
                    std::vector<double> col(b_.size());
                    for (size_t j = 0; j < b_.size(); ++j) col[j] = model.tables[j](u + model.offsets[j]);
                    merged[col] += 1.0 / double(m);
                }
                build_nodes(merged);
                break;
            }
            case DeterministicModel::Mode::Empirical: {
                bool all_diag = true;
                for (const auto& y : model.matrices) {
                    const CMatrix& m = y.mat();
                    for (Eigen::Index i = 0; i < m.rows() && all_diag; ++i)
                        for (Eigen::Index j = 0; j < m.cols(); ++j)
                            if (i != j && std::abs(m(i, j)) > 0.0) { all_diag = false; break; }
                }
                if (all_diag && !model.matrices.empty()) {
                    mode_ = Mode::Nodes;
                    const Eigen::Index n = model.matrices[0].dim();
                    std::map<std::vector<double>, double> merged;
                    for (Eigen::Index i = 0; i < n; ++i) {
                        std::vector<double> col(b_.size());
                        for (size_t j = 0; j < b_.size(); ++j) col[j] = model.matrices[j].mat()(i, i).real();
                        merged[col] += 1.0 / double(n);
                    }
                    build_nodes(merged);
                } else if (model.matrices.empty()) {
                    mode_ = Mode::Inverse;
                } else {
                    mode_ = Mode::Dense;
                    const Eigen::Index n = model.matrices[0].dim();
                    CMatrix t = CMatrix::Zero(k_ * n, k_ * n);
                    for (size_t j = 0; j < b_.size(); ++j) t += kron(b_[j].mat(), model.matrices[j].mat());
                    dense_ = BlockOperator(k_, n, std::move(t));
                }
                break;
            }
        }
    }

    int k() const { return k_; }

    CMatrix eval(const CMatrix& gamma) const {
        if (gamma.rows() != k_ || gamma.cols() != k_)
            throw ConfigError("TransformEvaluator: argument dim mismatch");
        if (!is_upper(gamma)) throw SolverError("TransformEvaluator: argument not in the upper half-plane");
        switch (mode_) {
            case Mode::Inverse:
                return gamma.partialPivLu().solve(identity(k_));
            case Mode::Nodes: {
                CMatrix acc = CMatrix::Zero(k_, k_);
                for (const auto& node : nodes_)
                    acc += node.weight * (gamma - node.shift).partialPivLu().solve(identity(k_)).eval();
                return acc;
            }
            case Mode::Dense:
                return partial_trace(resolvent(gamma, dense_));
        }
        throw SolverError("TransformEvaluator: not initialized");
    }

private:
    enum class Mode { Inverse, Nodes, Dense };

    struct Node {
        CMatrix shift;  // sum_j f_j b_j
        double weight;
    };

    static bool is_upper(const CMatrix& g) {
        // Cholesky of Im g succeeds iff Im g is positive definite.
        const CMatrix im = (g - g.adjoint().eval()) / Complex(0.0, 2.0);
        Eigen::LLT<CMatrix> llt(im);
        return llt.info() == Eigen::Success;
    }

    void build_nodes(const std::map<std::vector<double>, double>& merged) {
        nodes_.clear();
        nodes_.reserve(merged.size());
        for (const auto& [col, w] : merged) {
            CMatrix shift = CMatrix::Zero(k_, k_);
            for (size_t j = 0; j < b_.size(); ++j) shift += col[j] * b_[j].mat();
            nodes_.push_back({std::move(shift), w});
        }
    }

    int k_ = 1;
    Mode mode_ = Mode::Inverse;
    std::vector<HermMatrix> b_;
    std::vector<Node> nodes_;
    BlockOperator dense_;
};

// Semicircular quadratic map M -> sum_j a_j M a_j; the R-transform of the
// GUE part of a pencil.
inline CMatrix semicircular_rmap(const std::vector<HermMatrix>& a, const CMatrix& m) {
    CMatrix acc = CMatrix::Zero(m.rows(), m.cols());
    for (const auto& aj : a) acc += aj.mat() * m * aj.mat();
    return acc;
}

// Stieltjes inversion at height eta: rho(t) = -Im g(t + i eta) / pi, clamped
// at zero. The pre-clamp minimum is reported as a diagnostic.
inline std::vector<double> invert_density(const std::vector<Complex>& g, double* min_preclamp = nullptr) {
    std::vector<double> rho(g.size());
    double lo = 0.0;
    for (size_t i = 0; i < g.size(); ++i) {
        const double v = -g[i].imag() / std::numbers::pi;
        lo = std::min(lo, v);
        rho[i] = std::max(0.0, v);
    }
    if (min_preclamp) *min_preclamp = lo;
    return rho;
}

struct GridSpec {
    double t_min = -3.0;
    double t_max = 3.0;
    double step = 0.005;
    double eta = 1e-3;

    std::vector<double> points() const {
        if (step <= 0.0 || t_max < t_min) throw ConfigError("GridSpec: bad grid");
        std::vector<double> t;
        const int n = int(std::floor((t_max - t_min) / step + 1e-9)) + 1;
        t.reserve(n);
        for (int i = 0; i < n; ++i) t.push_back(t_min + i * step);
        return t;
    }
};

using SupportInterval = std::pair<double, double>;

// Maximal runs with rho > delta, merged across gaps shorter than two grid
// steps; endpoints refined by bisection on the linear interpolant of
// rho - delta between the bracketing grid points.
inline std::vector<SupportInterval> detect_support(const std::vector<double>& grid,
                                                   const std::vector<double>& density, double delta) {
    if (grid.size() != density.size() || grid.size() < 2)
        throw ConfigError("detect_support: grid/density mismatch");
    const size_t n = grid.size();
    std::vector<std::pair<size_t, size_t>> runs;
    std::optional<size_t> start;
    for (size_t i = 0; i < n; ++i) {
        if (density[i] > delta) {
            if (!start) start = i;
        } else if (start) {
            runs.push_back({*start, i - 1});
            start.reset();
        }
    }
    if (start) runs.push_back({*start, n - 1});
    if (runs.empty()) throw SolverError("detect_support: all density below threshold");

    std::vector<std::pair<size_t, size_t>> merged;
    for (const auto& r : runs) {
        if (!merged.empty() && r.first - merged.back().second < 2 + 1)
            merged.back().second = r.second;
        else
            merged.push_back(r);
    }

    auto refine = [&](size_t inside, size_t outside) {
        double xi = grid[inside], xo = grid[outside];
        double fi = density[inside] - delta, fo = density[outside] - delta;
        if (fo >= 0.0) return xo;  // boundary sits at the grid edge
        for (int it = 0; it < 60; ++it) {
            const double xm = 0.5 * (xi + xo);
            const double t = (xm - grid[inside]) / (grid[outside] - grid[inside]);
            const double fm = (1.0 - t) * fi + t * fo;
            (fm > 0.0 ? xi : xo) = xm;
        }
        return 0.5 * (xi + xo);
    };

    std::vector<SupportInterval> out;
    for (const auto& [lo, hi] : merged) {
        const double left = (lo == 0) ? grid[0] : refine(lo, lo - 1);
        const double right = (hi == n - 1) ? grid[n - 1] : refine(hi, hi + 1);
        out.push_back({left, right});
    }
    return out;
}

inline double norm_estimate(const std::vector<SupportInterval>& support) {
    if (support.empty()) throw SolverError("norm_estimate: empty support");
    double m = 0.0;
    for (const auto& [a, b] : support) m = std::max({m, std::abs(a), std::abs(b)});
    return m;
}

struct SpectralReport {
    std::vector<double> grid;
    std::vector<double> density;
    std::vector<Complex> stieltjes;  // g(t_i + i eta)
    std::vector<SupportInterval> support;
    double norm_estimate = 0.0;
    double eta = 0.0;

    struct Diagnostics {
        int unconverged_points = 0;
        double max_residual = 0.0;
        double min_preclamp_density = 0.0;
        double mass = 0.0;
    } diagnostics;

    double integrated_mass() const {
        double m = 0.0;
        for (size_t i = 0; i + 1 < grid.size(); ++i)
            m += 0.5 * (density[i] + density[i + 1]) * (grid[i + 1] - grid[i]);
        return m;
    }

    // Predicted cdf at x by trapezoid integration of the density.
    double cdf(double x) const {
        if (grid.empty() || x <= grid.front()) return 0.0;
        double m = 0.0;
        for (size_t i = 0; i + 1 < grid.size(); ++i) {
            const double a = grid[i], b = grid[i + 1];
            if (x >= b) {
                m += 0.5 * (density[i] + density[i + 1]) * (b - a);
            } else {
                const double t = (x - a) / (b - a);
                const double dx = density[i] + t * (density[i + 1] - density[i]);
                m += 0.5 * (density[i] + dx) * (x - a);
                break;
            }
        }
        return std::min(m, 1.0);
    }
};

}  // namespace freespec
