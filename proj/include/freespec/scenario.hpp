#pragma once

// Scenario-driven front end: JSON configs in, density/support/sample/check
// runs out. Wishart scenarios run the square-GUE embedding pipeline; the
// structural zero-block atom is removed in transform space before density
// inversion. Channel scenarios support sampling and moment checks.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "freespec/ensembles.hpp"
#include "freespec/experiments.hpp"
#include "freespec/pencil.hpp"
#include "freespec/subordination.hpp"

namespace freespec {

using nlohmann::json;

struct ExperimentSpec {
    std::string type;
    json params;
};

struct Scenario {
    std::string name;
    enum class Kind { Polynomial, Wishart, Channel } kind = Kind::Polynomial;

    NCPolynomial polynomial;  // over x/y letters; for Wishart, x_j denotes W_j
    DeterministicModel model;
    WishartSpec wishart;
    ChannelSpec channel;

    GridSpec grid;
    FixedPointConfig fixed_point;
    double support_threshold = 5e-3;
    std::uint64_t seed = 1;
    std::vector<ExperimentSpec> experiments;
};

// ---- JSON helpers -----------------------------------------------------------

inline QuantileTable parse_table(const json& j) {
    const std::string kind = j.value("kind", "");
    if (kind == "uniform") return QuantileTable::uniform(j.value("lo", 0.0), j.value("hi", 1.0));
    if (kind == "semicircle") return QuantileTable::semicircle(j.value("radius", 2.0));
    if (kind == "bernoulli") return QuantileTable::bernoulli_pm1();
    if (kind == "constant") return QuantileTable::constant(j.at("value").get<double>());
    if (kind == "atoms")
        return QuantileTable::atoms(j.at("values").get<std::vector<double>>(),
                                    j.at("weights").get<std::vector<double>>());
    if (kind == "values")
        return QuantileTable::from_sorted_values(j.at("values").get<std::vector<double>>());
    throw ConfigError("scenario: unknown quantile table kind '" + kind + "'");
}

inline DeterministicModel parse_model(const json& j) {
    const std::string type = j.value("type", "none");
    if (type == "none") return DeterministicModel::none();
    if (type == "quantile") {
        std::vector<QuantileTable> tables;
        for (const auto& t : j.at("tables")) tables.push_back(parse_table(t));
        return DeterministicModel::quantile(tables, j.value("offsets", std::vector<double>{}),
                                            j.value("quad_m", 4096));
    }
    if (type == "empirical") {
        std::vector<HermMatrix> ms;
        if (j.contains("diagonals")) {
            for (const auto& d : j.at("diagonals")) {
                const auto vals = d.get<std::vector<double>>();
                RVector v(vals.size());
                for (size_t i = 0; i < vals.size(); ++i) v(i) = vals[i];
                ms.push_back(HermMatrix::diagonal(v));
            }
        } else {
            for (const auto& mj : j.at("matrices")) {
                const size_t n = mj.size();
                CMatrix m(n, n);
                for (size_t r = 0; r < n; ++r)
                    for (size_t c = 0; c < n; ++c)
                        m(r, c) = Complex(mj[r][c][0].get<double>(), mj[r][c][1].get<double>());
                ms.push_back(HermMatrix(m));
            }
        }
        return DeterministicModel::empirical(ms);
    }
    throw ConfigError("scenario: unknown model type '" + type + "'");
}

inline FixedPointConfig parse_fixed_point(const json& j) {
    FixedPointConfig cfg;
    cfg.tol = j.value("tol", cfg.tol);
    cfg.max_iter = j.value("max_iter", cfg.max_iter);
    cfg.damping = j.value("damping", cfg.damping);
    cfg.start_im = j.value("start_im", cfg.start_im);
    cfg.continuation_factor = j.value("continuation_factor", cfg.continuation_factor);
    cfg.epsilon_pad = j.value("epsilon_pad", cfg.epsilon_pad);
    if (cfg.tol <= 0 || cfg.damping <= 0 || cfg.damping > 1.0)
        throw ConfigError("scenario: fixed_point requires tol > 0 and damping in (0,1]");
    return cfg;
}

inline Scenario parse_scenario(const json& j) {
    Scenario s;
    try {
        s.name = j.at("name").get<std::string>();
        const std::string kind = j.value("kind", "polynomial");
        if (kind == "polynomial") s.kind = Scenario::Kind::Polynomial;
        else if (kind == "wishart") s.kind = Scenario::Kind::Wishart;
        else if (kind == "channel") s.kind = Scenario::Kind::Channel;
        else throw ConfigError("scenario: unknown kind '" + kind + "'");

        if (j.contains("polynomial")) s.polynomial = parse_polynomial(j.at("polynomial").get<std::string>());
        else if (s.kind != Scenario::Kind::Channel) s.polynomial = NCPolynomial::x(1);

        if (j.contains("model")) s.model = parse_model(j.at("model"));

        if (s.kind == Scenario::Kind::Wishart) {
            const json& w = j.at("wishart");
            s.wishart.r = w.value("r", 1);
            s.wishart.s = w.value("s", std::vector<int>{1});
            s.wishart.N = w.value("n", 100);
            if (w.contains("z"))
                for (const auto& zj : w.at("z")) s.wishart.z.push_back(parse_model(zj));
        }
        if (s.kind == Scenario::Kind::Channel) {
            const json& c = j.at("channel");
            s.channel.L = c.value("L", 1);
            s.channel.r = c.value("r", 1);
            s.channel.t = c.value("t", 1);
            s.channel.sigma2 = c.value("sigma2", std::vector<double>{1.0});
            s.channel.block_rows = c.value("block_rows", 1);
            s.channel.N = c.value("n", 100);
            if (c.contains("C")) for (const auto& m : c.at("C")) s.channel.C.push_back(parse_model(m));
            if (c.contains("D")) for (const auto& m : c.at("D")) s.channel.D.push_back(parse_model(m));
        }

        if (j.contains("grid")) {
            const json& g = j.at("grid");
            s.grid.t_min = g.at("t_min").get<double>();
            s.grid.t_max = g.at("t_max").get<double>();
            s.grid.step = g.at("step").get<double>();
            s.grid.eta = g.at("eta").get<double>();
            if (s.grid.step <= 0 || s.grid.eta <= 0 || s.grid.t_max <= s.grid.t_min)
                throw ConfigError("scenario: grid requires step > 0, eta > 0, t_max > t_min");
        }
        if (j.contains("fixed_point")) s.fixed_point = parse_fixed_point(j.at("fixed_point"));
        s.support_threshold = j.value("support_threshold", 5e-3);
        s.seed = j.value("seed", std::uint64_t(1));
        if (j.contains("experiments"))
            for (const auto& e : j.at("experiments"))
                s.experiments.push_back({e.at("type").get<std::string>(), e});
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("scenario: malformed JSON: ") + ex.what());
    }
    return s;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("scenario: cannot read " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("scenario: invalid JSON in ") + path.string() + ": " + ex.what());
    }
    return parse_scenario(j);
}

// ---- Wishart embedding pipeline --------------------------------------------

struct WishartPipeline {
    NCPolynomial embedded;      // over x = Xt letters and y = (e, Zt) letters
    DeterministicModel model;   // joint quantile coupling of the diagonal family
    double trace_scale = 1.0;   // (r+s)/r
    double atom_weight = 0.0;   // s/r; g_W = trace_scale * g~ - atom_weight / lambda
};

// Hand-simplified embedded image of a w-letter,
//   w_j -> ((r+s)/r) e0 x_j z_j x_j e0,
// equal to the squared-corner expression under the projection relations
// (e_i e_j = delta e_i, e_j z_j = z_j e_j = z_j, e0 e_j = 0), which hold both
// for the sampled diagonal matrices and in the limit algebra.
inline WishartPipeline build_wishart_pipeline(const NCPolynomial& P, const WishartSpec& spec) {
    const int p = spec.p();
    const int q = P.required_y();
    if (q > 0)
        throw ConfigError("wishart pipeline: deterministic letters besides W are not supported here");
    const int s_total = spec.s_total();
    const double c = double(spec.r + s_total) / double(spec.r);

    // y-letter layout: y1 = e0, y_{1+j} = z_j
    auto image = [&](const Letter& l) -> NCPolynomial {
        if (l.kind != LetterKind::X) return NCPolynomial::letter(l);
        const NCPolynomial e0 = NCPolynomial::y(1);
        const NCPolynomial x = NCPolynomial::x(l.index);
        const NCPolynomial z = NCPolynomial::y(1 + l.index);
        return Complex(c) * (e0 * x * z * x * e0);
    };
    WishartPipeline out;
    out.embedded = P.substitute(image);
    out.trace_scale = c;
    out.atom_weight = double(s_total) / double(spec.r);

    // joint coupling: z-blocks fill (0, s/(r+s)] in order, e0 tops it off
    const double total = double(spec.r + s_total);
    std::vector<QuantileTable> tables;
    const double e0_threshold = double(s_total) / total;
    tables.push_back(QuantileTable::atoms({0.0, 1.0}, {e0_threshold, 1.0 - e0_threshold}));
    double off = 0.0;
    for (int j = 0; j < p; ++j) {
        const double width = double(spec.s[j]) / total;
        QuantileTable inner;
        if (spec.z.empty() || spec.z[j].mode == DeterministicModel::Mode::None) {
            inner = QuantileTable::constant(1.0);
        } else if (spec.z[j].mode == DeterministicModel::Mode::Quantile) {
            if (spec.z[j].tables.size() != 1)
                throw ConfigError("wishart pipeline: each Z model must hold one table");
            inner = spec.z[j].tables[0];
        } else {
            const HermMatrix zm = spec.z[j].matrices.at(0);
            std::vector<double> vals;
            for (Eigen::Index i = 0; i < zm.dim(); ++i) vals.push_back(zm.mat()(i, i).real());
            std::sort(vals.begin(), vals.end());
            inner = QuantileTable::from_sorted_values(vals);
        }
        tables.push_back(QuantileTable::window(inner, off, width));
        off += width;
    }
    out.model = DeterministicModel::quantile(tables, {}, 4096);
    return out;
}

// ---- density pipeline ---------------------------------------------------------

struct DensityRun {
    SpectralReport report;
    LinearizationCertificate cert;
};

inline DensityRun run_density(const Scenario& s, int threads) {
    if (s.kind == Scenario::Kind::Channel)
        throw ConfigError("density: channel scenarios support 'sample' and 'check' only");

    NCPolynomial poly = s.polynomial;
    DeterministicModel model = s.model;
    double trace_scale = 1.0, atom_weight = 0.0;
    if (s.kind == Scenario::Kind::Wishart) {
        const auto pipe = build_wishart_pipeline(s.polynomial, s.wishart);
        poly = pipe.embedded;
        model = pipe.model;
        trace_scale = pipe.trace_scale;
        atom_weight = pipe.atom_weight;
    }

    DensityRun out;
    out.cert = linearize(poly, s.fixed_point.epsilon_pad);
    const Pencil& L = out.cert.pencil;
    if (L.q() != model.q())
        throw ConfigError("density: polynomial letters do not match the deterministic model");
    const TransformEvaluator GT(model, L.b, L.k);
    out.report = solve_grid(GT, L, out.cert, s.grid, s.fixed_point, model, threads, s.support_threshold);

    if (s.kind == Scenario::Kind::Wishart) {
        // remove the structural zero-block atom in transform space
        for (size_t i = 0; i < out.report.grid.size(); ++i) {
            const Complex lam(out.report.grid[i], s.grid.eta);
            out.report.stieltjes[i] =
                trace_scale * out.report.stieltjes[i] - atom_weight / lam;
        }
        out.report.density =
            invert_density(out.report.stieltjes, &out.report.diagnostics.min_preclamp_density);
        out.report.support = detect_support(out.report.grid, out.report.density, s.support_threshold);
        out.report.norm_estimate = freespec::norm_estimate(out.report.support);
        out.report.diagnostics.mass = out.report.integrated_mass();
    }
    return out;
}

// Per-trial eigenvalues of the scenario's sampled matrix.
inline std::vector<std::vector<double>> run_sample(const Scenario& s, Eigen::Index N, int trials,
                                                   int threads) {
    std::vector<std::vector<double>> out(trials);
    if (s.kind == Scenario::Kind::Channel) {
        ChannelSpec spec = s.channel;
        parallel_for(trials, threads, [&](int t) {
            GaussianStream rng(s.seed, std::uint64_t(t));
            const auto ch = build_channel(spec, rng);
            const RVector ev = herm_eigenvalues(ch.HHstar);
            out[t].assign(ev.data(), ev.data() + ev.size());
        });
        return out;
    }
    if (s.kind == Scenario::Kind::Wishart) {
        WishartSpec spec = s.wishart;
        spec.N = int(N) / std::max(1, spec.r);
        if (spec.N < 1) throw ConfigError("sample: N too small for the wishart ratios");
        const NCPolynomial canon = s.polynomial.assuming_hermitian_y();
        parallel_for(trials, threads, [&](int t) {
            GaussianStream rng(s.seed, std::uint64_t(t));
            const auto emb = build_wishart_embedding(spec, rng);
            const CMatrix val = canon.evaluate(emb.W, {}, emb.rN);
            const RVector ev = herm_eigenvalues(HermMatrix(val));
            out[t].assign(ev.data(), ev.data() + ev.size());
        });
        return out;
    }
    const NCPolynomial canon = s.polynomial.assuming_hermitian_y();
    const int p = canon.required_x();
    const std::vector<HermMatrix> Yh = realize_model(s.model, N);
    std::vector<CMatrix> Y;
    for (const auto& y : Yh) Y.push_back(y.mat());
    parallel_for(trials, threads, [&](int t) {
        const auto X = detail::sample_gue_family(p, N, s.seed, std::uint64_t(t));
        const RVector ev = herm_eigenvalues(HermMatrix(canon.evaluate(X, Y, N)));
        out[t].assign(ev.data(), ev.data() + ev.size());
    });
    return out;
}

// ---- check runner -----------------------------------------------------------

namespace detail {

inline json decay_to_json(const DecayResult& r) {
    json stats = json::array();
    for (const auto& st : r.stats)
        stats.push_back({{"n", st.n},
                         {"trials", st.trials},
                         {"value", st.value},
                         {"stderr", st.stderr_},
                         {"inconclusive", st.inconclusive}});
    return {{"stats", stats},
            {"slope", r.slope},
            {"intercept", r.intercept},
            {"inconclusive", r.inconclusive},
            {"pass", r.pass}};
}

inline std::vector<int> trials_per_n(const json& e, size_t n_count) {
    if (e.at("trials").is_array()) {
        auto v = e.at("trials").get<std::vector<int>>();
        if (v.size() != n_count) throw ConfigError("check: trials list must match n_list");
        return v;
    }
    return std::vector<int>(n_count, e.at("trials").get<int>());
}

}  // namespace detail

// Runs the scenario's experiment list; the summary carries one entry per
// experiment plus an overall pass flag.
inline json run_check(const Scenario& s, int threads) {
    json experiments = json::array();
    bool all_pass = true;

    std::optional<DensityRun> density;  // computed on demand, shared
    auto need_density = [&]() -> DensityRun& {
        if (!density) density = run_density(s, threads);
        return *density;
    };

    for (const auto& e : s.experiments) {
        json entry{{"type", e.type}};
        if (e.type == "spectrum_inclusion") {
            const auto& d = need_density();
            const int n = e.params.at("n").get<int>();
            const int trials = e.params.at("trials").get<int>();
            const double eps = e.params.at("epsilon").get<double>();
            NCPolynomial poly = s.polynomial;
            DeterministicModel model = s.model;
            if (s.kind == Scenario::Kind::Wishart)
                throw ConfigError("check: use histogram_ks for wishart scenarios");
            const auto res =
                spectrum_inclusion(poly, model, d.report.support, n, trials, eps, s.seed, threads);
            entry["trials"] = res.trials;
            entry["violating_trials"] = res.violating_trials;
            entry["worst_excess"] = res.worst_excess;
            entry["pass"] = res.pass;
        } else if (e.type == "histogram_ks") {
            const auto& d = need_density();
            const int n = e.params.at("n").get<int>();
            const int trials = e.params.at("trials").get<int>();
            const double max_ks = e.params.at("max_ks").get<double>();
            const auto per_trial = run_sample(s, n, trials, threads);
            std::vector<double> pooled;
            for (const auto& v : per_trial) pooled.insert(pooled.end(), v.begin(), v.end());
            const double ks = ks_distance(pooled, d.report);
            entry["ks"] = ks;
            entry["max_ks"] = max_ks;
            entry["pass"] = ks <= max_ks;
        } else if (e.type == "theta_decay") {
            const auto n_list = e.params.at("n_list").get<std::vector<int>>();
            const auto trials = detail::trials_per_n(e.params, n_list.size());
            std::vector<Complex> lambdas;
            for (double im : e.params.value("lambda_im", std::vector<double>{2.0}))
                lambdas.push_back(Complex(0.0, im));
            const double slope_max = e.params.value("slope_max", -1.6);
            const auto cert = linearize(s.polynomial, s.fixed_point.epsilon_pad);
            const auto res = theta_decay(cert.pencil, s.model, n_list, trials, lambdas, s.seed,
                                         threads, slope_max);
            json per_lambda = json::array();
            bool pass = true;
            for (size_t li = 0; li < res.size(); ++li) {
                per_lambda.push_back(detail::decay_to_json(res[li]));
                per_lambda.back()["lambda_im"] = lambdas[li].imag();
            }
            pass = res[0].pass;
            if (res.size() >= 2 && e.params.contains("envelope_factor")) {
                const double factor = e.params.at("envelope_factor").get<double>();
                bool env = true;
                for (size_t ni = 0; ni < n_list.size(); ++ni)
                    env = env && res[0].stats[ni].value <= factor * res[1].stats[ni].value;
                entry["envelope_pass"] = env;
                pass = pass && env;
            }
            entry["per_lambda"] = per_lambda;
            entry["slope"] = res[0].slope;
            entry["pass"] = pass;
        } else if (e.type == "g_difference") {
            const auto n_list = e.params.at("n_list").get<std::vector<int>>();
            const auto trials = detail::trials_per_n(e.params, n_list.size());
            const Complex lambda(0.0, e.params.value("lambda_im", 2.0));
            const double slope_max = e.params.value("slope_max", -1.6);
            const auto cert = linearize(s.polynomial, s.fixed_point.epsilon_pad);
            const auto res = g_difference_decay(cert.pencil, s.model, n_list, trials, lambda, s.seed,
                                                threads, slope_max);
            entry.update(detail::decay_to_json(res));
        } else if (e.type == "sd_residual") {
            const int n = e.params.at("n").get<int>();
            const int trials = e.params.at("trials").get<int>();
            const auto cert = linearize(s.polynomial, s.fixed_point.epsilon_pad);
            const int k = cert.pencil.k;
            const CMatrix lam = Complex(0.0, e.params.value("lambda_im", 2.0)) * identity(k);
            const CMatrix gam = Complex(0.0, e.params.value("gamma_im", 3.0)) * identity(k);
            const auto res = sd_mean_residual(cert.pencil.a, cert.pencil.b, s.model, n, trials, lam,
                                              gam, s.seed, threads);
            entry["residual_norm"] = res.residual_norm;
            entry["stderr"] = res.stderr_;
            entry["pass"] = res.pass;
        } else if (e.type == "quantile_convergence") {
            const int n = e.params.at("n").get<int>();
            const double factor = e.params.value("tolerance_factor", 5.0);
            if (s.model.mode != DeterministicModel::Mode::Quantile)
                throw ConfigError("check: quantile_convergence requires a quantile model");
            double worst = 0.0;
            for (size_t j = 0; j < s.model.tables.size(); ++j) {
                const HermMatrix d = quantile_diag(s.model.tables[j], 0.0, n);
                for (double v = 0.05; v < 0.96; v += 0.05) {
                    const int idx = 1 + int(std::floor(v * n));
                    worst = std::max(worst,
                                     std::abs(d.mat()(idx - 1, idx - 1).real() - s.model.tables[j](v)));
                }
            }
            entry["worst_deviation"] = worst;
            entry["bound"] = factor / std::sqrt(double(n));
            entry["pass"] = worst <= factor / std::sqrt(double(n));
        } else if (e.type == "embed_identity") {
            if (s.kind != Scenario::Kind::Wishart)
                throw ConfigError("check: embed_identity requires a wishart scenario");
            WishartSpec spec = s.wishart;
            spec.N = e.params.value("n", spec.N);
            const double max_dev = e.params.value("max_dev", 1e-10);
            GaussianStream rng(s.seed, 0);
            double worst = 0.0;
            const std::vector<NCPolynomial> suite = {
                NCPolynomial::x(1), NCPolynomial::x(1) * NCPolynomial::x(1),
                NCPolynomial::constant(1.0)};
            for (const auto& mono : suite)
                worst = std::max(worst, embedding_identity_check(mono, spec, {}, rng));
            entry["worst_deviation"] = worst;
            entry["pass"] = worst <= max_dev;
        } else if (e.type == "channel_moment") {
            if (s.kind != Scenario::Kind::Channel)
                throw ConfigError("check: channel_moment requires a channel scenario");
            const int trials = e.params.value("trials", 20);
            const double tol = e.params.value("tolerance", 0.1);
            std::vector<double> vals(trials);
            parallel_for(trials, threads, [&](int t) {
                GaussianStream rng(s.seed, std::uint64_t(t));
                const auto ch = build_channel(s.channel, rng);
                vals[t] = normalized_trace(ch.HHstar.mat()).real();
            });
            double mean = 0.0;
            for (double v : vals) mean += v;
            mean /= double(trials);
            double want = 0.0;
            for (double sg : s.channel.sigma2) want += sg;
            want *= double(s.channel.t);
            entry["mean_trace"] = mean;
            entry["expected"] = want;
            entry["pass"] = std::abs(mean - want) <= tol * want;
        } else {
            throw ConfigError("check: unknown experiment type '" + e.type + "'");
        }
        all_pass = all_pass && entry.value("pass", false);
        experiments.push_back(entry);
    }

    return {{"name", s.name}, {"pass", all_pass}, {"experiments", experiments}};
}

// ---- serialization ----------------------------------------------------------

inline json matrix_to_json(const CMatrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            row.push_back({m(i, j).real(), m(i, j).imag()});
        rows.push_back(row);
    }
    return rows;
}

inline json pencil_to_json(const LinearizationCertificate& cert) {
    json a = json::array();
    for (const auto& m : cert.pencil.a) a.push_back(matrix_to_json(m.mat()));
    json b = json::array();
    for (const auto& m : cert.pencil.b) b.push_back(matrix_to_json(m.mat()));
    return {{"k", cert.pencil.k},
            {"epsilon_pad", cert.epsilon_pad},
            {"a0", matrix_to_json(cert.pencil.a0.mat())},
            {"a", a},
            {"b", b}};
}

inline json report_to_json(const SpectralReport& rep) {
    json support = json::array();
    for (const auto& [a, b] : rep.support) support.push_back({a, b});
    return {{"support", support},
            {"norm_estimate", rep.norm_estimate},
            {"eta", rep.eta},
            {"mass", rep.diagnostics.mass},
            {"unconverged_points", rep.diagnostics.unconverged_points},
            {"max_residual", rep.diagnostics.max_residual},
            {"min_preclamp_density", rep.diagnostics.min_preclamp_density}};
}

inline void write_density_csv(const std::filesystem::path& path, const SpectralReport& rep) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << "t,density\n";
    out.precision(12);
    for (size_t i = 0; i < rep.grid.size(); ++i) out << rep.grid[i] << "," << rep.density[i] << "\n";
}

inline void write_eigenvalue_csv(const std::filesystem::path& path, const std::vector<double>& eigs) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << "eigenvalue\n";
    out.precision(12);
    for (double e : eigs) out << e << "\n";
}

}  // namespace freespec
