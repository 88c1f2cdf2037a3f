#pragma once

// Matrix models: normalized GUE, rectangular complex Gaussians, quantile
// diagonal matrices, non-white Wishart with its square-GUE embedding, block
// matrices of polynomials, and banded channel matrices.

#include <vector>

#include "freespec/linalg.hpp"
#include "freespec/nc_polynomial.hpp"
#include "freespec/rng.hpp"
#include "freespec/stieltjes.hpp"

namespace freespec {

// Normalized GUE: diagonal entries real N(0, 1/N), off-diagonal entries with
// Re and Im each N(0, 1/(2N)), so tau_N(X^2) -> 1.
inline HermMatrix sample_gue(Eigen::Index n, GaussianStream& rng) {
    if (n < 1) throw ConfigError("sample_gue: N must be >= 1");
    CMatrix m(n, n);
    const double diag_sd = 1.0 / std::sqrt(double(n));
    const double off_sd = 1.0 / std::sqrt(2.0 * double(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        m(i, i) = Complex(diag_sd * rng.normal(), 0.0);
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const Complex z(off_sd * rng.normal(), off_sd * rng.normal());
            m(i, j) = z;
            m(j, i) = std::conj(z);
        }
    }
    return HermMatrix(m);
}

// iid complex Gaussian entries with E|entry|^2 = variance.
inline CMatrix sample_ginibre(Eigen::Index rows, Eigen::Index cols, double variance,
                              GaussianStream& rng) {
    if (rows < 1 || cols < 1) throw ConfigError("sample_ginibre: bad shape");
    const double sd = std::sqrt(variance / 2.0);
    CMatrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = Complex(sd * rng.normal(), sd * rng.normal());
    return m;
}

// diag(lambda_{1+floor(vN)}, ..., lambda_{N+floor(vN)}) with indices mod N,
// where lambda_i = F^{-1}(i/N). The source diagonal is nondecreasing by
// construction; the offset is applied cyclically.
inline HermMatrix quantile_diag(const QuantileTable& f_inv, double v, Eigen::Index n) {
    if (n < 1) throw ConfigError("quantile_diag: N must be >= 1");
    const auto shift = static_cast<Eigen::Index>(std::floor(v * double(n)));
    RVector d(n);
    for (Eigen::Index i = 1; i <= n; ++i) {
        const Eigen::Index idx = (i - 1 + shift) % n + 1;
        d(i - 1) = f_inv(double(idx) / double(n));
    }
    return HermMatrix::diagonal(d);
}

// Realize a deterministic model as explicit Hermitian matrices at dimension n.
inline std::vector<HermMatrix> realize_model(const DeterministicModel& model, Eigen::Index n) {
    std::vector<HermMatrix> out;
    switch (model.mode) {
        case DeterministicModel::Mode::None:
            break;
        case DeterministicModel::Mode::Empirical:
            for (const auto& m : model.matrices) {
                if (m.dim() != n) throw ConfigError("realize_model: empirical dim mismatch");
                out.push_back(m);
            }
            break;
        case DeterministicModel::Mode::Quantile:
            for (size_t j = 0; j < model.tables.size(); ++j)
                out.push_back(quantile_diag(model.tables[j], model.offsets[j], n));
            break;
    }
    return out;
}

// --- Non-white Wishart and its embedding ---------------------------------

// W_j = M_j Z_j M_j^* with M_j an rN x s_jN complex Gaussian of entry
// variance 1/(rN) and Z_j positive definite of size s_jN.
struct WishartSpec {
    int r = 1;
    std::vector<int> s = {1};
    std::vector<DeterministicModel> z;  // one single-matrix model per j; empty = white
    int N = 1;

    int p() const { return int(s.size()); }
    int s_total() const {
        int t = 0;
        for (int v : s) t += v;
        return t;
    }
};

struct WishartEmbedding {
    std::vector<HermMatrix> W;     // rN x rN
    std::vector<CMatrix> M;        // rN x s_jN corners
    std::vector<HermMatrix> Xt;    // (r+s)N GUE matrices
    std::vector<HermMatrix> Zt;    // Z_j embedded in its block
    std::vector<CMatrix> e;        // e[0..p] diagonal projections, partition of identity
    Eigen::Index rN = 0;
    Eigen::Index dim = 0;          // (r+s)N
};

inline HermMatrix realize_z(const WishartSpec& spec, int j) {
    const Eigen::Index dim = Eigen::Index(spec.s[j]) * spec.N;
    if (spec.z.empty() || spec.z[j].mode == DeterministicModel::Mode::None)
        return HermMatrix::identity(dim);
    auto ms = realize_model(spec.z[j], dim);
    if (ms.size() != 1) throw ConfigError("WishartSpec: each Z model must hold one matrix");
    return ms[0];
}

// Samples the big GUE matrices first and reads each M_j off as the scaled
// (0,j)-corner, so the joint law matches the embedding construction exactly.
inline WishartEmbedding build_wishart_embedding(const WishartSpec& spec, GaussianStream& rng) {
    if (spec.r < 1 || spec.N < 1) throw ConfigError("WishartSpec: r and N must be >= 1");
    for (int v : spec.s)
        if (v < 1) throw ConfigError("WishartSpec: s_j must be >= 1");
    const int p = spec.p();
    const Eigen::Index rN = Eigen::Index(spec.r) * spec.N;
    const Eigen::Index dim = Eigen::Index(spec.r + spec.s_total()) * spec.N;
    const double corner_scale = std::sqrt(double(spec.r + spec.s_total()) / double(spec.r));

    WishartEmbedding out;
    out.rN = rN;
    out.dim = dim;

    std::vector<Eigen::Index> block_off(p + 1);
    block_off[0] = rN;
    for (int j = 0; j < p; ++j) block_off[j + 1] = block_off[j] + Eigen::Index(spec.s[j]) * spec.N;
    if (block_off[p] != dim) throw ConfigError("WishartSpec: block bookkeeping mismatch");

    out.e.push_back(CMatrix::Zero(dim, dim));
    out.e[0].block(0, 0, rN, rN) = identity(rN);
    for (int j = 0; j < p; ++j) {
        const Eigen::Index sj = Eigen::Index(spec.s[j]) * spec.N;
        CMatrix ej = CMatrix::Zero(dim, dim);
        ej.block(block_off[j], block_off[j], sj, sj) = identity(sj);
        out.e.push_back(std::move(ej));
    }

    for (int j = 0; j < p; ++j) {
        const Eigen::Index sj = Eigen::Index(spec.s[j]) * spec.N;
        HermMatrix xt = sample_gue(dim, rng);
        CMatrix m = corner_scale * xt.mat().block(0, block_off[j], rN, sj);
        HermMatrix zj = realize_z(spec, j);
        if (zj.dim() != sj) throw ConfigError("WishartSpec: Z_j dimension mismatch");
        CMatrix zt = CMatrix::Zero(dim, dim);
        zt.block(block_off[j], block_off[j], sj, sj) = zj.mat();

        out.W.emplace_back(CMatrix(m * zj.mat() * m.adjoint()));
        out.M.push_back(std::move(m));
        out.Xt.push_back(std::move(xt));
        out.Zt.emplace_back(zt);
    }
    return out;
}

// The embedded image of the letter w_j:
//   ((r+s)/r) * e0 (e0 Xt_j e_j Zt_j + e_j Xt_j e0)^2,
// written over the extended alphabet x_j = Xt_j and y-letters
// (e_0, .., e_p, Zt_1, .., Zt_p, then any original y's shifted past them).
// y-letter layout used below: e_i -> y_{1+i}, Zt_j -> y_{1+p+1+j-1}.
namespace detail {

struct EmbeddingAlphabet {
    int p;          // number of w letters = number of big GUE letters
    int q_orig;     // original y letters
    int e_base() const { return q_orig; }       // e_i = y_{e_base + i + 1}
    int z_base() const { return q_orig + p + 1; }  // Zt_j = y_{z_base + j}
    int total_y() const { return q_orig + p + 1 + p; }
};

inline NCPolynomial embedded_w_letter(const EmbeddingAlphabet& al, int r, int s_total, int j) {
    const double c = double(r + s_total) / double(r);
    const NCPolynomial e0 = NCPolynomial::y(al.e_base() + 1);
    const NCPolynomial ej = NCPolynomial::y(al.e_base() + 1 + j);
    const NCPolynomial xt = NCPolynomial::x(j);
    const NCPolynomial zt = NCPolynomial::y(al.z_base() + j);
    const NCPolynomial inner = e0 * xt * ej * zt + ej * xt * e0;
    return Complex(c) * (e0 * inner * inner);
}

}  // namespace detail

// Substitute every w_j ( = x_j letter of P) by its embedded image and prefix
// with e0; evaluating the result on (Xt, e, Zt, embedded Y) reproduces
// diag(P(W, Y, Y*), 0) exactly.
inline NCPolynomial embed_wishart_polynomial(const NCPolynomial& P, const WishartSpec& spec) {
    detail::EmbeddingAlphabet al{spec.p(), P.required_y()};
    const int s_total = spec.s_total();
    auto image = [&](const Letter& l) -> NCPolynomial {
        switch (l.kind) {
            case LetterKind::X: return detail::embedded_w_letter(al, spec.r, s_total, l.index);
            case LetterKind::Y: return NCPolynomial::y(l.index);
            case LetterKind::YStar: return NCPolynomial::ystar(l.index);
        }
        throw ConfigError("embed_wishart_polynomial: bad letter");
    };
    return NCPolynomial::y(al.e_base() + 1) * P.substitute(image);
}

// Evaluates both sides of the structural identity
//   diag(P(W, Y, Y*), 0) = P_tilde(Xt, Y_tilde, Zt, e)
// on a sampled embedding and returns the relative Frobenius deviation.
inline double embedding_identity_check(const NCPolynomial& P, const WishartSpec& spec,
                                       const std::vector<HermMatrix>& Y, GaussianStream& rng) {
    const WishartEmbedding emb = build_wishart_embedding(spec, rng);
    const int q = P.required_y();
    if (int(Y.size()) < q) throw ConfigError("embedding_identity_check: not enough Y matrices");

    std::vector<HermMatrix> W = emb.W;
    std::vector<CMatrix> Yc;
    for (int j = 0; j < q; ++j) {
        if (Y[j].dim() != emb.rN) throw ConfigError("embedding_identity_check: Y dim mismatch");
        Yc.push_back(Y[j].mat());
    }
    const CMatrix lhs_corner = P.evaluate(W, Yc);
    CMatrix lhs = CMatrix::Zero(emb.dim, emb.dim);
    lhs.block(0, 0, emb.rN, emb.rN) = lhs_corner;

    const NCPolynomial Pt = embed_wishart_polynomial(P, spec);
    std::vector<CMatrix> Yext;
    for (int j = 0; j < q; ++j) {
        CMatrix yt = CMatrix::Zero(emb.dim, emb.dim);
        yt.block(0, 0, emb.rN, emb.rN) = Y[j].mat();
        Yext.push_back(std::move(yt));
    }
    for (const auto& e : emb.e) Yext.push_back(e);
    for (const auto& zt : emb.Zt) Yext.push_back(zt.mat());
    const CMatrix rhs = Pt.evaluate(emb.Xt, Yext);

    const double scale = std::max(1.0, lhs.norm());
    return (lhs - rhs).norm() / scale;
}

// --- Block matrices --------------------------------------------------------

// Assemble the lN x lN block matrix (P_{uv}(X, Y))_{uv}; the grid must be
// adjoint-symmetric (P_{uv} = P_{vu}*).
inline HermMatrix build_block(const std::vector<std::vector<NCPolynomial>>& grid,
                              const std::vector<HermMatrix>& X, const std::vector<CMatrix>& Y) {
    const size_t l = grid.size();
    if (l == 0) throw ConfigError("build_block: empty grid");
    for (const auto& row : grid)
        if (row.size() != l) throw ConfigError("build_block: grid must be square");
    for (size_t u = 0; u < l; ++u)
        for (size_t v = 0; v < l; ++v) {
            const NCPolynomial diff = grid[u][v] - grid[v][u].adjoint();
            for (const auto& [w, c] : diff.terms())
                if (std::abs(c) > 1e-10)
                    throw ConfigError("build_block: grid is not adjoint-symmetric");
        }

    Eigen::Index n = 0;
    for (const auto& x : X) n = std::max(n, x.dim());
    for (const auto& y : Y) n = std::max(n, Eigen::Index(y.rows()));
    if (n == 0) throw ConfigError("build_block: no inputs");
    CMatrix out = CMatrix::Zero(l * n, l * n);
    for (size_t u = 0; u < l; ++u)
        for (size_t v = 0; v < l; ++v)
            out.block(u * n, v * n, n, n) = grid[u][v].evaluate(X, Y);
    return HermMatrix(out);
}

// --- Banded channel matrices ----------------------------------------------

// H is block-Toeplitz banded with block row (A_1 ... A_L) shifting right;
// A_l = C_l M_l D_l with M_l an rN x tN Gaussian of entry variance
// sigma_l^2 / N.
struct ChannelSpec {
    int L = 1;
    int r = 1;
    int t = 1;
    std::vector<double> sigma2 = {1.0};
    std::vector<DeterministicModel> C;  // rN x rN, single matrix each; empty = identity
    std::vector<DeterministicModel> D;  // tN x tN
    int block_rows = 1;
    int N = 1;
};

struct ChannelMatrices {
    CMatrix H;
    HermMatrix HHstar;
    std::vector<CMatrix> taps;  // A_1..A_L
};

inline ChannelMatrices build_channel(const ChannelSpec& spec, GaussianStream& rng) {
    if (spec.L < 1 || int(spec.sigma2.size()) != spec.L)
        throw ConfigError("ChannelSpec: need one variance per tap");
    for (double s : spec.sigma2)
        if (s < 0.0) throw ConfigError("ChannelSpec: negative tap variance");
    const Eigen::Index rN = Eigen::Index(spec.r) * spec.N;
    const Eigen::Index tN = Eigen::Index(spec.t) * spec.N;

    auto single = [&](const std::vector<DeterministicModel>& ms, int l, Eigen::Index dim) -> CMatrix {
        if (ms.empty() || ms[l].mode == DeterministicModel::Mode::None) return identity(dim);
        auto r = realize_model(ms[l], dim);
        if (r.size() != 1) throw ConfigError("ChannelSpec: each C/D model must hold one matrix");
        return r[0].mat();
    };

    ChannelMatrices out;
    for (int l = 0; l < spec.L; ++l) {
        const CMatrix m = sample_ginibre(rN, tN, spec.sigma2[l] / double(spec.N), rng);
        out.taps.push_back(single(spec.C, l, rN) * m * single(spec.D, l, tN));
    }

    const int rows = spec.block_rows;
    const int cols = rows + spec.L - 1;
    out.H = CMatrix::Zero(rows * rN, cols * tN);
    for (int i = 0; i < rows; ++i)
        for (int l = 0; l < spec.L; ++l)
            out.H.block(i * rN, (i + l) * tN, rN, tN) = out.taps[l];
    out.HHstar = HermMatrix(out.H * out.H.adjoint());
    return out;
}

}  // namespace freespec
