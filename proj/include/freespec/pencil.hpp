#pragma once

// Linearization of a selfadjoint noncommutative polynomial into a selfadjoint
// degree-one pencil L = a0 (x) 1 + sum a_j (x) x_j + sum b_j (x) y_j with
// Hermitian k x k coefficients. The contract is the resolvent corner:
// for Hermitian inputs and Im(lambda) > 0, the (1,1) corner block of
// (Lambda_eps(lambda) (x) 1_N - L(X,Y))^{-1} tends, as eps -> 0+, to
// (lambda 1_N - P(X,Y))^{-1}, where Lambda_eps = diag(lambda, i eps, ...).
//
// Construction: recursive monomial splitting. Palindromic monomials
// v_1..v_m c v_m..v_1 get a symmetric chain block with P = U Q^{-1} U*;
// adjoint pairs c w + conj(c) w* get a doubled block built from a bidiagonal
// one-sided chain. Every block's constant part is invertible for all inputs,
// which keeps the off-corner Schur complement nonsingular as eps -> 0.

#include <map>
#include <vector>

#include "freespec/linalg.hpp"
#include "freespec/nc_polynomial.hpp"

namespace freespec {

struct Pencil {
    int k = 1;
    HermMatrix a0;
    std::vector<HermMatrix> a;  // GUE coefficients
    std::vector<HermMatrix> b;  // deterministic coefficients

    int p() const { return int(a.size()); }
    int q() const { return int(b.size()); }

    double coefficient_norm_sq() const {  // sum ||a_j||^2
        double s = 0.0;
        for (const auto& m : a) {
            const double v = op_norm(m);
            s += v * v;
        }
        return s;
    }
};

struct LinearizationCertificate {
    Pencil pencil;
    int corner_dim = 1;       // scalar corner convention: entry (1,1)
    double epsilon_pad = 1e-8;
};

// diag(lambda, i eps, ..., i eps); keeps the evaluation point in the upper
// half-plane so the resolvent machinery applies to the padded pencil.
inline CMatrix lambda_pad(const LinearizationCertificate& cert, Complex lambda) {
    const int k = cert.pencil.k;
    CMatrix out = Complex(0.0, cert.epsilon_pad) * CMatrix::Identity(k, k);
    out(0, 0) = lambda;
    return out;
}

// Undo the corner convention: the (1,1) entry of the partial-traced resolvent
// is the scalar Stieltjes transform of P's distribution.
inline Complex corner_extract(const CMatrix& G, const LinearizationCertificate&) {
    return G(0, 0);
}

inline BlockOperator evaluate_pencil(const Pencil& L, const std::vector<HermMatrix>& X,
                                     const std::vector<HermMatrix>& Y) {
    if (int(X.size()) != L.p() || int(Y.size()) != L.q())
        throw ConfigError("evaluate_pencil: family sizes must match the pencil");
    Eigen::Index n = 0;
    for (const auto& m : X) n = std::max(n, m.dim());
    for (const auto& m : Y) n = std::max(n, m.dim());
    if (n == 0) n = 1;
    for (const auto& m : X)
        if (m.dim() != n) throw ConfigError("evaluate_pencil: dimension mismatch");
    for (const auto& m : Y)
        if (m.dim() != n) throw ConfigError("evaluate_pencil: dimension mismatch");
    CMatrix v = kron(L.a0.mat(), identity(n));
    for (size_t j = 0; j < X.size(); ++j) v += kron(L.a[j].mat(), X[j].mat());
    for (size_t j = 0; j < Y.size(); ++j) v += kron(L.b[j].mat(), Y[j].mat());
    return BlockOperator(L.k, n, HermMatrix(v).mat());
}

namespace detail {

// Degree <= 1 expression with Hermitian letters.
struct AffineEntry {
    Complex c0{0.0, 0.0};
    std::map<Letter, Complex> lin;

    void add_const(Complex c) { c0 += c; }
    void add_letter(const Letter& l, Complex c) { lin[l] += c; }
    AffineEntry star() const {
        AffineEntry out;
        out.c0 = std::conj(c0);
        for (const auto& [l, c] : lin) out.lin[l] = std::conj(c);
        return out;
    }
};

using AffineGrid = std::vector<std::vector<AffineEntry>>;

// Symmetric chain block for a palindromic monomial c * l_0 .. l_{m-1} [center]
// l_{m-1} .. l_0. Produces Q (size x size) with (Q^{-1})_{slot,slot} equal to
// the inner chain, so the unit value is l_0 (Q^{-1})_{slot} l_0.
struct ChainBlock {
    AffineGrid Q;
    int slot = 0;
    int size() const { return int(Q.size()); }
};

inline ChainBlock palindrome_chain(double c, const Word& w) {
    const int d = int(w.size());
    const bool even = (d % 2 == 0);
    const int m = even ? d / 2 : (d - 1) / 2;
    ChainBlock blk;
    if (even) {
        blk.Q.assign(1, std::vector<AffineEntry>(1));
        blk.Q[0][0].add_const(1.0 / c);
        blk.slot = 0;
    } else {
        blk.Q.assign(2, std::vector<AffineEntry>(2));
        blk.Q[0][0].add_letter(w[m], -c);
        blk.Q[0][1].add_const(1.0);
        blk.Q[1][0].add_const(1.0);
        blk.slot = 1;
    }
    for (int j = m - 1; j >= 1; --j) {
        const int s = blk.size();
        AffineGrid grown(s + 2, std::vector<AffineEntry>(s + 2));
        for (int i = 0; i < s; ++i)
            for (int jj = 0; jj < s; ++jj) grown[i][jj] = blk.Q[i][jj];
        grown[blk.slot][s].add_letter(w[j], 1.0);
        grown[s][blk.slot].add_letter(w[j], 1.0);
        grown[s][s + 1].add_const(1.0);
        grown[s + 1][s].add_const(1.0);
        blk.Q = std::move(grown);
        blk.slot = s + 1;
    }
    return blk;
}

}  // namespace detail

// Linearize a selfadjoint polynomial. The input is canonicalized under the
// Hermitian-y convention first (the pencil's deterministic arguments are
// Hermitian); a polynomial that is not selfadjoint after that is rejected.
inline LinearizationCertificate linearize(const NCPolynomial& P, double epsilon_pad = 1e-8) {
    using detail::AffineEntry;
    const NCPolynomial canon = P.assuming_hermitian_y();
    if (!canon.is_selfadjoint(1e-10))
        throw ConfigError("linearize: polynomial is not selfadjoint");

    struct PalUnit { double c; Word w; };
    struct PairUnit { Complex c; Word w; };
    AffineEntry corner;
    std::vector<PalUnit> palindromes;
    std::vector<PairUnit> pairs;

    for (const auto& [w, c] : canon.terms()) {
        const int d = int(w.size());
        if (d == 0) {
            corner.add_const(c);
        } else if (d == 1) {
            corner.add_letter(w[0], c);
        } else {
            const Word ws = word_star(w, /*hermitian_y=*/true);
            if (w == ws) {
                palindromes.push_back({c.real(), w});
            } else if (WordLess{}(w, ws)) {
                pairs.push_back({c, w});
            }
        }
    }

    int k = 1;
    std::vector<detail::ChainBlock> chains;
    chains.reserve(palindromes.size());
    for (const auto& u : palindromes) {
        chains.push_back(detail::palindrome_chain(u.c, u.w));
        k += chains.back().size();
    }
    for (const auto& u : pairs) k += 2 * (int(u.w.size()) - 1);

    detail::AffineGrid E(k, std::vector<AffineEntry>(k));
    E[0][0] = corner;

    int off = 1;
    for (size_t ui = 0; ui < palindromes.size(); ++ui) {
        const auto& blk = chains[ui];
        const Word& w = palindromes[ui].w;
        const int s = blk.size();
        for (int i = 0; i < s; ++i)
            for (int j = 0; j < s; ++j) {
                E[off + i][off + j].c0 -= blk.Q[i][j].c0;
                for (const auto& [l, c] : blk.Q[i][j].lin) E[off + i][off + j].add_letter(l, -c);
            }
        E[0][off + blk.slot].add_letter(w[0], 1.0);
        E[off + blk.slot][0].add_letter(w[0], 1.0);
        off += s;
    }
    for (const auto& u : pairs) {
        const int d = int(u.w.size());
        const int n = d - 1;
        const int uoff = off, voff = off + n;
        E[0][uoff].add_letter(u.w[0], u.c);
        E[uoff][0].add_letter(u.w[0], std::conj(u.c));
        E[0][voff + n - 1].add_letter(u.w[d - 1], 1.0);
        E[voff + n - 1][0].add_letter(u.w[d - 1], 1.0);
        // one-sided chain Q: -1 on the diagonal, inner letters above it;
        // it sits at block (v,u), its conjugate transpose at (u,v).
        for (int i = 0; i < n; ++i) {
            E[voff + i][uoff + i].add_const(-1.0);
            E[uoff + i][voff + i].add_const(-1.0);
        }
        for (int i = 0; i + 1 < n; ++i) {
            E[voff + i][uoff + i + 1].add_letter(u.w[i + 1], 1.0);
            E[uoff + i + 1][voff + i].add_letter(u.w[i + 1], 1.0);
        }
        off += 2 * n;
    }

    const int p = canon.required_x();
    const int q = canon.required_y();
    CMatrix a0 = CMatrix::Zero(k, k);
    std::vector<CMatrix> a(p, CMatrix::Zero(k, k));
    std::vector<CMatrix> b(q, CMatrix::Zero(k, k));
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
            a0(i, j) = E[i][j].c0;
            for (const auto& [l, c] : E[i][j].lin) {
                if (l.kind == LetterKind::X) a[l.index - 1](i, j) += c;
                else b[l.index - 1](i, j) += c;
            }
        }

    LinearizationCertificate cert;
    cert.epsilon_pad = epsilon_pad;
    cert.pencil.k = k;
    cert.pencil.a0 = HermMatrix(a0);
    for (auto& m : a) cert.pencil.a.emplace_back(m);
    for (auto& m : b) cert.pencil.b.emplace_back(m);
    return cert;
}

}  // namespace freespec
