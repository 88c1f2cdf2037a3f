#pragma once

// Dense complex-matrix kernel: Hermitian eigendecomposition, resolvents of
// block operators, partial trace, operator norm, half-plane membership.
// Everything is a thin, immutable layer over Eigen.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <sstream>
#include <vector>

#include "freespec/util.hpp"

namespace freespec {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;

inline CMatrix identity(Eigen::Index n) { return CMatrix::Identity(n, n); }

// Hermitian matrix; the constructor symmetrizes (m + m*)/2 so that 1-ulp
// asymmetry from rounding never leaks into downstream spectral code.
class HermMatrix {
public:
    HermMatrix() = default;

    explicit HermMatrix(const CMatrix& m) {
        if (m.rows() != m.cols()) throw ConfigError("HermMatrix: input must be square");
        m_ = 0.5 * (m + m.adjoint().eval());
    }

    static HermMatrix zero(Eigen::Index n) { return HermMatrix(CMatrix::Zero(n, n)); }
    static HermMatrix identity(Eigen::Index n) { return HermMatrix(CMatrix::Identity(n, n)); }
    static HermMatrix diagonal(const RVector& d) {
        CMatrix m = CMatrix::Zero(d.size(), d.size());
        for (Eigen::Index i = 0; i < d.size(); ++i) m(i, i) = d(i);
        return HermMatrix(m);
    }

    Eigen::Index dim() const { return m_.rows(); }
    const CMatrix& mat() const { return m_; }

private:
    CMatrix m_;
};

// k x k outer structure, n x n inner structure, stored densely as a kn x kn
// matrix with block (u,v) at rows [u*n, (u+1)*n).
struct BlockOperator {
    Eigen::Index k = 0;
    Eigen::Index n = 0;
    CMatrix value;

    BlockOperator() = default;
    BlockOperator(Eigen::Index k_, Eigen::Index n_, CMatrix v) : k(k_), n(n_), value(std::move(v)) {
        if (value.rows() != k * n || value.cols() != k * n)
            throw ConfigError("BlockOperator: dimension must equal k*n");
    }
};

inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
    CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

struct HermEigen {
    RVector values;   // ascending
    CMatrix vectors;  // unitary, columns are eigenvectors
};

inline HermEigen herm_eig(const HermMatrix& m) {
    Eigen::SelfAdjointEigenSolver<CMatrix> solver(m.mat());
    if (solver.info() != Eigen::Success) {
        std::ostringstream msg;
        msg << "herm_eig: eigensolver failed on dim " << m.dim()
            << " matrix, max |entry| = " << m.mat().cwiseAbs().maxCoeff();
        throw NumericalError(msg.str());
    }
    return {solver.eigenvalues(), solver.eigenvectors()};
}

inline RVector herm_eigenvalues(const HermMatrix& m) {
    Eigen::SelfAdjointEigenSolver<CMatrix> solver(m.mat(), Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
        throw NumericalError("herm_eigenvalues: eigensolver failed");
    return solver.eigenvalues();
}

// Im m = (m - m*)/(2i), Hermitian by construction.
inline HermMatrix imag_part(const CMatrix& m) {
    if (m.rows() != m.cols()) throw ConfigError("imag_part: input must be square");
    return HermMatrix((m - m.adjoint().eval()) / Complex(0.0, 2.0));
}

inline HermMatrix real_part(const CMatrix& m) {
    return HermMatrix(0.5 * (m + m.adjoint().eval()));
}

inline double min_imag_eigenvalue(const CMatrix& m) {
    const HermMatrix im = imag_part(m);
    if (im.dim() == 1) return im.mat()(0, 0).real();
    return herm_eigenvalues(im).minCoeff();
}

// Membership in the matrix upper half-plane {Im m > 0}.
inline bool in_upper_half(const CMatrix& m) { return min_imag_eigenvalue(m) > 0.0; }

// Largest singular value via power iteration on m* m with a fixed start
// vector, relative tolerance 1e-10. Avoids a full SVD for large kN.
inline double op_norm(const CMatrix& m) {
    if (m.size() == 0) return 0.0;
    const Eigen::Index n = m.cols();
    Eigen::VectorXcd v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v(i) = Complex(1.0 + 0.5 * std::cos(0.7 * double(i)), 0.25 * std::sin(0.3 * double(i) + 0.4));
    v.normalize();
    double sigma = 0.0;
    constexpr int kMaxIter = 5000;
    for (int it = 0; it < kMaxIter; ++it) {
        Eigen::VectorXcd w = m * v;
        const double s = w.norm();
        if (s == 0.0) return 0.0;
        Eigen::VectorXcd u = m.adjoint() * w;
        const double un = u.norm();
        if (un == 0.0) return s;
        v = u / un;
        if (std::abs(s - sigma) <= 1e-10 * std::max(1.0, s)) return s;
        sigma = s;
    }
    return sigma;
}

inline double op_norm(const HermMatrix& m) { return op_norm(m.mat()); }

// || (Im L)^{-1} || for L in the upper half-plane: 1 / min eigenvalue of Im L.
inline double inv_imag_norm(const CMatrix& lambda) {
    const double lo = min_imag_eigenvalue(lambda);
    if (lo <= 0.0) throw SolverError("inv_imag_norm: matrix is not in the upper half-plane");
    return 1.0 / lo;
}

// (Lambda (x) 1_n - z)^{-1} by dense LU. Lambda (x) 1 does not commute with
// z's eigenbasis for k > 1, so a direct solve is the right primitive here.
inline BlockOperator resolvent(const CMatrix& lambda, const BlockOperator& z) {
    if (lambda.rows() != z.k || lambda.cols() != z.k)
        throw ConfigError("resolvent: Lambda dimension must match block count");
    CMatrix a = kron(lambda, identity(z.n)) - z.value;
    Eigen::PartialPivLU<CMatrix> lu(a);
    CMatrix inv = lu.solve(identity(z.k * z.n));
    if (!inv.allFinite()) throw NumericalError("resolvent: near-singular system");
    return BlockOperator(z.k, z.n, std::move(inv));
}

// (id_k (x) tau_n): entry (u,v) = (1/n) * sum_m b[(u,m),(v,m)].
inline CMatrix partial_trace(const BlockOperator& b) {
    CMatrix out = CMatrix::Zero(b.k, b.k);
    for (Eigen::Index u = 0; u < b.k; ++u)
        for (Eigen::Index v = 0; v < b.k; ++v)
            out(u, v) = b.value.block(u * b.n, v * b.n, b.n, b.n).trace() / double(b.n);
    return out;
}

inline Complex normalized_trace(const CMatrix& m) { return m.trace() / double(m.rows()); }

}  // namespace freespec
