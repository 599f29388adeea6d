#ifndef TFSCOPE_EIGENSOLVER_HPP
#define TFSCOPE_EIGENSOLVER_HPP

#include "tfscope/error.hpp"
#include "tfscope/rng.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <string>

namespace tfscope {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct EigenOptions {
    /// Absolute residual bound ||A v - lambda v|| for unit v, scaled by max(1, max|A_ii|).
    double tolerance = 1e-8;
    int max_iterations = 1000;
    /// Problems up to this size are solved densely.
    Eigen::Index dense_limit = 2000;
    bool force_iterative = false;
    std::uint64_t seed = 0;
};

struct EigenPairs {
    Eigen::VectorXd values;  ///< ascending
    Eigen::MatrixXd vectors; ///< orthonormal columns
    double max_residual = 0.0;
    int iterations = 0;
    bool dense = false;
};

namespace detail {

inline double max_residual(const SparseMatrix& a, const Eigen::VectorXd& values, const Eigen::MatrixXd& vectors) {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < values.size(); ++j) {
        const Eigen::VectorXd r = a * vectors.col(j) - values(j) * vectors.col(j);
        worst = std::max(worst, r.norm());
    }
    return worst;
}

inline Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& x) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
    return qr.householderQ() * Eigen::MatrixXd::Identity(x.rows(), x.cols());
}

} // namespace detail

/**
 * The `nev` smallest eigenpairs of a symmetric positive semidefinite sparse
 * matrix.
 *
 * Small problems go through a dense self-adjoint solver. Larger ones use block
 * subspace iteration on the shift-inverted operator (A + sigma I)^-1 with a
 * sparse LDL^T factorization and Rayleigh-Ritz on A itself, so repeated
 * eigenvalues (e.g. one zero per connected component) are resolved as a block.
 */
inline EigenPairs smallest_eigenpairs(const SparseMatrix& a, Eigen::Index nev, const EigenOptions& options = {}) {
    const Eigen::Index n = a.rows();
    require(a.cols() == n, Errc::invalid_argument, "matrix must be square");
    require(nev >= 1 && nev <= n, Errc::out_of_range, "requested eigenpair count out of range");

    double scale = 1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        scale = std::max(scale, std::abs(a.coeff(i, i)));
    }

    EigenPairs out;
    if (n <= options.dense_limit && !options.force_iterative) {
        const Eigen::MatrixXd dense = Eigen::MatrixXd(a);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(dense);
        require(solver.info() == Eigen::Success, Errc::convergence, "dense eigendecomposition failed");
        out.values = solver.eigenvalues().head(nev);
        out.vectors = solver.eigenvectors().leftCols(nev);
        out.dense = true;
        out.max_residual = detail::max_residual(a, out.values, out.vectors);
        return out;
    }

    const Eigen::Index block = std::min(n, std::max<Eigen::Index>(2 * nev, nev + 8));
    const double shift = 1e-6 * scale;
    SparseMatrix shifted = a;
    for (Eigen::Index i = 0; i < n; ++i) {
        shifted.coeffRef(i, i) += shift;
    }
    Eigen::SimplicialLDLT<SparseMatrix> factor(shifted);
    require(factor.info() == Eigen::Success, Errc::convergence, "sparse factorization of shifted operator failed");

    CounterRng rng(options.seed, streams::eigensolver);
    Eigen::MatrixXd x(n, block);
    for (Eigen::Index j = 0; j < block; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            x(i, j) = rng.normal();
        }
    }
    x = detail::orthonormalize(x);

    const double tol = options.tolerance * scale;
    for (int iter = 1; iter <= options.max_iterations; ++iter) {
        const Eigen::MatrixXd y = factor.solve(x);
        const Eigen::MatrixXd q = detail::orthonormalize(y);
        const Eigen::MatrixXd aq = a * q;
        Eigen::MatrixXd h = q.transpose() * aq;
        h = 0.5 * (h + h.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ritz(h);
        x = q * ritz.eigenvectors();
        const Eigen::MatrixXd ax = aq * ritz.eigenvectors();

        double worst = 0.0;
        for (Eigen::Index j = 0; j < nev; ++j) {
            worst = std::max(worst, (ax.col(j) - ritz.eigenvalues()(j) * x.col(j)).norm());
        }
        if (worst <= tol) {
            out.values = ritz.eigenvalues().head(nev);
            out.vectors = x.leftCols(nev);
            out.iterations = iter;
            out.max_residual = worst;
            return out;
        }
    }
    fail(Errc::convergence, "subspace iteration did not reach residual " + std::to_string(tol) + " within " +
                                std::to_string(options.max_iterations) + " iterations");
}

} // namespace tfscope

#endif
