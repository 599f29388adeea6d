#ifndef TFSCOPE_PCA_HPP
#define TFSCOPE_PCA_HPP

/**
 * @file pca.hpp
 *
 * Principal components / empirical orthogonal functions of a sample matrix.
 *
 * The decomposition is computed in feature space: the p x p covariance of the
 * mean-centred rows is eigendecomposed, which is cheap because the number of
 * time steps is far below the number of pixels. EOFs are the eigenvectors
 * (time patterns), scores are the per-sample projections (the PC values that
 * get mapped back onto the grid).
 */

#include "tfscope/cube.hpp"
#include "tfscope/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

namespace tfscope {

struct LinearDecomposition {
    Eigen::RowVectorXd mean;           ///< per-feature mean over samples
    Eigen::MatrixXd eofs;              ///< p x k, orthonormal columns
    RowMatrix scores;                  ///< n x k
    Eigen::VectorXd eigenvalues;       ///< k, non-increasing, >= 0
    Eigen::VectorXd variance_fractions;///< k, eigenvalue / total variance
    double total_variance = 0.0;       ///< trace of the full covariance

    Eigen::Index k() const { return eofs.cols(); }
};

/// Flips v so that its largest-magnitude entry (first one on ties) is positive.
template <typename Vector>
void pin_sign(Vector&& v) {
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double a = std::abs(v(i));
        if (a > best_abs) {
            best_abs = a;
            best = i;
        }
    }
    if (v.size() > 0 && v(best) < 0.0) {
        v = -v;
    }
}

inline LinearDecomposition pca_eof(const RowMatrix& data, Eigen::Index k) {
    const Eigen::Index n = data.rows();
    const Eigen::Index p = data.cols();
    require(n >= 2, Errc::invalid_argument, "principal components need at least 2 samples");
    require(k >= 1 && k <= std::min(n, p), Errc::out_of_range,
            "k must lie in [1, min(n_samples, n_features)] = [1, " + std::to_string(std::min(n, p)) + "]");

    LinearDecomposition out;
    out.mean = data.colwise().mean();
    const RowMatrix centered = data.rowwise() - out.mean;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(p, p);
    cov.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose(), 1.0 / static_cast<double>(n - 1));
    cov = cov.selfadjointView<Eigen::Lower>();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    require(solver.info() == Eigen::Success, Errc::convergence, "covariance eigendecomposition failed");

    // Eigen returns ascending order; reverse into variance order.
    out.total_variance = cov.trace();
    out.eofs.resize(p, k);
    out.eigenvalues.resize(k);
    for (Eigen::Index j = 0; j < k; ++j) {
        out.eigenvalues(j) = std::max(0.0, solver.eigenvalues()(p - 1 - j));
        out.eofs.col(j) = solver.eigenvectors().col(p - 1 - j);
        pin_sign(out.eofs.col(j));
    }
    out.variance_fractions = out.total_variance > 0.0 ? Eigen::VectorXd(out.eigenvalues / out.total_variance)
                                                      : Eigen::VectorXd(Eigen::VectorXd::Zero(k));
    out.scores = centered * out.eofs;
    return out;
}

inline LinearDecomposition pca_eof(const SampleMatrix& matrix, Eigen::Index k) { return pca_eof(matrix.data(), k); }

/// mean + scores[:, :k_used] * eofs[:, :k_used]^T
inline RowMatrix reconstruct(const LinearDecomposition& d, Eigen::Index k_used) {
    require(k_used >= 0 && k_used <= d.k(), Errc::out_of_range, "k_used must lie in [0, k]");
    RowMatrix out = d.scores.leftCols(k_used) * d.eofs.leftCols(k_used).transpose();
    out.rowwise() += d.mean;
    return out;
}

inline RowMatrix project(const LinearDecomposition& d, const RowMatrix& rows) {
    require(rows.cols() == d.mean.size(), Errc::width_mismatch,
            "row width " + std::to_string(rows.cols()) + " differs from " + std::to_string(d.mean.size()) + " features");
    return (rows.rowwise() - d.mean) * d.eofs;
}

} // namespace tfscope

#endif
