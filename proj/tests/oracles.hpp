#pragma once

// Independent reference computations. Nothing here calls into the library's
// numerical code; each oracle takes a different route to the same answer.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <cstdint>
#include <map>
#include <queue>
#include <random>
#include <utility>
#include <vector>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Cyclic Jacobi rotations for a small symmetric matrix; eigenvalues ascending.
inline std::pair<Vector, Matrix> jacobi_eigen(Matrix a, int sweeps = 100) {
    const Eigen::Index n = a.rows();
    Matrix v = Matrix::Identity(n, n);
    for (int s = 0; s < sweeps; ++s) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                off += a(p, q) * a(p, q);
            }
        }
        if (off < 1e-30) {
            break;
        }
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) {
                    continue;
                }
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - sn * akq;
                    a(k, q) = sn * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - sn * aqk;
                    a(q, k) = sn * apk + c * aqk;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - sn * vkq;
                    v(k, q) = sn * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](auto x, auto y) { return a(x, x) < a(y, y); });
    Vector vals(n);
    Matrix vecs(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        vals(i) = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
        vecs.col(i) = v.col(order[static_cast<std::size_t>(i)]);
    }
    return {vals, vecs};
}

struct Edge {
    std::size_t i, j;
    double w;
};

inline Matrix dense_laplacian(std::size_t n, const std::vector<Edge>& edges, bool symmetric) {
    Matrix w = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (const Edge& e : edges) {
        w(static_cast<Eigen::Index>(e.i), static_cast<Eigen::Index>(e.j)) = e.w;
        w(static_cast<Eigen::Index>(e.j), static_cast<Eigen::Index>(e.i)) = e.w;
    }
    const Vector deg = w.rowwise().sum();
    Matrix l = Matrix(deg.asDiagonal()) - w;
    if (symmetric) {
        const Vector s = deg.cwiseSqrt().cwiseInverse();
        l = s.asDiagonal() * l * s.asDiagonal();
    }
    return l;
}

/// Connected components by breadth-first search.
inline std::size_t bfs_components(std::size_t n, const std::vector<Edge>& edges) {
    std::vector<std::vector<std::size_t>> adj(n);
    for (const Edge& e : edges) {
        adj[e.i].push_back(e.j);
        adj[e.j].push_back(e.i);
    }
    std::vector<bool> seen(n, false);
    std::size_t count = 0;
    for (std::size_t s = 0; s < n; ++s) {
        if (seen[s]) continue;
        ++count;
        std::queue<std::size_t> q;
        q.push(s);
        seen[s] = true;
        while (!q.empty()) {
            const std::size_t u = q.front();
            q.pop();
            for (std::size_t v : adj[u]) {
                if (!seen[v]) {
                    seen[v] = true;
                    q.push(v);
                }
            }
        }
    }
    return count;
}

/// PCA through the thin SVD of the centered data: eigenvalues s^2 / (n - 1), right singular vectors.
struct SvdPca {
    Vector eigenvalues;
    Matrix basis; // p x k
};

inline SvdPca svd_pca(const Matrix& x, Eigen::Index k) {
    const Matrix c = x.rowwise() - x.colwise().mean();
    Eigen::JacobiSVD<Matrix> svd(c, Eigen::ComputeThinV);
    SvdPca out;
    out.eigenvalues = svd.singularValues().head(k).array().square() / static_cast<double>(x.rows() - 1);
    out.basis = svd.matrixV().leftCols(k);
    return out;
}

/// Largest principal angle between the column spans of a and b (radians).
inline double max_principal_angle(const Matrix& a, const Matrix& b) {
    const Matrix qa = Eigen::HouseholderQR<Matrix>(a).householderQ() * Matrix::Identity(a.rows(), a.cols());
    const Matrix qb = Eigen::HouseholderQR<Matrix>(b).householderQ() * Matrix::Identity(b.rows(), b.cols());
    Eigen::JacobiSVD<Matrix> svd(qa.transpose() * qb);
    const double smallest = std::min(1.0, svd.singularValues().minCoeff());
    // asin of the sine gives better resolution for tiny angles than acos of the cosine.
    const Matrix resid = qb - qa * (qa.transpose() * qb);
    Eigen::JacobiSVD<Matrix> rs(resid);
    const double sine = std::min(1.0, rs.singularValues().maxCoeff());
    return smallest > 0.9 ? std::asin(sine) : std::acos(smallest);
}

/// Mean silhouette with Euclidean distances, by brute force.
inline double silhouette(const Matrix& x, const std::vector<int>& labels) {
    const Eigen::Index n = x.rows();
    std::map<int, std::size_t> sizes;
    for (int l : labels) ++sizes[l];
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        std::map<int, double> sum;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i != j) sum[labels[static_cast<std::size_t>(j)]] += (x.row(i) - x.row(j)).norm();
        }
        const int own = labels[static_cast<std::size_t>(i)];
        if (sizes[own] < 2) continue;
        const double a = sum[own] / static_cast<double>(sizes[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [l, s] : sum) {
            if (l != own) b = std::min(b, s / static_cast<double>(sizes[l]));
        }
        total += (b - a) / std::max(a, b);
    }
    return total / static_cast<double>(n);
}

/**
 * Strict linear separability of two planar point sets. Any strict separator
 * can be rotated until it touches two points, so candidate normals are the
 * perpendiculars of all point pairs, nudged both ways.
 */
inline bool linearly_separable_2d(const Matrix& a, const Matrix& b) {
    Matrix all(a.rows() + b.rows(), 2);
    all << a, b;
    auto separates = [&](double nx, double ny) {
        double amax = -1e300, amin = 1e300, bmax = -1e300, bmin = 1e300;
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            const double p = nx * a(i, 0) + ny * a(i, 1);
            amax = std::max(amax, p);
            amin = std::min(amin, p);
        }
        for (Eigen::Index i = 0; i < b.rows(); ++i) {
            const double p = nx * b(i, 0) + ny * b(i, 1);
            bmax = std::max(bmax, p);
            bmin = std::min(bmin, p);
        }
        return amax < bmin || bmax < amin;
    };
    for (Eigen::Index i = 0; i < all.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < all.rows(); ++j) {
            const double dx = all(j, 0) - all(i, 0), dy = all(j, 1) - all(i, 1);
            const double base = std::atan2(dx, -dy);
            for (double eps : {-1e-7, 1e-7}) {
                if (separates(std::cos(base + eps), std::sin(base + eps))) return true;
            }
        }
    }
    return false;
}

/// Entropy-matching bandwidth for one row by scalar bisection on sigma (not beta).
inline std::vector<double> conditional_row(const std::vector<double>& sq_dist, std::size_t i, double perplexity) {
    const double target = std::log(perplexity);
    double lo = 1e-10, hi = 1e10;
    std::vector<double> p(sq_dist.size());
    for (int it = 0; it < 400; ++it) {
        const double sigma = std::sqrt(lo * hi);
        double z = 0.0;
        for (std::size_t j = 0; j < p.size(); ++j) {
            p[j] = j == i ? 0.0 : std::exp(-sq_dist[j] / (2.0 * sigma * sigma));
            z += p[j];
        }
        double h = 0.0;
        for (std::size_t j = 0; j < p.size(); ++j) {
            p[j] /= z;
            if (p[j] > 0.0) h -= p[j] * std::log(p[j]);
        }
        (h > target ? hi : lo) = sigma;
    }
    return p;
}

/// Best sum-to-one, nonnegative 3-weight fit found on a simplex grid plus local refinement.
inline std::pair<std::array<double, 3>, double> grid_simplex_fit(const Matrix& s, const Vector& x, int steps = 200) {
    auto resid = [&](double a, double b) {
        const double c = 1.0 - a - b;
        return (a * s.row(0).transpose() + b * s.row(1).transpose() + c * s.row(2).transpose() - x).norm();
    };
    double best = 1e300, ba = 0, bb = 0;
    for (int i = 0; i <= steps; ++i) {
        for (int j = 0; i + j <= steps; ++j) {
            const double a = double(i) / steps, b = double(j) / steps;
            const double r = resid(a, b);
            if (r < best) { best = r; ba = a; bb = b; }
        }
    }
    double h = 1.0 / steps;
    for (int round = 0; round < 60; ++round) {
        bool moved = false;
        for (int da = -1; da <= 1; ++da) {
            for (int db = -1; db <= 1; ++db) {
                const double a = std::clamp(ba + da * h, 0.0, 1.0);
                const double b = std::clamp(bb + db * h, 0.0, 1.0 - a);
                const double r = resid(a, b);
                if (r < best) { best = r; ba = a; bb = b; moved = true; }
            }
        }
        if (!moved) h *= 0.5;
    }
    return {{ba, bb, 1.0 - ba - bb}, best};
}

} // namespace oracle
