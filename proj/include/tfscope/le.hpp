#ifndef TFSCOPE_LE_HPP
#define TFSCOPE_LE_HPP

/**
 * @file le.hpp
 *
 * Laplacian Eigenmaps: a symmetrized k-nearest-neighbour graph over sample
 * rows, its graph Laplacian, and an embedding from the eigenvectors of the
 * smallest nonzero Laplacian eigenvalues.
 *
 * Disconnected graphs are repaired before embedding: components are joined
 * along a minimum spanning tree of their closest point pairs, and each added
 * bridge is recorded in the result so callers can detect the repair.
 */

#include "tfscope/cube.hpp"
#include "tfscope/eigensolver.hpp"
#include "tfscope/error.hpp"
#include "tfscope/parallel.hpp"
#include "tfscope/pca.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

namespace tfscope {

enum class Kernel { binary, heat };
enum class Normalization { unnormalized, symmetric };

inline std::string_view kernel_name(Kernel k) { return k == Kernel::binary ? "binary" : "heat"; }
inline std::string_view normalization_name(Normalization n) {
    return n == Normalization::unnormalized ? "unnormalized" : "symmetric";
}

inline Kernel parse_kernel(std::string_view s) {
    if (s == "binary") {
        return Kernel::binary;
    }
    if (s == "heat") {
        return Kernel::heat;
    }
    fail(Errc::invalid_argument, "unknown kernel '" + std::string(s) + "'");
}

inline Normalization parse_normalization(std::string_view s) {
    if (s == "unnormalized") {
        return Normalization::unnormalized;
    }
    if (s == "symmetric") {
        return Normalization::symmetric;
    }
    fail(Errc::invalid_argument, "unknown normalization '" + std::string(s) + "'");
}

struct GraphRecord {
    std::string rule = "knn"; ///< "knn" or "explicit"
    std::size_t k = 0;
    std::string metric = "euclidean";
    Kernel kernel = Kernel::binary;
    double bandwidth = 0.0; ///< heat-kernel sigma; 0 for binary
};

struct WeightedEdge {
    std::size_t i = 0;
    std::size_t j = 0;
    double weight = 1.0;
};

class NeighborGraph {
public:
    NeighborGraph(SparseMatrix weights, GraphRecord record, std::shared_ptr<const RowMatrix> points = nullptr)
        : weights_(std::move(weights)), record_(std::move(record)), points_(std::move(points)) {
        require(weights_.rows() == weights_.cols(), Errc::invalid_argument, "adjacency must be square");
        require(!points_ || points_->rows() == weights_.rows(), Errc::size_mismatch,
                "point rows differ from node count");
        weights_.makeCompressed();
        for (Eigen::Index c = 0; c < weights_.outerSize(); ++c) {
            for (SparseMatrix::InnerIterator it(weights_, c); it; ++it) {
                require(it.row() != it.col(), Errc::invalid_argument, "self-loops are not allowed");
                require(std::isfinite(it.value()) && it.value() > 0.0, Errc::invalid_argument,
                        "edge weights must be finite and positive");
                require(weights_.coeff(it.col(), it.row()) == it.value(), Errc::invalid_argument,
                        "adjacency must be symmetric");
            }
        }
    }

    /// Undirected graph from an edge list; duplicate edges keep the first weight.
    static NeighborGraph from_edges(std::size_t n, const std::vector<WeightedEdge>& edges, GraphRecord record = {"explicit"}) {
        std::vector<Eigen::Triplet<double>> triplets;
        triplets.reserve(2 * edges.size());
        for (const auto& e : edges) {
            require(e.i < n && e.j < n, Errc::out_of_range, "edge endpoint out of range");
            triplets.emplace_back(static_cast<int>(e.i), static_cast<int>(e.j), e.weight);
            triplets.emplace_back(static_cast<int>(e.j), static_cast<int>(e.i), e.weight);
        }
        SparseMatrix w(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        w.setFromTriplets(triplets.begin(), triplets.end(), [](double first, double) { return first; });
        return NeighborGraph(std::move(w), std::move(record));
    }

    std::size_t n() const { return static_cast<std::size_t>(weights_.rows()); }
    const SparseMatrix& weights() const { return weights_; }
    const GraphRecord& record() const { return record_; }
    const std::shared_ptr<const RowMatrix>& points() const { return points_; }
    double weight(std::size_t i, std::size_t j) const {
        return weights_.coeff(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    std::size_t edge_count() const { return static_cast<std::size_t>(weights_.nonZeros()) / 2; }

    Eigen::VectorXd degrees() const {
        Eigen::VectorXd d = Eigen::VectorXd::Zero(weights_.rows());
        for (Eigen::Index c = 0; c < weights_.outerSize(); ++c) {
            for (SparseMatrix::InnerIterator it(weights_, c); it; ++it) {
                d(it.col()) += it.value();
            }
        }
        return d;
    }

private:
    SparseMatrix weights_;
    GraphRecord record_;
    std::shared_ptr<const RowMatrix> points_;
};

/**
 * Directed kNN under Euclidean distance, symmetrized by union. Heat weights are
 * exp(-dist^2 / sigma^2) with sigma the mean directed kNN distance; binary
 * weights are 1. Ties in distance are broken by lower row index.
 */
inline NeighborGraph build_knn_graph(const RowMatrix& points, std::size_t k, Kernel kernel = Kernel::heat) {
    const std::size_t n = static_cast<std::size_t>(points.rows());
    require(k >= 1, Errc::invalid_argument, "k must be at least 1");
    require(k < n, Errc::invalid_argument, "k must be smaller than the sample count");
    const Eigen::Index p = points.cols();

    std::vector<std::size_t> nbr(n * k);
    std::vector<double> nbr_d2(n * k);
    parallel_for(n, 64, [&](std::size_t begin, std::size_t end) {
        std::vector<std::pair<double, std::size_t>> cand(n);
        for (std::size_t i = begin; i < end; ++i) {
            const double* a = points.data() + static_cast<Eigen::Index>(i) * p;
            for (std::size_t j = 0; j < n; ++j) {
                const double* b = points.data() + static_cast<Eigen::Index>(j) * p;
                double s = 0.0;
#pragma omp simd reduction(+ : s)
                for (Eigen::Index f = 0; f < p; ++f) {
                    const double diff = a[f] - b[f];
                    s += diff * diff;
                }
                cand[j] = {s, j};
            }
            cand[i].first = std::numeric_limits<double>::infinity();
            std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k - 1), cand.end());
            std::sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k));
            for (std::size_t m = 0; m < k; ++m) {
                nbr[i * k + m] = cand[m].second;
                nbr_d2[i * k + m] = cand[m].first;
            }
        }
    });

    GraphRecord record{"knn", k, "euclidean", kernel, 0.0};
    if (kernel == Kernel::heat) {
        double total = 0.0;
        for (double d2 : nbr_d2) {
            total += std::sqrt(d2);
        }
        record.bandwidth = total / static_cast<double>(nbr_d2.size());
    }
    const double inv_sigma2 = record.bandwidth > 0.0 ? 1.0 / (record.bandwidth * record.bandwidth) : 0.0;

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(2 * n * k);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t m = 0; m < k; ++m) {
            const std::size_t j = nbr[i * k + m];
            double w = kernel == Kernel::heat ? std::exp(-nbr_d2[i * k + m] * inv_sigma2) : 1.0;
            w = std::max(w, std::numeric_limits<double>::min());
            triplets.emplace_back(static_cast<int>(i), static_cast<int>(j), w);
            triplets.emplace_back(static_cast<int>(j), static_cast<int>(i), w);
        }
    }
    SparseMatrix w(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    w.setFromTriplets(triplets.begin(), triplets.end(), [](double first, double) { return first; });
    return NeighborGraph(std::move(w), std::move(record), std::make_shared<const RowMatrix>(points));
}

inline NeighborGraph build_knn_graph(const SampleMatrix& matrix, std::size_t k, Kernel kernel = Kernel::heat) {
    return build_knn_graph(matrix.data(), k, kernel);
}

/// Component label per node, labels numbered by lowest member index.
inline std::vector<std::size_t> connected_components(const NeighborGraph& graph) {
    const std::size_t n = graph.n();
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t v) {
        while (parent[v] != v) {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        return v;
    };
    const SparseMatrix& w = graph.weights();
    for (Eigen::Index c = 0; c < w.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(w, c); it; ++it) {
            const std::size_t a = find(static_cast<std::size_t>(it.row()));
            const std::size_t b = find(static_cast<std::size_t>(it.col()));
            if (a != b) {
                parent[std::max(a, b)] = std::min(a, b);
            }
        }
    }
    std::vector<std::size_t> label(n);
    std::vector<std::size_t> root_label(n, n);
    std::size_t next = 0;
    for (std::size_t v = 0; v < n; ++v) {
        const std::size_t r = find(v);
        if (root_label[r] == n) {
            root_label[r] = next++;
        }
        label[v] = root_label[r];
    }
    return label;
}

inline std::size_t component_count(const NeighborGraph& graph) {
    const auto labels = connected_components(graph);
    return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

struct Laplacian {
    SparseMatrix matrix;
    Normalization normalization = Normalization::symmetric;
    Eigen::VectorXd degrees;
};

/// L = D - W, or L_sym = I - D^-1/2 W D^-1/2 (which rejects zero-degree nodes).
inline Laplacian laplacian(const NeighborGraph& graph, Normalization normalization) {
    const Eigen::Index n = static_cast<Eigen::Index>(graph.n());
    Laplacian out;
    out.normalization = normalization;
    out.degrees = graph.degrees();

    Eigen::VectorXd inv_sqrt = Eigen::VectorXd::Ones(n);
    if (normalization == Normalization::symmetric) {
        for (Eigen::Index i = 0; i < n; ++i) {
            require(out.degrees(i) > 0.0, Errc::isolated_node,
                    "node " + std::to_string(i) + " has zero degree; symmetric normalization is undefined");
            inv_sqrt(i) = 1.0 / std::sqrt(out.degrees(i));
        }
    }

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(graph.weights().nonZeros() + n));
    for (Eigen::Index c = 0; c < graph.weights().outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(graph.weights(), c); it; ++it) {
            triplets.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                                  -it.value() * inv_sqrt(it.row()) * inv_sqrt(it.col()));
        }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const double diag = normalization == Normalization::symmetric ? 1.0 : out.degrees(i);
        triplets.emplace_back(static_cast<int>(i), static_cast<int>(i), diag);
    }
    out.matrix.resize(n, n);
    out.matrix.setFromTriplets(triplets.begin(), triplets.end());
    return out;
}

struct Bridge {
    std::size_t from = 0;
    std::size_t to = 0;
    double distance = std::numeric_limits<double>::quiet_NaN(); ///< NaN when the graph carries no points
    double weight = 0.0;
};

struct LeEmbedding {
    RowMatrix coordinates;       ///< n x d
    Eigen::VectorXd degrees;     ///< of the repaired graph
    Eigen::VectorXd eigenvalues; ///< d, ascending, trivial eigenvalue excluded
    double trivial_eigenvalue = 0.0;
    std::size_t component_count = 1;
    std::vector<Bridge> bridges; ///< non-empty iff the graph was repaired
    Normalization normalization = Normalization::symmetric;
    double max_residual = 0.0;
    GraphRecord graph;
};

/**
 * Joins components along a spanning tree of closest inter-component pairs.
 * Heat-kernel bridges are floored at the smallest existing edge weight. Without stored points the lowest-index node of each component is chained to
 * component 0 with the smallest existing edge weight (1 if there are none).
 */
inline NeighborGraph bridge_components(const NeighborGraph& graph, std::vector<Bridge>* added = nullptr) {
    const auto labels = connected_components(graph);
    const std::size_t ncomp = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    if (ncomp <= 1) {
        return graph;
    }
    const std::size_t n = graph.n();
    std::vector<Bridge> bridges;

    if (!graph.points()) {
        std::vector<std::size_t> first(ncomp, n);
        for (std::size_t v = 0; v < n; ++v) {
            first[labels[v]] = std::min(first[labels[v]], v);
        }
        double w = graph.weights().nonZeros() > 0 ? std::numeric_limits<double>::infinity() : 1.0;
        for (Eigen::Index c = 0; c < graph.weights().outerSize(); ++c) {
            for (SparseMatrix::InnerIterator it(graph.weights(), c); it; ++it) {
                w = std::min(w, it.value());
            }
        }
        for (std::size_t c = 1; c < ncomp; ++c) {
            bridges.push_back({first[0], first[c], std::numeric_limits<double>::quiet_NaN(), w});
        }
    } else {
        // Closest pair for every component pair, then Kruskal over components.
        const RowMatrix& pts = *graph.points();
        using Pair = std::tuple<double, std::size_t, std::size_t>;
        const Pair none{std::numeric_limits<double>::infinity(), n, n};
        std::vector<Pair> best(ncomp * ncomp, none);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                if (labels[i] == labels[j]) {
                    continue;
                }
                const auto [ca, cb] = std::minmax(labels[i], labels[j]);
                const double d2 = (pts.row(static_cast<Eigen::Index>(i)) - pts.row(static_cast<Eigen::Index>(j))).squaredNorm();
                Pair& slot = best[ca * ncomp + cb];
                if (d2 < std::get<0>(slot)) {
                    slot = {d2, i, j};
                }
            }
        }
        std::vector<std::tuple<double, std::size_t, std::size_t, std::size_t, std::size_t>> candidates;
        for (std::size_t ca = 0; ca < ncomp; ++ca) {
            for (std::size_t cb = ca + 1; cb < ncomp; ++cb) {
                const Pair& slot = best[ca * ncomp + cb];
                if (std::get<1>(slot) < n) {
                    candidates.emplace_back(std::get<0>(slot), ca, cb, std::get<1>(slot), std::get<2>(slot));
                }
            }
        }
        std::sort(candidates.begin(), candidates.end());
        std::vector<std::size_t> parent(ncomp);
        std::iota(parent.begin(), parent.end(), std::size_t{0});
        auto find = [&](std::size_t v) {
            while (parent[v] != v) {
                v = parent[v] = parent[parent[v]];
            }
            return v;
        };
        const GraphRecord& rec = graph.record();
        // A heat weight underflows for far components; flooring at the weakest
        // existing edge keeps the bridge visible to the eigensolver.
        double floor = std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < graph.weights().outerSize(); ++c) {
            for (SparseMatrix::InnerIterator it(graph.weights(), c); it; ++it) {
                floor = std::min(floor, it.value());
            }
        }
        if (!std::isfinite(floor)) {
            floor = std::numeric_limits<double>::min();
        }
        for (const auto& [d2, ca, cb, i, j] : candidates) {
            const std::size_t ra = find(ca);
            const std::size_t rb = find(cb);
            if (ra == rb) {
                continue;
            }
            parent[std::max(ra, rb)] = std::min(ra, rb);
            double w = 1.0;
            if (rec.kernel == Kernel::heat && rec.bandwidth > 0.0) {
                w = std::max(std::exp(-d2 / (rec.bandwidth * rec.bandwidth)), floor);
            }
            bridges.push_back({i, j, std::sqrt(d2), w});
        }
    }

    std::vector<Eigen::Triplet<double>> triplets;
    for (Eigen::Index c = 0; c < graph.weights().outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(graph.weights(), c); it; ++it) {
            triplets.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
        }
    }
    for (const auto& b : bridges) {
        triplets.emplace_back(static_cast<int>(b.from), static_cast<int>(b.to), b.weight);
        triplets.emplace_back(static_cast<int>(b.to), static_cast<int>(b.from), b.weight);
    }
    SparseMatrix w(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    w.setFromTriplets(triplets.begin(), triplets.end());
    if (added) {
        *added = bridges;
    }
    return NeighborGraph(std::move(w), graph.record(), graph.points());
}

/**
 * Coordinates come from the eigenvectors of the d smallest nonzero eigenvalues
 * of the chosen Laplacian; the trivial null vector is dropped. Unnormalized:
 * L v = lambda v, columns orthonormal. Symmetric: L_sym v = lambda v, reported
 * as f = D^{-1/2} v (so L f = lambda D f), columns D-orthonormal. Without the
 * D^{-1/2} map, low-degree samples at the edges of the manifold are pulled
 * toward the origin. Signs follow the PCA convention.
 */
inline LeEmbedding le_embed(const NeighborGraph& graph, std::size_t d,
                            Normalization normalization = Normalization::symmetric, const EigenOptions& options = {}) {
    const std::size_t n = graph.n();
    require(d >= 1 && d + 1 <= n, Errc::out_of_range, "embedding dimension must lie in [1, n-1]");

    LeEmbedding out;
    out.normalization = normalization;
    out.graph = graph.record();
    out.component_count = component_count(graph);
    const NeighborGraph repaired = bridge_components(graph, &out.bridges);

    const Laplacian lap = laplacian(repaired, normalization);
    const EigenPairs pairs = smallest_eigenpairs(lap.matrix, static_cast<Eigen::Index>(d + 1), options);
    out.trivial_eigenvalue = pairs.values(0);
    out.eigenvalues = pairs.values.tail(static_cast<Eigen::Index>(d));
    out.coordinates = pairs.vectors.rightCols(static_cast<Eigen::Index>(d));
    out.degrees = lap.degrees;
    if (normalization == Normalization::symmetric) {
        out.coordinates = lap.degrees.cwiseSqrt().cwiseInverse().asDiagonal() * out.coordinates;
    }
    for (Eigen::Index j = 0; j < out.coordinates.cols(); ++j) {
        pin_sign(out.coordinates.col(j));
    }
    out.max_residual = pairs.max_residual;
    return out;
}

} // namespace tfscope

#endif
