#ifndef TFSCOPE_TSNE_HPP
#define TFSCOPE_TSNE_HPP

/**
 * @file tsne.hpp
 *
 * Exact t-SNE and PC(t-SNE).
 *
 * Input affinities are Gaussian conditionals whose per-point bandwidth is
 * bisected to a target perplexity, symmetrized into a joint distribution P.
 * The map is optimized by gradient descent on KL(P || Q) with a Student-t
 * (one degree of freedom) output kernel, momentum, per-coordinate gains and
 * early exaggeration.
 *
 * All n x n work on Q is evaluated row by row and never stored, so memory is
 * dominated by P (n^2 doubles). P depends only on the data and the perplexity
 * and is shared across the realizations of pc_tsne().
 *
 * PC(t-SNE) z-scores the two columns of each of R realizations, stacks them
 * into an n x 2R matrix and takes its principal components: samples that land
 * together across runs end up together in the leading components.
 */

#include "tfscope/cube.hpp"
#include "tfscope/error.hpp"
#include "tfscope/parallel.hpp"
#include "tfscope/pca.hpp"
#include "tfscope/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tfscope {

struct TsneParams {
    double perplexity = 30.0;
    int out_dims = 2;
    int max_iter = 1000;
    double exaggeration = 12.0;
    int exaggeration_iters = 250;
    /// Defaults to max(n / exaggeration, 50) when unset.
    std::optional<double> learning_rate;
    double momentum = 0.5;
    double final_momentum = 0.8;
    std::uint64_t seed = 0;
    double init_stddev = 1e-4;
};

inline double resolve_learning_rate(const TsneParams& params, std::size_t n) {
    if (params.learning_rate) {
        return *params.learning_rate;
    }
    return std::max(static_cast<double>(n) / params.exaggeration, 50.0);
}

inline void validate_params(const TsneParams& params, std::size_t n) {
    require(n >= 4, Errc::invalid_argument, "t-SNE needs at least 4 samples");
    require(params.out_dims == 2, Errc::invalid_argument, "only 2-dimensional maps are supported");
    require(params.max_iter >= 1, Errc::invalid_argument, "max_iter must be at least 1");
    require(params.perplexity >= 1.0 && params.perplexity <= static_cast<double>(n - 1) / 3.0, Errc::invalid_argument,
            "perplexity must lie in [1, (n-1)/3] = [1, " + std::to_string(static_cast<double>(n - 1) / 3.0) + "]");
    require(params.exaggeration >= 1.0 && params.exaggeration_iters >= 0, Errc::invalid_argument,
            "early exaggeration must be >= 1 with a non-negative duration");
    require(!params.learning_rate || *params.learning_rate > 0.0, Errc::invalid_argument,
            "learning rate must be positive");
}

// ---------------------------------------------------------------------------
// Input affinities

struct RowCalibration {
    double beta = 0.0;       ///< precision 1 / (2 sigma^2) applied to squared distances
    double perplexity = 0.0; ///< achieved 2^H, H in bits
    int steps = 0;
};

namespace detail {

inline constexpr int max_bisection_steps = 200;
inline constexpr double perplexity_tolerance = 1e-3;

/**
 * Fills out[j] = p_{j|i} from squared distances d[0..n) of point i. The
 * bandwidth is bisected on the precision until the achieved perplexity is within
 * 1e-6 of the target (accepting anything within 1e-3 once steps run out).
 */
inline RowCalibration calibrate_row(const double* d, std::size_t n, std::size_t i, double perplexity, double* out) {
    double dmin = std::numeric_limits<double>::infinity();
    double dmean = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        if (j != i) {
            dmin = std::min(dmin, d[j]);
            dmean += d[j];
        }
    }
    dmean = dmean / static_cast<double>(n - 1) - dmin;

    const double target = std::log(perplexity);
    double beta = dmean > 0.0 ? 1.0 / dmean : 1.0;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    RowCalibration cal;
    for (cal.steps = 1; cal.steps <= max_bisection_steps; ++cal.steps) {
        double sum = 0.0;
        double weighted = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) {
                out[j] = 0.0;
                continue;
            }
            const double shifted = d[j] - dmin;
            const double w = std::exp(-beta * shifted);
            out[j] = w;
            sum += w;
            weighted += shifted * w;
        }
        const double entropy = std::log(sum) + beta * weighted / sum; // nats
        cal.beta = beta;
        cal.perplexity = std::exp(entropy);
        for (std::size_t j = 0; j < n; ++j) {
            out[j] /= sum;
        }
        if (std::abs(cal.perplexity - perplexity) < 1e-6) {
            return cal;
        }
        if (entropy > target) {
            lo = beta;
            beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (lo + hi);
        } else {
            hi = beta;
            beta = 0.5 * (lo + hi);
        }
    }
    cal.steps = max_bisection_steps;
    if (std::abs(cal.perplexity - perplexity) >= perplexity_tolerance) {
        fail(Errc::convergence, "perplexity bisection for point " + std::to_string(i) + " stalled at " +
                                    std::to_string(cal.perplexity) + " (target " + std::to_string(perplexity) + ")");
    }
    return cal;
}

} // namespace detail

struct Conditionals {
    RowMatrix p; ///< row i holds p_{j|i}; zero diagonal
    std::vector<RowCalibration> calibration;
};

inline Conditionals calibrate_conditionals(const RowMatrix& sq_dists, double perplexity) {
    const std::size_t n = static_cast<std::size_t>(sq_dists.rows());
    require(sq_dists.cols() == sq_dists.rows(), Errc::invalid_argument, "distance matrix must be square");
    require(n >= 2, Errc::invalid_argument, "need at least 2 points");
    require(perplexity > 0.0, Errc::invalid_argument, "perplexity must be positive");
    for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        require(sq_dists(ii, ii) == 0.0, Errc::invalid_argument, "distance matrix must have a zero diagonal");
        for (std::size_t j = 0; j < i; ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            require(sq_dists(ii, jj) == sq_dists(jj, ii), Errc::invalid_argument, "distance matrix must be symmetric");
        }
    }
    Conditionals out;
    out.p.resize(sq_dists.rows(), sq_dists.cols());
    out.calibration.resize(n);
    parallel_for(n, 128, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            out.calibration[i] = detail::calibrate_row(sq_dists.row(ii).data(), n, i, perplexity, out.p.row(ii).data());
        }
    });
    return out;
}

inline constexpr double joint_floor = 1e-12;

namespace detail {

/// In-place (C + C^T) / 2n with zero diagonal, floored and renormalized to sum 1.
inline void symmetrize_in_place(RowMatrix& p) {
    const Eigen::Index n = p.rows();
    const double scale = 1.0 / (2.0 * static_cast<double>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        p(i, i) = 0.0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double v = std::max((p(i, j) + p(j, i)) * scale, joint_floor);
            p(i, j) = v;
            p(j, i) = v;
        }
    }
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        total += p.row(i).sum();
    }
    p /= total;
}

} // namespace detail

inline RowMatrix symmetrize_joint(const RowMatrix& conditionals) {
    require(conditionals.rows() == conditionals.cols() && conditionals.rows() >= 2, Errc::invalid_argument,
            "conditionals must be a square matrix of at least 2 points");
    RowMatrix p = conditionals;
    detail::symmetrize_in_place(p);
    return p;
}

inline RowMatrix symmetrize_joint(const Conditionals& conditionals) { return symmetrize_joint(conditionals.p); }

/**
 * Joint P straight from sample rows. Squared distances are formed one row block
 * at a time and calibrated into P, so the distance matrix is never held whole.
 */
inline RowMatrix joint_probabilities(const RowMatrix& data, double perplexity) {
    const Eigen::Index n = data.rows();
    require(n >= 2, Errc::invalid_argument, "need at least 2 points");
    const Eigen::VectorXd norms = data.rowwise().squaredNorm();
    RowMatrix p(n, n);
    const Eigen::Index block = 256;
    for (Eigen::Index b = 0; b < n; b += block) {
        const Eigen::Index rows = std::min(block, n - b);
        RowMatrix d2 = -2.0 * (data.middleRows(b, rows) * data.transpose());
        parallel_for(static_cast<std::size_t>(rows), 16, [&](std::size_t begin, std::size_t end) {
            for (std::size_t r = begin; r < end; ++r) {
                const Eigen::Index i = b + static_cast<Eigen::Index>(r);
                const auto rr = static_cast<Eigen::Index>(r);
                for (Eigen::Index j = 0; j < n; ++j) {
                    d2(rr, j) = std::max(0.0, d2(rr, j) + norms(i) + norms(j));
                }
                d2(rr, i) = 0.0;
                detail::calibrate_row(d2.row(rr).data(), static_cast<std::size_t>(n), static_cast<std::size_t>(i),
                                      perplexity, p.row(i).data());
            }
        });
    }
    detail::symmetrize_in_place(p);
    return p;
}

// ---------------------------------------------------------------------------
// Map optimization

struct TsneRealization {
    RowMatrix coordinates; ///< n x 2
    double kl_initial = 0.0;
    double kl_final = 0.0;
    std::uint64_t seed = 0;
    int iterations = 0;
};

namespace detail {

struct MapState {
    std::vector<double> x;
    std::vector<double> y;
};

/// Row-wise sums over j of q_ij-weighted terms; Z excludes the diagonal.
struct GradientTerms {
    std::vector<double> attract_x, attract_y, repel_x, repel_y;
    double z = 0.0;
};

inline void gradient_terms(const RowMatrix& p, const MapState& map, GradientTerms& g) {
    const std::size_t n = map.x.size();
    std::vector<double> row_z(n);
    parallel_for(n, 64, [&](std::size_t begin, std::size_t end) {
        const double* mx = map.x.data();
        const double* my = map.y.data();
        for (std::size_t i = begin; i < end; ++i) {
            const double* prow = p.row(static_cast<Eigen::Index>(i)).data();
            const double xi = mx[i];
            const double yi = my[i];
            double z = 0.0, ax = 0.0, ay = 0.0, rx = 0.0, ry = 0.0;
#pragma omp simd reduction(+ : z, ax, ay, rx, ry)
            for (std::size_t j = 0; j < n; ++j) {
                const double dx = xi - mx[j];
                const double dy = yi - my[j];
                const double q = 1.0 / (1.0 + dx * dx + dy * dy);
                const double pq = prow[j] * q;
                const double qq = q * q;
                z += q;
                ax += pq * dx;
                ay += pq * dy;
                rx += qq * dx;
                ry += qq * dy;
            }
            row_z[i] = z - 1.0; // self term has q = 1
            g.attract_x[i] = ax;
            g.attract_y[i] = ay;
            g.repel_x[i] = rx;
            g.repel_y[i] = ry;
        }
    });
    g.z = 0.0;
    for (double z : row_z) {
        g.z += z;
    }
}

inline double kl_divergence(const RowMatrix& p, const MapState& map) {
    const std::size_t n = map.x.size();
    std::vector<double> row_z(n), row_kl(n);
    auto pass = [&](bool with_kl, double z_total) {
        parallel_for(n, 64, [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                const double* prow = p.row(static_cast<Eigen::Index>(i)).data();
                double z = 0.0;
                double kl = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    if (j == i) {
                        continue;
                    }
                    const double dx = map.x[i] - map.x[j];
                    const double dy = map.y[i] - map.y[j];
                    const double q = 1.0 / (1.0 + dx * dx + dy * dy);
                    if (with_kl) {
                        if (prow[j] > 0.0) {
                            kl += prow[j] * std::log(prow[j] * z_total / q);
                        }
                    } else {
                        z += q;
                    }
                }
                row_z[i] = z;
                row_kl[i] = kl;
            }
        });
    };
    pass(false, 0.0);
    double z_total = 0.0;
    for (double z : row_z) {
        z_total += z;
    }
    pass(true, z_total);
    double kl = 0.0;
    for (double v : row_kl) {
        kl += v;
    }
    return kl;
}

} // namespace detail

/**
 * Optimizes a map for a precomputed joint P. Initial positions are drawn from
 * N(0, init_stddev^2) keyed by (seed, row), so row order is sample identity.
 *
 * The step uses the KL gradient without its constant factor 4, the scale on
 * which the default learning rate n / exaggeration is defined.
 */
inline TsneRealization tsne_optimize(const RowMatrix& p, const TsneParams& params) {
    const std::size_t n = static_cast<std::size_t>(p.rows());
    validate_params(params, n);
    const double lr = resolve_learning_rate(params, n);

    detail::MapState map{std::vector<double>(n), std::vector<double>(n)};
    CounterRng rng(params.seed, streams::tsne_init);
    for (std::size_t i = 0; i < n; ++i) {
        rng.seek(4 * i);
        map.x[i] = params.init_stddev * rng.normal();
        map.y[i] = params.init_stddev * rng.normal();
    }

    TsneRealization out;
    out.seed = params.seed;
    out.kl_initial = detail::kl_divergence(p, map);

    std::vector<double> ux(n, 0.0), uy(n, 0.0), gain_x(n, 1.0), gain_y(n, 1.0);
    detail::GradientTerms terms{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n),
                                std::vector<double>(n), 0.0};
    auto step = [lr](double grad, double& update, double& gain, double momentum) {
        gain = (grad > 0.0) != (update > 0.0) ? gain + 0.2 : gain * 0.8;
        gain = std::max(gain, 0.01);
        update = momentum * update - lr * gain * grad;
        return update;
    };

    for (int iter = 0; iter < params.max_iter; ++iter) {
        const bool early = iter < params.exaggeration_iters;
        const double exaggeration = early ? params.exaggeration : 1.0;
        const double momentum = early ? params.momentum : params.final_momentum;
        detail::gradient_terms(p, map, terms);
        const double inv_z = 1.0 / terms.z;
        double cx = 0.0, cy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double gx = exaggeration * terms.attract_x[i] - terms.repel_x[i] * inv_z;
            const double gy = exaggeration * terms.attract_y[i] - terms.repel_y[i] * inv_z;
            map.x[i] += step(gx, ux[i], gain_x[i], momentum);
            map.y[i] += step(gy, uy[i], gain_y[i], momentum);
            cx += map.x[i];
            cy += map.y[i];
        }
        cx /= static_cast<double>(n);
        cy /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            map.x[i] -= cx;
            map.y[i] -= cy;
        }
    }
    out.iterations = params.max_iter;
    out.kl_final = detail::kl_divergence(p, map);
    out.coordinates.resize(static_cast<Eigen::Index>(n), 2);
    for (std::size_t i = 0; i < n; ++i) {
        out.coordinates(static_cast<Eigen::Index>(i), 0) = map.x[i];
        out.coordinates(static_cast<Eigen::Index>(i), 1) = map.y[i];
    }
    return out;
}

inline TsneRealization tsne_run(const RowMatrix& data, const TsneParams& params) {
    validate_params(params, static_cast<std::size_t>(data.rows()));
    return tsne_optimize(joint_probabilities(data, params.perplexity), params);
}

namespace detail {

/// Row order sorted by sample id; empty when already canonical.
inline std::vector<std::size_t> canonical_order(const SampleMatrix& matrix) {
    std::vector<std::size_t> order(matrix.n_samples());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return matrix.sample_id(a) < matrix.sample_id(b); });
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (order[i] != i) {
            return order;
        }
    }
    return {};
}

inline RowMatrix canonical_data(const SampleMatrix& matrix, const std::vector<std::size_t>& order) {
    if (order.empty()) {
        return matrix.data();
    }
    return matrix.select(order).data();
}

inline RowMatrix restore_order(const RowMatrix& coords, const std::vector<std::size_t>& order) {
    if (order.empty()) {
        return coords;
    }
    RowMatrix out(coords.rows(), coords.cols());
    for (std::size_t r = 0; r < order.size(); ++r) {
        out.row(static_cast<Eigen::Index>(order[r])) = coords.row(static_cast<Eigen::Index>(r));
    }
    return out;
}

} // namespace detail

/// Runs in sample-id order and maps back, so permuting input rows permutes the output rows identically.
inline TsneRealization tsne_run(const SampleMatrix& matrix, const TsneParams& params) {
    const auto order = detail::canonical_order(matrix);
    TsneRealization out = tsne_run(detail::canonical_data(matrix, order), params);
    out.coordinates = detail::restore_order(out.coordinates, order);
    return out;
}

// ---------------------------------------------------------------------------
// PC(t-SNE)

struct PcTsneResult {
    std::vector<TsneRealization> realizations;
    RowMatrix stacked_scores; ///< n x k principal components of the 2R-column stack
    Eigen::VectorXd eigenvalues;
    Eigen::VectorXd variance_fractions;
    LinearDecomposition decomposition;
};

/// z-scores each realization's columns and stacks them side by side (n x 2R).
inline RowMatrix stack_realizations(const std::vector<TsneRealization>& runs) {
    require(!runs.empty(), Errc::invalid_argument, "no realizations to stack");
    const Eigen::Index n = runs.front().coordinates.rows();
    RowMatrix stack(n, static_cast<Eigen::Index>(2 * runs.size()));
    for (std::size_t r = 0; r < runs.size(); ++r) {
        for (Eigen::Index c = 0; c < 2; ++c) {
            Eigen::VectorXd col = runs[r].coordinates.col(c);
            col.array() -= col.mean();
            const double sd = std::sqrt(col.squaredNorm() / static_cast<double>(n));
            if (sd > 0.0) {
                col /= sd;
            }
            stack.col(static_cast<Eigen::Index>(2 * r) + c) = col;
        }
    }
    return stack;
}

/// PC(t-SNE) with explicitly chosen per-realization seeds (at least 2).
inline PcTsneResult pc_tsne_with_seeds(const SampleMatrix& matrix, const TsneParams& params,
                                       std::span<const std::uint64_t> seeds) {
    require(seeds.size() >= 2, Errc::invalid_argument, "PC(t-SNE) needs at least 2 realizations");
    validate_params(params, matrix.n_samples());
    const auto order = detail::canonical_order(matrix);
    const RowMatrix p = joint_probabilities(detail::canonical_data(matrix, order), params.perplexity);

    PcTsneResult out;
    out.realizations.reserve(seeds.size());
    for (std::uint64_t seed : seeds) {
        TsneParams run = params;
        run.seed = seed;
        TsneRealization r = tsne_optimize(p, run);
        r.coordinates = detail::restore_order(r.coordinates, order);
        out.realizations.push_back(std::move(r));
    }
    const RowMatrix stack = stack_realizations(out.realizations);
    const Eigen::Index k = std::min<Eigen::Index>(stack.cols(), stack.rows());
    out.decomposition = pca_eof(stack, k);
    out.stacked_scores = out.decomposition.scores;
    out.eigenvalues = out.decomposition.eigenvalues;
    out.variance_fractions = out.decomposition.variance_fractions;
    return out;
}

/// Realization r uses seed params.seed + r.
inline PcTsneResult pc_tsne(const SampleMatrix& matrix, const TsneParams& params, std::size_t runs) {
    require(runs >= 2, Errc::invalid_argument, "PC(t-SNE) needs at least 2 realizations");
    std::vector<std::uint64_t> seeds(runs);
    for (std::size_t r = 0; r < runs; ++r) {
        seeds[r] = params.seed + r;
    }
    return pc_tsne_with_seeds(matrix, params, seeds);
}

/// Index of the realization with the lowest final divergence (first on ties).
inline std::size_t min_divergence(const PcTsneResult& result) {
    require(!result.realizations.empty(), Errc::invalid_argument, "no realizations");
    std::size_t best = 0;
    for (std::size_t r = 1; r < result.realizations.size(); ++r) {
        if (result.realizations[r].kl_final < result.realizations[best].kl_final) {
            best = r;
        }
    }
    return best;
}

} // namespace tfscope

#endif
