#ifndef TFSCOPE_UNMIX_HPP
#define TFSCOPE_UNMIX_HPP

/**
 * @file unmix.hpp
 *
 * Temporal mixture models: pick candidate endmember samples at the extremes of
 * a feature space, then invert each sample's series as a sum-to-one (optionally
 * nonnegative) combination of endmember series.
 *
 * For a sample x and endmember rows S (m x p) the inversion solves
 *
 *     minimize ||S^T w - x||_2  subject to  sum(w) = 1  [and w >= 0].
 *
 * The equality is eliminated exactly: w = 1/m + N z with N an orthonormal basis
 * of the complement of the ones vector, leaving an unconstrained least squares
 * problem in z solved by column-pivoted QR. Nonnegativity is handled by a
 * primal active-set loop over the same reduced problem restricted to the free
 * endmembers.
 */

#include "tfscope/cube.hpp"
#include "tfscope/error.hpp"
#include "tfscope/io.hpp"
#include "tfscope/parallel.hpp"
#include "tfscope/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace tfscope {

struct EndmemberSet {
    RowMatrix signatures;                ///< m x n_features
    std::vector<std::string> labels;     ///< m names
    std::vector<std::string> provenance; ///< m entries: "sample:<id>" or "external"

    std::size_t m() const { return static_cast<std::size_t>(signatures.rows()); }
};

/// Checks m >= 2, label/provenance sizes and linear independence (sigma_min > 1e-10 sigma_max).
inline void validate_endmembers(const EndmemberSet& ems) {
    require(ems.m() >= 2, Errc::invalid_argument, "at least 2 endmembers are required");
    require(ems.labels.empty() || ems.labels.size() == ems.m(), Errc::size_mismatch, "one label per endmember");
    require(ems.provenance.empty() || ems.provenance.size() == ems.m(), Errc::size_mismatch,
            "one provenance entry per endmember");
    require(ems.signatures.allFinite(), Errc::non_finite, "endmember signatures must be finite");
    require(ems.signatures.cols() >= ems.signatures.rows(), Errc::degenerate_endmembers,
            "more endmembers than features cannot be linearly independent");
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(ems.signatures);
    const auto& sv = svd.singularValues();
    require(sv(0) > 0.0 && sv(sv.size() - 1) > 1e-10 * sv(0), Errc::degenerate_endmembers,
            "endmember signatures are linearly dependent");
}

inline EndmemberSet endmembers_from_samples(const SampleMatrix& matrix, std::span<const std::size_t> rows) {
    EndmemberSet ems;
    ems.signatures.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(matrix.n_features()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
        require(rows[k] < matrix.n_samples(), Errc::out_of_range, "endmember row out of range");
        ems.signatures.row(static_cast<Eigen::Index>(k)) = matrix.data().row(static_cast<Eigen::Index>(rows[k]));
        const std::string id = std::to_string(matrix.sample_id(rows[k]));
        ems.labels.push_back("em" + id);
        ems.provenance.push_back("sample:" + id);
    }
    return ems;
}

// ---------------------------------------------------------------------------
// Endmember suggestion

struct EndmemberCandidate {
    std::size_t row = 0;
    std::size_t sample_id = 0;
    std::size_t extremity_count = 0;
};

/**
 * Unit directions spread over the d-sphere: evenly spaced angles for d = 2, a
 * Fibonacci lattice for d = 3, and seeded Gaussian directions beyond that.
 */
inline Eigen::MatrixXd spread_directions(Eigen::Index d, std::size_t count) {
    Eigen::MatrixXd dirs(d, static_cast<Eigen::Index>(count));
    if (d == 2) {
        for (std::size_t k = 0; k < count; ++k) {
            const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(count);
            dirs.col(static_cast<Eigen::Index>(k)) << std::cos(a), std::sin(a);
        }
    } else if (d == 3) {
        const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
        for (std::size_t k = 0; k < count; ++k) {
            const double z = 1.0 - 2.0 * (static_cast<double>(k) + 0.5) / static_cast<double>(count);
            const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
            const double a = golden * static_cast<double>(k);
            dirs.col(static_cast<Eigen::Index>(k)) << r * std::cos(a), r * std::sin(a), z;
        }
    } else {
        CounterRng rng(0, streams::directions);
        for (std::size_t k = 0; k < count; ++k) {
            Eigen::VectorXd v(d);
            for (Eigen::Index j = 0; j < d; ++j) {
                v(j) = rng.normal();
            }
            dirs.col(static_cast<Eigen::Index>(k)) = v.normalized();
        }
    }
    return dirs;
}

/**
 * For each direction, the sample with the largest projection scores one
 * extremity hit (lowest row wins ties). Samples are returned by descending hit
 * count, then ascending row; samples never hit follow with count 0.
 */
inline std::vector<EndmemberCandidate> suggest_endmembers(const RowMatrix& coordinates, const SampleMatrix& matrix,
                                                          std::size_t n_directions = 256) {
    require(coordinates.cols() >= 2, Errc::invalid_argument, "feature space must have at least 2 dimensions");
    require(static_cast<std::size_t>(coordinates.rows()) == matrix.n_samples(), Errc::size_mismatch,
            "coordinate rows differ from sample count");
    require(n_directions >= 1, Errc::invalid_argument, "need at least one direction");
    const Eigen::MatrixXd dirs = spread_directions(coordinates.cols(), n_directions);
    std::vector<std::size_t> hits(matrix.n_samples(), 0);
    for (Eigen::Index k = 0; k < dirs.cols(); ++k) {
        const Eigen::VectorXd proj = coordinates * dirs.col(k);
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < proj.size(); ++i) {
            if (proj(i) > proj(best)) {
                best = i;
            }
        }
        ++hits[static_cast<std::size_t>(best)];
    }
    std::vector<EndmemberCandidate> out(matrix.n_samples());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = {i, matrix.sample_id(i), hits[i]};
    }
    std::stable_sort(out.begin(), out.end(), [](const EndmemberCandidate& a, const EndmemberCandidate& b) {
        return a.extremity_count > b.extremity_count;
    });
    return out;
}

// ---------------------------------------------------------------------------
// Inversion

enum class FractionConstraint { sum_to_one, sum_to_one_nonneg };

struct FractionResult {
    RowMatrix fractions;     ///< n x m
    Eigen::VectorXd misfit;  ///< percent, relative L2 residual
    FractionConstraint constraint = FractionConstraint::sum_to_one;
    std::vector<GridIndex> index_map;
    CubeDims grid;
    std::vector<std::string> labels;
    double max_kkt_residual = 0.0; ///< nonnegative mode only
};

namespace detail {

/// Reduced least squares for a fixed free set: w_free = 1/|F| + N z.
class SimplexSubproblem {
public:
    SimplexSubproblem(const RowMatrix& signatures, const std::vector<std::size_t>& free) : free_(free) {
        const Eigen::Index f = static_cast<Eigen::Index>(free.size());
        const Eigen::Index p = signatures.cols();
        Eigen::MatrixXd s(p, f);
        for (Eigen::Index k = 0; k < f; ++k) {
            s.col(k) = signatures.row(static_cast<Eigen::Index>(free[static_cast<std::size_t>(k)])).transpose();
        }
        base_ = s.rowwise().mean();
        if (f > 1) {
            // Orthonormal basis of {v : sum(v) = 0} from the QR of [1 | I].
            Eigen::MatrixXd a(f, f);
            a.col(0).setOnes();
            a.rightCols(f - 1) = Eigen::MatrixXd::Identity(f, f).leftCols(f - 1);
            Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
            const Eigen::MatrixXd q = qr.householderQ();
            null_ = q.rightCols(f - 1);
            qr_.compute(s * null_);
        }
    }

    /// Weights on the free set (size |F|), summing to one.
    Eigen::VectorXd solve(const Eigen::VectorXd& x) const {
        const Eigen::Index f = static_cast<Eigen::Index>(free_.size());
        Eigen::VectorXd w = Eigen::VectorXd::Constant(f, 1.0 / static_cast<double>(f));
        if (f > 1) {
            w += null_ * qr_.solve(x - base_);
        }
        return w;
    }

private:
    std::vector<std::size_t> free_;
    Eigen::VectorXd base_;
    Eigen::MatrixXd null_;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
};

struct ActiveSetResult {
    Eigen::VectorXd w;
    double kkt_residual = 0.0;
};

/// KKT residual of min 1/2||S^T w - x||^2 s.t. sum w = 1, w >= 0, relative to the gradient scale.
inline double simplex_kkt_residual(const RowMatrix& s, const Eigen::VectorXd& x, const Eigen::VectorXd& w) {
    const Eigen::VectorXd g = s * (s.transpose() * w - x);
    const double scale = 1.0 + (s * s.transpose()).cwiseAbs().maxCoeff() + (s * x).cwiseAbs().maxCoeff();
    double mu = 0.0;
    int free = 0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (w(i) > 0.0) {
            mu += g(i);
            ++free;
        }
    }
    mu = free > 0 ? mu / free : g.minCoeff();
    double worst = std::abs(w.sum() - 1.0);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        worst = std::max(worst, std::max(0.0, -w(i)));
        if (w(i) > 0.0) {
            worst = std::max(worst, std::abs(g(i) - mu) / scale);
        } else {
            worst = std::max(worst, std::max(0.0, mu - g(i)) / scale);
        }
    }
    return worst;
}

inline ActiveSetResult solve_simplex_nonneg(const RowMatrix& s, const Eigen::VectorXd& x) {
    const std::size_t m = static_cast<std::size_t>(s.rows());
    std::vector<bool> is_free(m, true);
    Eigen::VectorXd w = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(m), 1.0 / static_cast<double>(m));
    const double scale = 1.0 + (s * s.transpose()).cwiseAbs().maxCoeff() + (s * x).cwiseAbs().maxCoeff();

    for (std::size_t iter = 0; iter < 20 * m + 100; ++iter) {
        std::vector<std::size_t> free;
        for (std::size_t i = 0; i < m; ++i) {
            if (is_free[i]) {
                free.push_back(i);
            }
        }
        const Eigen::VectorXd wf = SimplexSubproblem(s, free).solve(x);
        Eigen::VectorXd target = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
        for (std::size_t k = 0; k < free.size(); ++k) {
            target(static_cast<Eigen::Index>(free[k])) = wf(static_cast<Eigen::Index>(k));
        }

        if (target.minCoeff() >= 0.0) {
            w = target;
            const Eigen::VectorXd g = s * (s.transpose() * w - x);
            double mu = 0.0;
            for (std::size_t i : free) {
                mu += g(static_cast<Eigen::Index>(i));
            }
            mu /= static_cast<double>(free.size());
            // Multiplier of w_i >= 0 is g_i - mu; release the most negative one.
            std::size_t release = m;
            double most_negative = -1e-13 * scale;
            for (std::size_t i = 0; i < m; ++i) {
                if (!is_free[i] && g(static_cast<Eigen::Index>(i)) - mu < most_negative) {
                    most_negative = g(static_cast<Eigen::Index>(i)) - mu;
                    release = i;
                }
            }
            if (release == m) {
                break;
            }
            is_free[release] = true;
            continue;
        }

        // Step toward the target until the first free weight hits zero.
        double alpha = 1.0;
        std::size_t blocking = m;
        for (std::size_t i : free) {
            const auto ii = static_cast<Eigen::Index>(i);
            if (target(ii) < 0.0) {
                const double a = w(ii) / (w(ii) - target(ii));
                if (a < alpha) {
                    alpha = a;
                    blocking = i;
                }
            }
        }
        w += alpha * (target - w);
        if (blocking < m) {
            w(static_cast<Eigen::Index>(blocking)) = 0.0;
            is_free[blocking] = false;
        }
        for (std::size_t i = 0; i < m; ++i) {
            if (is_free[i] && w(static_cast<Eigen::Index>(i)) <= 0.0) {
                w(static_cast<Eigen::Index>(i)) = 0.0;
                is_free[i] = false;
            }
        }
        if (std::none_of(is_free.begin(), is_free.end(), [](bool b) { return b; })) {
            // Numerically everything collapsed; restart from the best vertex.
            std::size_t best = 0;
            double best_r = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < m; ++i) {
                const double r = (s.row(static_cast<Eigen::Index>(i)).transpose() - x).norm();
                if (r < best_r) {
                    best_r = r;
                    best = i;
                }
            }
            w.setZero();
            w(static_cast<Eigen::Index>(best)) = 1.0;
            is_free[best] = true;
        }
    }
    return {w, simplex_kkt_residual(s, x, w)};
}

} // namespace detail

inline FractionResult unmix(const SampleMatrix& matrix, const EndmemberSet& ems, bool nonneg = false) {
    validate_endmembers(ems);
    require(static_cast<std::size_t>(ems.signatures.cols()) == matrix.n_features(), Errc::width_mismatch,
            "endmember width " + std::to_string(ems.signatures.cols()) + " differs from " +
                std::to_string(matrix.n_features()) + " sample features");
    const std::size_t n = matrix.n_samples();
    const std::size_t m = ems.m();

    FractionResult out;
    out.constraint = nonneg ? FractionConstraint::sum_to_one_nonneg : FractionConstraint::sum_to_one;
    out.fractions.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
    out.misfit.resize(static_cast<Eigen::Index>(n));
    out.index_map = matrix.index_map();
    out.grid = matrix.grid();
    out.labels = ems.labels;
    if (out.labels.empty()) {
        for (std::size_t k = 0; k < m; ++k) {
            out.labels.push_back("em" + std::to_string(k + 1));
        }
    }

    std::vector<std::size_t> all(m);
    std::iota(all.begin(), all.end(), std::size_t{0});
    const detail::SimplexSubproblem full(ems.signatures, all);
    const double sig_scale = ems.signatures.cwiseAbs().maxCoeff();
    std::vector<double> kkt(n, 0.0);
    std::vector<std::string> errors(n);

    parallel_for(n, 256, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            const Eigen::VectorXd x = matrix.data().row(ii).transpose();
            Eigen::VectorXd w = full.solve(x);
            if (nonneg && w.minCoeff() < 0.0) {
                const auto r = detail::solve_simplex_nonneg(ems.signatures, x);
                w = r.w;
                kkt[i] = r.kkt_residual;
            } else if (nonneg) {
                kkt[i] = detail::simplex_kkt_residual(ems.signatures, x, w);
            }
            out.fractions.row(ii) = w.transpose();
            const double resid = (ems.signatures.transpose() * w - x).norm();
            const double norm = x.norm();
            if (norm > 0.0) {
                out.misfit(ii) = 100.0 * resid / norm;
            } else if (resid <= 1e-12 * std::max(1.0, sig_scale)) {
                out.misfit(ii) = 0.0;
            } else {
                errors[i] = "sample " + std::to_string(matrix.sample_id(i)) +
                            " has a zero-norm series and a nonzero residual; relative misfit is undefined";
            }
        }
    });
    for (const auto& e : errors) {
        if (!e.empty()) {
            fail(Errc::undefined_misfit, e);
        }
    }
    out.max_kkt_residual = kkt.empty() ? 0.0 : *std::max_element(kkt.begin(), kkt.end());
    return out;
}

struct MisfitSummary {
    double threshold_pct = 0.0;
    double fraction_below = 0.0;
    double mean = 0.0;
    double median = 0.0;
    double max = 0.0;
    std::size_t count = 0;
};

inline MisfitSummary misfit_summary(const FractionResult& result, double threshold_pct) {
    require(threshold_pct >= 0.0, Errc::invalid_argument, "threshold must be non-negative");
    MisfitSummary s;
    s.threshold_pct = threshold_pct;
    s.count = static_cast<std::size_t>(result.misfit.size());
    if (s.count == 0) {
        return s;
    }
    std::vector<double> v(result.misfit.data(), result.misfit.data() + result.misfit.size());
    std::sort(v.begin(), v.end());
    const auto below = std::count_if(v.begin(), v.end(), [&](double m) { return m < threshold_pct; });
    s.fraction_below = static_cast<double>(below) / static_cast<double>(s.count);
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(s.count);
    s.median = s.count % 2 ? v[s.count / 2] : 0.5 * (v[s.count / 2 - 1] + v[s.count / 2]);
    s.max = v.back();
    return s;
}

// ---------------------------------------------------------------------------
// CSV

/// One row per endmember: label, then the signature values (17 significant digits, no header).
inline void write_endmembers_csv(const EndmemberSet& ems, const fs::path& path) {
    std::string out;
    for (std::size_t k = 0; k < ems.m(); ++k) {
        out += k < ems.labels.size() ? ems.labels[k] : "em" + std::to_string(k + 1);
        for (Eigen::Index f = 0; f < ems.signatures.cols(); ++f) {
            out += ',';
            out += format_real(ems.signatures(static_cast<Eigen::Index>(k), f), 17);
        }
        out += '\n';
    }
    write_file_atomic(path, out);
}

inline EndmemberSet read_endmembers_csv(const fs::path& path) {
    const auto lines = read_lines(path);
    require(!lines.empty(), Errc::format, "endmember file " + path.string() + " is empty");
    EndmemberSet ems;
    std::vector<std::vector<double>> rows;
    for (const auto& line : lines) {
        const auto fields = split(line, ',');
        require(fields.size() >= 2, Errc::format, "endmember row needs a label and at least one value");
        ems.labels.push_back(fields[0]);
        ems.provenance.push_back("external");
        std::vector<double> values;
        for (std::size_t f = 1; f < fields.size(); ++f) {
            values.push_back(parse_real(fields[f]));
        }
        require(rows.empty() || values.size() == rows.front().size(), Errc::format,
                "endmember rows have differing lengths");
        rows.push_back(std::move(values));
    }
    ems.signatures.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
        for (std::size_t f = 0; f < rows[k].size(); ++f) {
            ems.signatures(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(f)) = rows[k][f];
        }
    }
    return ems;
}

/// Header "sample_id,y,x,w_1..w_m,misfit_pct", 9 significant digits.
inline std::string fractions_csv(const FractionResult& r) {
    std::string out = "sample_id,y,x";
    for (Eigen::Index k = 0; k < r.fractions.cols(); ++k) {
        out += ",w_" + std::to_string(k + 1);
    }
    out += ",misfit_pct\n";
    for (Eigen::Index i = 0; i < r.fractions.rows(); ++i) {
        const GridIndex g = r.index_map[static_cast<std::size_t>(i)];
        out += std::to_string(static_cast<std::size_t>(g.y) * r.grid.nx + g.x) + ',' + std::to_string(g.y) + ',' +
               std::to_string(g.x);
        for (Eigen::Index k = 0; k < r.fractions.cols(); ++k) {
            out += ',' + format_real(r.fractions(i, k), 9);
        }
        out += ',' + format_real(r.misfit(i), 9) + '\n';
    }
    return out;
}

inline void write_fractions_csv(const FractionResult& r, const fs::path& path) { write_file_atomic(path, fractions_csv(r)); }

} // namespace tfscope

#endif
