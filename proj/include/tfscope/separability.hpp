#ifndef TFSCOPE_SEPARABILITY_HPP
#define TFSCOPE_SEPARABILITY_HPP

#include "tfscope/cube.hpp"
#include "tfscope/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace tfscope {

struct SeparabilityReport {
    std::vector<std::int64_t> classes;         ///< sorted class ids
    std::vector<Eigen::VectorXd> means;
    std::vector<Eigen::MatrixXd> covariances;  ///< ridge-regularized
    Eigen::MatrixXd divergence;                ///< Gaussian divergence D, symmetric
    Eigen::MatrixXd transformed;               ///< 2 (1 - exp(-D / 8)), in [0, 2]

    double td(std::int64_t a, std::int64_t b) const {
        const auto ia = std::lower_bound(classes.begin(), classes.end(), a) - classes.begin();
        const auto ib = std::lower_bound(classes.begin(), classes.end(), b) - classes.begin();
        return transformed(ia, ib);
    }
};

/**
 * Pairwise transformed divergence between classes modelled as Gaussians:
 *
 *     D  = 1/2 tr[(Ci - Cj)(Cj^-1 - Ci^-1)] + 1/2 tr[(Ci^-1 + Cj^-1)(mi - mj)(mi - mj)^T]
 *     TD = 2 (1 - exp(-D / 8))
 *
 * Class covariances get a ridge of 1e-9 * trace / d on the diagonal.
 */
inline SeparabilityReport transformed_divergence(const RowMatrix& coords, std::span<const std::int64_t> labels) {
    const Eigen::Index d = coords.cols();
    require(static_cast<std::size_t>(coords.rows()) == labels.size(), Errc::size_mismatch, "one label per sample");
    require(d >= 1, Errc::invalid_argument, "coordinates need at least one dimension");

    std::map<std::int64_t, std::vector<Eigen::Index>> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        members[labels[i]].push_back(static_cast<Eigen::Index>(i));
    }
    require(members.size() >= 2, Errc::invalid_argument, "need at least 2 classes");

    SeparabilityReport rep;
    std::vector<Eigen::MatrixXd> inverses;
    for (const auto& [label, rows] : members) {
        require(static_cast<Eigen::Index>(rows.size()) >= d + 1, Errc::class_too_small,
                "class " + std::to_string(label) + " has " + std::to_string(rows.size()) + " samples, needs " +
                    std::to_string(d + 1));
        Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), d);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            x.row(static_cast<Eigen::Index>(r)) = coords.row(rows[r]);
        }
        const Eigen::VectorXd mean = x.colwise().mean().transpose();
        const Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
        Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(rows.size() - 1);
        const double ridge = 1e-9 * cov.trace() / static_cast<double>(d);
        cov.diagonal().array() += ridge > 0.0 ? ridge : 1e-300;
        rep.classes.push_back(label);
        rep.means.push_back(mean);
        inverses.push_back(cov.ldlt().solve(Eigen::MatrixXd::Identity(d, d)));
        rep.covariances.push_back(std::move(cov));
    }

    const Eigen::Index c = static_cast<Eigen::Index>(rep.classes.size());
    rep.divergence = Eigen::MatrixXd::Zero(c, c);
    rep.transformed = Eigen::MatrixXd::Zero(c, c);
    for (Eigen::Index a = 0; a < c; ++a) {
        for (Eigen::Index b = a + 1; b < c; ++b) {
            const auto& ca = rep.covariances[static_cast<std::size_t>(a)];
            const auto& cb = rep.covariances[static_cast<std::size_t>(b)];
            const auto& ia = inverses[static_cast<std::size_t>(a)];
            const auto& ib = inverses[static_cast<std::size_t>(b)];
            const Eigen::VectorXd dm = rep.means[static_cast<std::size_t>(a)] - rep.means[static_cast<std::size_t>(b)];
            const double shape = 0.5 * ((ca - cb) * (ib - ia)).trace();
            const double location = 0.5 * dm.dot((ia + ib) * dm);
            const double div = std::max(0.0, shape + location);
            const double td = std::clamp(2.0 * (1.0 - std::exp(-div / 8.0)), 0.0, 2.0);
            rep.divergence(a, b) = rep.divergence(b, a) = div;
            rep.transformed(a, b) = rep.transformed(b, a) = td;
        }
    }
    return rep;
}

} // namespace tfscope

#endif
