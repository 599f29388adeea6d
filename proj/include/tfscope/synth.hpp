#ifndef TFSCOPE_SYNTH_HPP
#define TFSCOPE_SYNTH_HPP

// Synthetic three-signal mixing cube with known weights: one sinusoid and two
// decaying exponentials mixed with simplex-uniform weights per pixel.

#include "tfscope/cube.hpp"
#include "tfscope/rng.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

namespace tfscope {

struct SignalSet {
    std::size_t nt = 0;
    std::vector<double> s1; ///< cos(pi t / 25)
    std::vector<double> s2; ///< exp(-t / 5)
    std::vector<double> s3; ///< 0 for t < 50, 3 exp(-(t - 50) / 10) afterwards

    const std::vector<double>& operator[](std::size_t i) const { return i == 0 ? s1 : (i == 1 ? s2 : s3); }
};

inline SignalSet eval_signals(std::size_t nt) {
    require(nt >= 1, Errc::invalid_argument, "nt must be at least 1");
    SignalSet s;
    s.nt = nt;
    s.s1.resize(nt);
    s.s2.resize(nt);
    s.s3.resize(nt);
    for (std::size_t i = 0; i < nt; ++i) {
        const double t = static_cast<double>(i);
        s.s1[i] = std::cos(std::numbers::pi * t / 25.0);
        s.s2[i] = std::exp(-t / 5.0);
        s.s3[i] = i < 50 ? 0.0 : 3.0 * std::exp(-(t - 50.0) / 10.0);
    }
    return s;
}

using WeightTriple = std::array<double, 3>;

/**
 * n triples uniform on the 2-simplex: three unit exponentials, normalized.
 * Triple i depends only on (seed, i).
 */
inline std::vector<WeightTriple> sample_simplex_weights(std::size_t n, std::uint64_t seed) {
    require(n >= 1, Errc::invalid_argument, "weight count must be at least 1");
    std::vector<WeightTriple> out(n);
    CounterRng rng(seed, streams::simplex_weights);
    for (std::size_t i = 0; i < n; ++i) {
        rng.seek(3 * i);
        const double e0 = rng.exponential();
        const double e1 = rng.exponential();
        const double e2 = rng.exponential();
        const double total = e0 + e1 + e2;
        out[i] = {e0 / total, e1 / total, e2 / total};
    }
    return out;
}

/// Ground-truth weights, one triple per grid cell in (y, x) row-major order.
struct WeightField {
    std::size_t ny = 0;
    std::size_t nx = 0;
    std::vector<WeightTriple> weights;

    const WeightTriple& at(std::size_t y, std::size_t x) const { return weights[y * nx + x]; }
};

struct ToyOptions {
    /// Also switch s3 off for columns x <= 49 (the alternative reading of the
    /// gating in the generating equations). Off by default.
    bool spatial_gate = false;
    SampleType dtype = SampleType::f64le;
};

struct ToyCube {
    DataCube cube;
    WeightField weights;
    SignalSet signals;
};

inline ToyCube generate_toy_cube(std::size_t ny = 100, std::size_t nx = 100, std::size_t nt = 100,
                                 std::uint64_t seed = 42, ToyOptions options = {}) {
    require(ny >= 1 && nx >= 1, Errc::invalid_argument, "grid must be at least 1x1");
    SignalSet signals = eval_signals(nt);
    WeightField field{ny, nx, sample_simplex_weights(ny * nx, seed)};

    std::vector<double> values(ny * nx * nt);
    for (std::size_t y = 0; y < ny; ++y) {
        for (std::size_t x = 0; x < nx; ++x) {
            const WeightTriple& w = field.at(y, x);
            const bool s3_on = !options.spatial_gate || x >= 50;
            double* out = values.data() + (y * nx + x) * nt;
            for (std::size_t t = 0; t < nt; ++t) {
                out[t] = w[0] * signals.s1[t] + w[1] * signals.s2[t] + (s3_on ? w[2] * signals.s3[t] : 0.0);
            }
        }
    }
    DataCube cube({ny, nx, nt, 1}, std::move(values), {}, options.dtype);
    return {std::move(cube), std::move(field), std::move(signals)};
}

} // namespace tfscope

#endif
