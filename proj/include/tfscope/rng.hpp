#ifndef TFSCOPE_RNG_HPP
#define TFSCOPE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>

namespace tfscope {

/**
 * Counter-based generator: the k-th draw of stream `s` under seed `x` is a pure
 * function of (x, s, k). Streams let independent consumers (weights, t-SNE
 * initialization, subsampling) share one user seed without correlating.
 *
 * The mixing function is the splitmix64 finalizer applied to a keyed counter.
 * Every distribution below is implemented here rather than through <random>,
 * whose distributions are not specified bit-for-bit across standard libraries.
 */
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
        : key_(mix(seed ^ mix(stream + 0x632BE59BD9B4E019ULL))) {}

    static constexpr std::uint64_t mix(std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t at(std::uint64_t counter) const { return mix(key_ ^ mix(counter)); }

    std::uint64_t next() { return at(counter_++); }

    /// Uniform on the open interval (0, 1), 53-bit resolution.
    double uniform() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }

    /// Uniform integer in [0, bound), rejection-sampled to avoid modulo bias.
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
        std::uint64_t draw = next();
        while (draw >= limit) {
            draw = next();
        }
        return draw % bound;
    }

    double exponential() { return -std::log(uniform()); }

    /// Standard normal via Box-Muller; consumes two counters per call.
    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::uint64_t position() const { return counter_; }
    void seek(std::uint64_t counter) { counter_ = counter; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// Named streams so that independent consumers of one seed never overlap.
namespace streams {
inline constexpr std::uint64_t simplex_weights = 1;
inline constexpr std::uint64_t subsample = 2;
inline constexpr std::uint64_t tsne_init = 3;
inline constexpr std::uint64_t eigensolver = 4;
inline constexpr std::uint64_t directions = 5;
} // namespace streams

} // namespace tfscope

#endif
