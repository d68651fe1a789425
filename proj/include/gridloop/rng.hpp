#pragma once

#include <cmath>
#include <cstdint>

#include "gridloop/linalg.hpp"

namespace gridloop {

/// Seeded splitmix64 stream with Gaussian draws via Box-Muller.
///
/// Self-contained on purpose: std::normal_distribution is free to change its
/// draw sequence between standard library versions, which would break the
/// byte-identical-results contract of the simulator. Distinct (seed, stream)
/// pairs give independent substreams, so e.g. measurement noise and load
/// increments never share draws.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
        : state_(mix(seed) ^ mix(0x9E3779B97F4A7C15ull * (stream + 1))) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Standard normal deviate. Two uniforms per call, no cached spare, so
    /// the draw count per step is fixed and runs stay reproducible even if
    /// callers interleave.
    double gaussian() {
        double u1 = 1.0 - uniform();  // (0, 1], keeps log() finite
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    Vec gaussian_vec(Eigen::Index n) {
        Vec v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = gaussian();
        return v;
    }

private:
    static std::uint64_t mix(std::uint64_t x) {
        x ^= x >> 33;
        x *= 0xFF51AFD7ED558CCDull;
        x ^= x >> 33;
        x *= 0xC4CEB9FE1A85EC53ull;
        x ^= x >> 33;
        return x;
    }

    std::uint64_t state_;
};

}  // namespace gridloop
