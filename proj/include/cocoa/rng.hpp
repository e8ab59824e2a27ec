#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "cocoa/error.hpp"

namespace cocoa {

// Stateless 64-bit mixer (splitmix64 finalizer). Used for seed derivation and
// for deterministic per-index bits (e.g. per-position layout choices).
inline uint64_t mix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Child-stream derivation rule: child_seed = mix64(mix64(seed) + stream_index).
// Every component that needs randomness receives its own stream index, so runs
// are reproducible from a single experiment seed and adding a consumer never
// shifts the draws of existing ones.
inline uint64_t child_seed(uint64_t seed, uint64_t stream_index) {
    return mix64(mix64(seed) + stream_index);
}

// Deterministic generator. All sampling algorithms are implemented here (not
// via std:: distributions, whose output is implementation-defined) so results
// are byte-stable across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}
    Rng(uint64_t seed, uint64_t stream_index) : engine_(child_seed(seed, stream_index)) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double next_double() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). Rejection sampling; exact.
    int next_int(int n) {
        require(n > 0, "rng-bad-range", "next_int needs n > 0");
        const uint64_t un = static_cast<uint64_t>(n);
        const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        uint64_t r = engine_();
        while (r >= limit) r = engine_();
        return static_cast<int>(r % un);
    }

    // Standard normal via Box-Muller (cached pair member).
    double next_normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        const double u1 = 1.0 - next_double(); // (0, 1]
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    // Normal truncated to two standard deviations, then scaled.
    double next_truncated_normal(double stddev) {
        double z = next_normal();
        while (std::fabs(z) > 2.0) z = next_normal();
        return z * stddev;
    }

    // Sample an index from an explicit probability vector (inverse CDF walk).
    // Falls back to the last positive-probability index if rounding leaves a
    // sliver of unassigned mass.
    int pick(const std::vector<double>& probs) {
        const double u = next_double();
        double acc = 0.0;
        int last_positive = -1;
        for (size_t i = 0; i < probs.size(); ++i) {
            if (probs[i] > 0.0) last_positive = static_cast<int>(i);
            acc += probs[i];
            if (u < acc) return static_cast<int>(i);
        }
        require(last_positive >= 0, "rng-empty-distribution", "pick() over all-zero probabilities");
        return last_positive;
    }

private:
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

} // namespace cocoa
