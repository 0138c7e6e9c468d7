// Counter-based 64-bit PRNG with derived per-entity streams.
//
// All randomness in the toolkit flows from a single master seed through these
// streams, so any artifact is reproducible byte-for-byte from (config, seed).
// The generator is the SplitMix64 finalizer applied to an incrementing
// counter; streams for structures, timesteps or named parameters are derived
// by hashing the parent key with the child id. Gaussian variates use the
// trigonometric Box-Muller transform (one cached spare per pair) so a
// re-implementation from this comment reproduces every draw exactly.
#pragma once

#include <cmath>
#include <cstdint>

#include "rulkit/common.hpp"

namespace rulkit {

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}
}  // namespace detail

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

/// Derive a child stream key from a parent key and a child index.
inline std::uint64_t derive_stream(std::uint64_t parent, std::uint64_t child) {
    return detail::mix64(parent ^ detail::mix64(child + kGolden));
}

/// Derive a stream key from a string label (parameter names, stages).
inline std::uint64_t derive_stream(std::uint64_t parent, const std::string& label) {
    return derive_stream(parent, fnv1a64(label));
}

class Rng {
public:
    explicit Rng(std::uint64_t key) : key_(key) {}

    std::uint64_t next_u64() { return detail::mix64(key_ + (++counter_) * kGolden); }

    /// Uniform in [0, 1), 53-bit mantissa.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform in [-1, 1), the generator's noise-space distribution.
    double uniform_sym() { return 2.0 * uniform() - 1.0; }

    /// Standard normal via Box-Muller; mean + sd * N(0,1) for general use.
    double gaussian(double mean = 0.0, double sd = 1.0) {
        if (has_spare_) {
            has_spare_ = false;
            return mean + sd * spare_;
        }
        // u1 in (0, 1] so the log stays finite.
        double u1 = 1.0 - uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return mean + sd * r * std::cos(a);
    }

    std::uint64_t key() const { return key_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace rulkit
