#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace esbo {

/// Engine used everywhere in the library. Seeded explicitly; never from the clock.
using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Used to derive independent sub-stream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic seed for sub-stream `(stream, index)` of a run seeded with `base`.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0) noexcept {
    return mix64(mix64(mix64(base) ^ (stream * 0xd1b54a32d192ed03ULL)) ^ index);
}

inline Rng make_rng(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0) {
    return Rng(derive_seed(base, stream, index));
}

// The std distributions are implementation-defined, so record files would differ
// between standard libraries. These two are fixed by construction.

/// Uniform in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

/// Standard normal via Box-Muller (one value per call; the partner is discarded).
inline double standard_normal(Rng& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) {
        u1 = uniform01(rng);
    }
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace esbo
