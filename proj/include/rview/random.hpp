#pragma once

#include <cstdint>

#include "rview/world.hpp"

namespace rview {

/// Uniform double in [0, 1) from the top 53 bits of one engine draw.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// splitmix64 finalizer, used to derive independent child seeds from (seed, counter).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t counter) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (counter + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace rview
