#pragma once

#include <random>

namespace tsc {

using Rng = std::mt19937_64;

/// Uniform in [0, 1) from the top 53 bits of one draw. A fixed mapping keeps
/// results identical across standard library implementations.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform integer in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    const auto k = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
    return k < n ? k : n - 1;
}

} // namespace tsc
