#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace concord {

// Draw helpers are spelled out here instead of using <random> distributions,
// whose output is implementation-defined. Everything downstream of a seed
// replays identically on any platform.

inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;   // [0, 1)
}

inline bool bernoulli(double p, std::mt19937_64& rng) {
    return uniform01(rng) < p;
}

inline std::size_t uniform_index(std::size_t n, std::mt19937_64& rng) {
    auto i = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
    return i < n ? i : n - 1;
}

/// Samples an index proportionally to weights (cumulative inverse transform).
std::size_t weighted_index(const std::vector<double>& cumulative, std::mt19937_64& rng);

/// Prefix sums of weights; last entry is forced to 1 so sampling never
/// falls off the end.
std::vector<double> cumulative_weights(const std::vector<double>& weights);

}  // namespace concord
