#include "concord/rng.hpp"

#include <algorithm>
#include <stdexcept>

namespace concord {

std::vector<double> cumulative_weights(const std::vector<double>& weights) {
    if (weights.empty()) {
        throw std::invalid_argument("empty weight vector");
    }
    std::vector<double> cumulative(weights.size());
    double running = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] < 0.0) {
            throw std::invalid_argument("negative weight");
        }
        running += weights[i];
        cumulative[i] = running;
    }
    if (running <= 0.0) {
        throw std::invalid_argument("weights sum to zero");
    }
    for (auto& c : cumulative) {
        c /= running;
    }
    cumulative.back() = 1.0;
    return cumulative;
}

std::size_t weighted_index(const std::vector<double>& cumulative, std::mt19937_64& rng) {
    const double u = uniform01(rng);
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    const auto i = static_cast<std::size_t>(it - cumulative.begin());
    return i < cumulative.size() ? i : cumulative.size() - 1;
}

}  // namespace concord
