#pragma once

#include <random>
#include <string>
#include <vector>

#include "concord/core.hpp"
#include "concord/rng.hpp"

namespace testutil {

inline concord::Dataset make_dataset(const std::vector<int>& labels) {
    concord::Dataset data;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        data.xs.push_back(concord::Example{"p" + std::to_string(i), {}});
        data.ys.push_back(labels[i] ? 1 : 0);
    }
    return data;
}

inline concord::PredictionVector make_preds(const std::vector<double>& values) {
    return concord::PredictionVector{values, false};
}

inline concord::Dataset random_dataset(std::size_t n, std::mt19937_64& rng,
                                       double label_p = 0.5) {
    concord::Dataset data;
    for (std::size_t i = 0; i < n; ++i) {
        data.xs.push_back(concord::Example{"p" + std::to_string(i), {}});
        data.ys.push_back(concord::bernoulli(label_p, rng) ? 1 : 0);
    }
    return data;
}

inline concord::PredictionVector random_unit_preds(std::size_t n, std::mt19937_64& rng) {
    concord::PredictionVector preds;
    preds.values.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        preds.values.push_back(concord::uniform01(rng));
    }
    return preds;
}

inline concord::GroupMask random_mask(std::size_t n, std::mt19937_64& rng, double p = 0.5) {
    concord::GroupMask mask = concord::GroupMask::none(n);
    for (std::size_t i = 0; i < n; ++i) {
        mask.member[i] = concord::bernoulli(p, rng) ? 1 : 0;
    }
    return mask;
}

}  // namespace testutil
