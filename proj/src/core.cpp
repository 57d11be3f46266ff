#include "concord/core.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace concord {

void validate_dataset(const Dataset& data) {
    if (data.xs.empty()) {
        throw std::invalid_argument("dataset is empty");
    }
    if (data.xs.size() != data.ys.size()) {
        throw std::invalid_argument("dataset has " + std::to_string(data.xs.size()) +
                                    " rows but " + std::to_string(data.ys.size()) + " labels");
    }
    std::unordered_set<std::string> seen;
    seen.reserve(data.xs.size());
    for (std::size_t i = 0; i < data.n(); ++i) {
        if (data.ys[i] > 1) {
            throw std::invalid_argument("label for '" + data.xs[i].id + "' is not 0/1");
        }
        if (!seen.insert(data.xs[i].id).second) {
            throw std::invalid_argument("duplicate example id '" + data.xs[i].id + "'");
        }
    }
}

PredictionVector evaluate(const BaseModel& f, const Dataset& data) {
    PredictionVector out;
    out.values.reserve(data.n());
    for (const auto& x : data.xs) {
        out.values.push_back(f(x));
    }
    return out;
}

std::size_t GroupMask::count() const {
    std::size_t c = 0;
    for (auto b : member) {
        c += (b != 0);
    }
    return c;
}

namespace {

void require_aligned(std::size_t have, std::size_t want, const char* what) {
    if (have != want) {
        throw std::invalid_argument(std::string(what) + " has " + std::to_string(have) +
                                    " entries, dataset has " + std::to_string(want));
    }
}

}  // namespace

double brier_score(const PredictionVector& preds, const Dataset& data) {
    require_aligned(preds.size(), data.n(), "prediction vector");
    double sum = 0.0;
    for (std::size_t i = 0; i < data.n(); ++i) {
        const double d = preds.at(i) - static_cast<double>(data.ys[i]);
        sum += d * d;
    }
    return sum / static_cast<double>(data.n());
}

double group_mass(const GroupMask& g, const Dataset& data) {
    require_aligned(g.size(), data.n(), "group mask");
    return static_cast<double>(g.count()) / static_cast<double>(data.n());
}

DisagreementSplit disagreement_split(const PredictionVector& f1, const PredictionVector& f2,
                                     double epsilon, const Dataset& data) {
    require_aligned(f1.size(), data.n(), "first prediction vector");
    require_aligned(f2.size(), data.n(), "second prediction vector");
    if (!(epsilon > 0.0)) {
        throw std::invalid_argument("epsilon must be positive");
    }
    const std::size_t n = data.n();
    DisagreementSplit split;
    split.epsilon = epsilon;
    split.u_all.member.assign(n, 0);
    split.u_gt.member.assign(n, 0);
    split.u_lt.member.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = clamp01(f1.values[i]);
        const double b = clamp01(f2.values[i]);
        if (a - b > epsilon) {
            split.u_gt.member[i] = 1;
            split.u_all.member[i] = 1;
        } else if (b - a > epsilon) {
            split.u_lt.member[i] = 1;
            split.u_all.member[i] = 1;
        }
    }
    return split;
}

ViolationStats violation_stats(const PredictionVector& preds, const GroupMask& g,
                               const Dataset& data) {
    require_aligned(preds.size(), data.n(), "prediction vector");
    require_aligned(g.size(), data.n(), "group mask");
    std::size_t count = 0;
    double label_sum = 0.0;
    double pred_sum = 0.0;
    for (std::size_t i = 0; i < data.n(); ++i) {
        if (g.member[i]) {
            ++count;
            label_sum += static_cast<double>(data.ys[i]);
            pred_sum += preds.at(i);
        }
    }
    ViolationStats stats;
    if (count == 0) {
        return stats;
    }
    stats.mass = static_cast<double>(count) / static_cast<double>(data.n());
    stats.v_star = label_sum / static_cast<double>(count);
    stats.v_model = pred_sum / static_cast<double>(count);
    const double gap = stats.v_star - stats.v_model;
    stats.weighted_violation = stats.mass * gap * gap;
    return stats;
}

GridPoint round_to_grid(double v, long m) {
    if (m < 1) {
        throw std::invalid_argument("grid resolution must be at least 1");
    }
    if (!(std::fabs(v) <= 1.0)) {
        throw std::invalid_argument("value " + std::to_string(v) + " is outside [-1, 1]");
    }
    const double md = static_cast<double>(m);
    long lo = static_cast<long>(std::floor(v * md));
    if (lo < -m) lo = -m;
    if (lo > m) lo = m;
    long hi = lo < m ? lo + 1 : m;
    const double d_lo = std::fabs(v - static_cast<double>(lo) / md);
    const double d_hi = std::fabs(v - static_cast<double>(hi) / md);
    const long k = d_lo <= d_hi ? lo : hi;   // tie goes to the smaller k
    return GridPoint{k, static_cast<double>(k) / md};
}

}  // namespace concord
