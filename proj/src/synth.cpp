#include "concord/synth.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include <json.hpp>

#include "concord/io.hpp"
#include "concord/rng.hpp"

namespace concord {

DistKind dist_kind_from_string(const std::string& name) {
    if (name == "constant_half") return DistKind::constant_half;
    if (name == "random_bernoulli") return DistKind::random_bernoulli;
    if (name == "deterministic_coin") return DistKind::deterministic_coin;
    if (name == "piecewise_groups") return DistKind::piecewise_groups;
    throw std::invalid_argument("unknown distribution kind '" + name + "'");
}

const char* to_string(DistKind kind) {
    switch (kind) {
        case DistKind::constant_half: return "constant_half";
        case DistKind::random_bernoulli: return "random_bernoulli";
        case DistKind::deterministic_coin: return "deterministic_coin";
        default: return "piecewise_groups";
    }
}

Example SyntheticDistribution::example(std::size_t i) const {
    return Example{"x" + std::to_string(i), {static_cast<double>(i)}};
}

namespace {

std::size_t support_index(const Example& x) {
    if (x.features.empty()) {
        throw std::invalid_argument("example '" + x.id + "' carries no support index");
    }
    return static_cast<std::size_t>(x.features[0]);
}

}  // namespace

SyntheticDistribution make_distribution(DistKind kind, std::size_t size, std::uint64_t seed) {
    if (size < 1) {
        throw std::invalid_argument("distribution support must be nonempty");
    }
    SyntheticDistribution dist;
    dist.kind = kind;
    dist.weights.assign(size, 1.0 / static_cast<double>(size));
    dist.p_star.resize(size);
    std::mt19937_64 rng(seed);
    switch (kind) {
        case DistKind::constant_half:
            std::fill(dist.p_star.begin(), dist.p_star.end(), 0.5);
            break;
        case DistKind::deterministic_coin:
            for (auto& p : dist.p_star) {
                p = bernoulli(0.5, rng) ? 1.0 : 0.0;
            }
            break;
        case DistKind::random_bernoulli:
            for (auto& p : dist.p_star) {
                p = uniform01(rng);
            }
            break;
        case DistKind::piecewise_groups: {
            const std::size_t blocks = std::min<std::size_t>(4, size);
            const std::size_t block_len = (size + blocks - 1) / blocks;
            std::vector<double> levels(blocks);
            for (auto& level : levels) {
                level = uniform01(rng);
            }
            for (std::size_t i = 0; i < size; ++i) {
                dist.p_star[i] = levels[std::min(i / block_len, blocks - 1)];
            }
            break;
        }
    }
    return dist;
}

Dataset sample(const SyntheticDistribution& dist, std::size_t n, std::uint64_t seed) {
    if (n < 1) {
        throw std::invalid_argument("sample size must be at least 1");
    }
    const std::vector<double> cumulative = cumulative_weights(dist.weights);
    std::mt19937_64 rng(seed);
    Dataset data;
    data.xs.reserve(n);
    data.ys.reserve(n);
    for (std::size_t row = 0; row < n; ++row) {
        const std::size_t idx = weighted_index(cumulative, rng);
        const bool label = bernoulli(dist.p_star[idx], rng);
        data.xs.push_back(Example{"d" + std::to_string(row), {static_cast<double>(idx)}});
        data.ys.push_back(label ? 1 : 0);
    }
    return data;
}

double exact_brier(const BaseModel& f, const SyntheticDistribution& dist) {
    double total = 0.0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        const double v = clamp01(f(dist.example(i)));
        const double p = dist.p_star[i];
        total += dist.weights[i] * (p * (1.0 - v) * (1.0 - v) + (1.0 - p) * v * v);
    }
    return total;
}

BaseModel p_star_model(const SyntheticDistribution& dist) {
    auto p_star = std::make_shared<std::vector<double>>(dist.p_star);
    return [p_star](const Example& x) { return (*p_star)[support_index(x)]; };
}

PairDistEval evaluate_pair(const PatchedModelPair& pair, const SyntheticDistribution& dist,
                           double epsilon) {
    PairDistEval eval;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        const auto [v1, v2] = replay_predict(pair, dist.example(i));
        const double p = dist.p_star[i];
        const double w = dist.weights[i];
        eval.brier1 += w * (p * (1.0 - v1) * (1.0 - v1) + (1.0 - p) * v1 * v1);
        eval.brier2 += w * (p * (1.0 - v2) * (1.0 - v2) + (1.0 - p) * v2 * v2);
        if (std::fabs(v1 - v2) > epsilon) {
            eval.disagreement_mass += w;
        }
    }
    return eval;
}

double exact_disagreement_mass(const PatchedModelPair& pair, const SyntheticDistribution& dist,
                               double epsilon) {
    return evaluate_pair(pair, dist, epsilon).disagreement_mass;
}

ModelPairMaker opposed_bias_pair(double bias, int blocks) {
    if (blocks < 1) {
        throw std::invalid_argument("block count must be positive");
    }
    return [bias, blocks](const SyntheticDistribution& dist) {
        auto p_star = std::make_shared<std::vector<double>>(dist.p_star);
        const std::size_t block_len =
            (dist.size() + static_cast<std::size_t>(blocks) - 1) / static_cast<std::size_t>(blocks);
        auto signed_bias = [block_len, bias](std::size_t i) {
            return (i / block_len) % 2 == 0 ? bias : -bias;
        };
        BaseModel f1 = [p_star, signed_bias](const Example& x) {
            const std::size_t i = support_index(x);
            return clamp01((*p_star)[i] + signed_bias(i));
        };
        BaseModel f2 = [p_star, signed_bias](const Example& x) {
            const std::size_t i = support_index(x);
            return clamp01((*p_star)[i] - signed_bias(i));
        };
        return std::make_pair(f1, f2);
    };
}

ModelPairMaker versus_half_pair() {
    return [](const SyntheticDistribution& dist) {
        BaseModel f1 = p_star_model(dist);
        BaseModel f2 = [](const Example&) { return 0.5; };
        return std::make_pair(f1, f2);
    };
}

ModelPairMaker corrupted_copies_pair(double amplitude, std::uint64_t seed) {
    return [amplitude, seed](const SyntheticDistribution& dist) {
        auto noisy = [&](std::uint64_t stream) {
            std::mt19937_64 local(seed ^ (stream * 0x9e3779b97f4a7c15ULL));
            auto values = std::make_shared<std::vector<double>>(dist.p_star);
            for (auto& v : *values) {
                v = clamp01(v + amplitude * (2.0 * uniform01(local) - 1.0));
            }
            return values;
        };
        auto v1 = noisy(1);
        auto v2 = noisy(2);
        BaseModel f1 = [v1](const Example& x) { return (*v1)[support_index(x)]; };
        BaseModel f2 = [v2](const Example& x) { return (*v2)[support_index(x)]; };
        return std::make_pair(f1, f2);
    };
}

ExperimentReport generalization_experiment(const SyntheticDistribution& dist,
                                           const ModelPairMaker& maker,
                                           const ExperimentConfig& config) {
    if (config.trials < 1) {
        throw std::invalid_argument("at least one trial is required");
    }
    if (config.n < 1) {
        throw std::invalid_argument("sample size must be at least 1");
    }
    if (!(config.delta > 0.0 && config.delta < 1.0)) {
        throw std::invalid_argument("delta must be in (0, 1)");
    }
    const ReconcileConfig rc = ReconcileConfig::make(config.alpha, config.epsilon);

    ExperimentReport report;
    report.config = config;
    const double inv = 1.0 / (config.alpha * config.epsilon * config.epsilon);
    const double nd = static_cast<double>(config.n);
    const double m1d = static_cast<double>(rc.grid_m + 1);
    report.mass_error_term =
        std::sqrt((32.0 * inv + 1.0) * std::log(8.0 * m1d / config.delta) / nd);
    report.brier_error_term =
        2.0 * std::sqrt((16.0 * inv + 1.0) * std::log(64.0 * m1d / config.delta) / nd);
    report.rounds_bound = static_cast<long>(std::ceil(32.0 * inv));

    const auto [f1, f2] = maker(dist);
    const double brier1_initial = exact_brier(f1, dist);
    const double brier2_initial = exact_brier(f2, dist);
    const double floor_per_round = config.alpha * config.epsilon * config.epsilon / 16.0;

    std::mt19937_64 seeder(config.seed);
    report.trials.reserve(static_cast<std::size_t>(config.trials));
    for (int trial = 0; trial < config.trials; ++trial) {
        const std::uint64_t trial_seed = seeder();
        const Dataset data = sample(dist, config.n, trial_seed);
        const ReconcileRun run = reconcile(f1, f2, data, rc);
        const PairDistEval eval = evaluate_pair(run.pair, dist, config.epsilon);

        TrialResult result;
        result.rounds = static_cast<long>(run.transcript.records.size());
        result.t1 = run.transcript.t1;
        result.t2 = run.transcript.t2;
        result.empirical_mass_final = run.final_disagreement_mass;
        result.dist_mass_final = eval.disagreement_mass;
        result.brier1_initial = brier1_initial;
        result.brier2_initial = brier2_initial;
        result.brier1_final = eval.brier1;
        result.brier2_final = eval.brier2;
        result.brier1_ok = eval.brier1 <= brier1_initial -
                                              static_cast<double>(result.t1) * floor_per_round +
                                              report.brier_error_term;
        result.brier2_ok = eval.brier2 <= brier2_initial -
                                              static_cast<double>(result.t2) * floor_per_round +
                                              report.brier_error_term;
        result.mass_ok = eval.disagreement_mass < config.alpha + report.mass_error_term;
        result.within_two_alpha = eval.disagreement_mass < 2.0 * config.alpha;
        result.pass = result.brier1_ok && result.brier2_ok && result.mass_ok;
        report.pass_count += result.pass ? 1 : 0;
        report.strict_pass_count += (result.pass && result.within_two_alpha) ? 1 : 0;
        report.trials.push_back(result);
    }

    // One-sided binomial band around the target rate 1 - delta.
    const double t = static_cast<double>(config.trials);
    const double band = 1.645 * std::sqrt(t * config.delta * (1.0 - config.delta));
    report.required_passes =
        std::max(0, static_cast<int>(std::ceil(t * (1.0 - config.delta) - band)));
    report.aggregate_pass = report.pass_count >= report.required_passes &&
                            report.strict_pass_count >= report.required_passes;
    return report;
}

std::string report_to_json(const ExperimentReport& report) {
    nlohmann::json j;
    j["config"] = {{"alpha", report.config.alpha},   {"epsilon", report.config.epsilon},
                   {"delta", report.config.delta},   {"n", report.config.n},
                   {"trials", report.config.trials}, {"seed", report.config.seed}};
    j["mass_error_term"] = report.mass_error_term;
    j["brier_error_term"] = report.brier_error_term;
    j["rounds_bound"] = report.rounds_bound;
    j["pass_count"] = report.pass_count;
    j["strict_pass_count"] = report.strict_pass_count;
    j["required_passes"] = report.required_passes;
    j["aggregate_pass"] = report.aggregate_pass;

    std::vector<long> rounds;
    std::vector<double> masses;
    j["trials"] = nlohmann::json::array();
    for (const TrialResult& r : report.trials) {
        rounds.push_back(r.rounds);
        masses.push_back(r.dist_mass_final);
        j["trials"].push_back({{"rounds", r.rounds},
                               {"t1", r.t1},
                               {"t2", r.t2},
                               {"empirical_mass_final", r.empirical_mass_final},
                               {"dist_mass_final", r.dist_mass_final},
                               {"brier1_initial", r.brier1_initial},
                               {"brier2_initial", r.brier2_initial},
                               {"brier1_final", r.brier1_final},
                               {"brier2_final", r.brier2_final},
                               {"brier1_ok", r.brier1_ok},
                               {"brier2_ok", r.brier2_ok},
                               {"mass_ok", r.mass_ok},
                               {"within_two_alpha", r.within_two_alpha},
                               {"pass", r.pass}});
    }
    std::sort(rounds.begin(), rounds.end());
    std::sort(masses.begin(), masses.end());
    auto quantiles = [](const auto& sorted) {
        const std::size_t n = sorted.size();
        return nlohmann::json{{"min", sorted.front()},
                              {"median", sorted[n / 2]},
                              {"max", sorted.back()}};
    };
    j["aggregates"] = {{"rounds", quantiles(rounds)}, {"dist_mass_final", quantiles(masses)}};
    return j.dump();
}

std::string distribution_to_csv(const SyntheticDistribution& dist) {
    std::string out = "x_id,weight,p_star\n";
    for (std::size_t i = 0; i < dist.size(); ++i) {
        out += "x" + std::to_string(i) + "," + format_double(dist.weights[i]) + "," +
               format_double(dist.p_star[i]) + "\n";
    }
    return out;
}

}  // namespace concord
