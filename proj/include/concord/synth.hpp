#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "concord/core.hpp"
#include "concord/reconcile.hpp"

namespace concord {

enum class DistKind { constant_half, random_bernoulli, deterministic_coin, piecewise_groups };

DistKind dist_kind_from_string(const std::string& name);
const char* to_string(DistKind kind);

/// A finite-support distribution with known per-point outcome probabilities,
/// so Brier scores and disagreement masses are exact sums instead of
/// estimates. Support point i is presented to models as an Example with
/// features {i}.
struct SyntheticDistribution {
    DistKind kind = DistKind::constant_half;
    std::vector<double> weights;   // sums to 1
    std::vector<double> p_star;    // true conditional probability per point

    std::size_t size() const { return weights.size(); }
    Example example(std::size_t i) const;
};

/// constant_half: p* = 1/2 everywhere. deterministic_coin: p* in {0,1} by a
/// seeded fair coin (same outcome statistics as constant_half, different
/// world). random_bernoulli: p* uniform on [0,1]. piecewise_groups: p*
/// constant on contiguous blocks. Weights are uniform.
SyntheticDistribution make_distribution(DistKind kind, std::size_t size, std::uint64_t seed);

/// n i.i.d. draws: a support point by weight, then a label with probability
/// p* of that point. Row ids are fresh ("d0", "d1", ...); features carry the
/// support index.
Dataset sample(const SyntheticDistribution& dist, std::size_t n, std::uint64_t seed);

/// Exact Brier score of a model against the distribution (predictions
/// clamped to [0,1]):  sum_x w(x) [p*(x)(1-f(x))^2 + (1-p*(x))f(x)^2].
double exact_brier(const BaseModel& f, const SyntheticDistribution& dist);

/// The true-probability model itself; no other model scores below it.
BaseModel p_star_model(const SyntheticDistribution& dist);

struct PairDistEval {
    double brier1 = 0.0;
    double brier2 = 0.0;
    double disagreement_mass = 0.0;
};

PairDistEval evaluate_pair(const PatchedModelPair& pair, const SyntheticDistribution& dist,
                           double epsilon);
double exact_disagreement_mass(const PatchedModelPair& pair, const SyntheticDistribution& dist,
                               double epsilon);

using ModelPairMaker =
    std::function<std::pair<BaseModel, BaseModel>(const SyntheticDistribution&)>;

/// f1 = p* + bias, f2 = p* - bias with the sign of the bias flipping across
/// contiguous blocks of the support (clamped); large initial disagreement.
ModelPairMaker opposed_bias_pair(double bias, int blocks);
ModelPairMaker versus_half_pair();
ModelPairMaker corrupted_copies_pair(double amplitude, std::uint64_t seed);

struct ExperimentConfig {
    double alpha = 0.0;
    double epsilon = 0.0;
    double delta = 0.0;
    std::size_t n = 0;        // sample size per trial
    int trials = 0;
    std::uint64_t seed = 0;
};

struct TrialResult {
    long rounds = 0;
    long t1 = 0;
    long t2 = 0;
    double empirical_mass_final = 0.0;
    double dist_mass_final = 0.0;
    double brier1_initial = 0.0;   // on the distribution
    double brier2_initial = 0.0;
    double brier1_final = 0.0;
    double brier2_final = 0.0;
    bool brier1_ok = false;
    bool brier2_ok = false;
    bool mass_ok = false;
    bool within_two_alpha = false;
    bool pass = false;             // the three out-of-sample conclusions
};

struct ExperimentReport {
    ExperimentConfig config;
    double mass_error_term = 0.0;    // sqrt((32/(a e^2)+1) ln(8(m+1)/delta) / n)
    double brier_error_term = 0.0;   // 2 sqrt((16/(a e^2)+1) ln(64(m+1)/delta) / n)
    long rounds_bound = 0;           // ceil(32/(a e^2)); every trial must respect it
    std::vector<TrialResult> trials;
    int pass_count = 0;              // trials passing the three conclusions
    int strict_pass_count = 0;       // additionally dist mass < 2*alpha
    int required_passes = 0;         // one-sided binomial band at rate 1-delta
    bool aggregate_pass = false;
};

std::string report_to_json(const ExperimentReport& report);

/// Monte Carlo check that reconciliation on an i.i.d. sample carries its
/// guarantees to the sampling distribution: per trial, draw a dataset, run
/// reconcile, then compare exact distribution-level Brier scores and
/// disagreement mass against the finite-sample bounds evaluated at n.
ExperimentReport generalization_experiment(const SyntheticDistribution& dist,
                                           const ModelPairMaker& maker,
                                           const ExperimentConfig& config);

/// CSV with one support point per line: x_id, weight, p_star.
std::string distribution_to_csv(const SyntheticDistribution& dist);

}  // namespace concord
