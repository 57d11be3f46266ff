#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "concord/core.hpp"
#include "concord/reconcile.hpp"

namespace concord {

/// Laplace(scale) via the inverse CDF of a uniform u in (-1/2, 1/2]:
/// -scale * sgn(u) * ln(1 - 2|u|).
double laplace_from_uniform(double u, double scale);
double laplace_sample(double scale, std::mt19937_64& rng);

/// Multipliers on the threshold and accepted-update budget. The analysis
/// fixes both only up to constants; defaults keep the formulas bare.
struct ContestConstants {
    double c_tau = 1.0;
    double c_cap = 1.0;
};

struct ContestParams {
    std::size_t n = 0;            // contestation dataset size
    long max_contestations = 0;   // K, total attempts the state will serve
    long max_accepts = 0;         // C, accepted updates before halting
    double delta = 0.0;           // failure probability knob
    double tau = 0.0;             // acceptance threshold
    double privacy_epsilon = 0.0;
    double epsilon1 = 0.0;        // threshold / test share
    double epsilon2 = 0.0;        // answer share
    ContestConstants constants;

    double noise_scale(double epsilon_part) const;   // sqrt(32*C*ln(1/delta)) / (eps*n)
};

enum class Verdict { accepted, rejected, exhausted };

inline const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::accepted: return "accepted";
        case Verdict::rejected: return "rejected";
        default: return "exhausted";
    }
}

struct ContestOutcome {
    Verdict verdict = Verdict::rejected;
    double delta = 0.0;       // applied patch (accepted only)
    double mu_tilde = 0.0;    // noisy group mass (accepted only)
    double eta_tilde = 0.0;   // noisy residual sum (accepted only)
};

struct PatchLogEntry {
    std::vector<std::uint32_t> rows;   // group as row indices into the dataset
    double delta = 0.0;
};

/// A model bundled with a private held-out dataset and a noisy-threshold
/// protocol. Contestations naming a group with a large mean residual are
/// accepted and patch the model; weak ones are rejected. Only accepted
/// contestations consume the update budget, so a single dataset survives a
/// long stream of attempts.
struct ContestableState {
    ContestParams params;
    std::shared_ptr<const Dataset> data;
    BaseModel base;                    // not serialized; checkpoints reload a table
    std::vector<double> base_values;   // base model on data
    PredictionVector current;          // raw working values on data
    long attempted = 0;                // t
    long accepted = 0;                 // c
    double noisy_threshold = 0.0;
    std::mt19937_64 rng;
    std::vector<PatchLogEntry> patch_log;

    bool exhausted() const {
        return accepted >= params.max_accepts || attempted >= params.max_contestations;
    }
    double predict_row(std::size_t i) const { return clamp01(current.values[i]); }
};

/// Derives the threshold and budgets from (n, K, delta), draws the initial
/// noisy threshold, and snapshots the base model on the dataset. Throws
/// std::invalid_argument when the derived threshold reaches 1 (dataset too
/// small for the requested K) or parameters are out of range. The dataset
/// must have been drawn independently of f0.
ContestableState new_contestable(const BaseModel& f0, std::shared_ptr<const Dataset> data,
                                 long K, double delta, std::uint64_t seed,
                                 ContestConstants constants = {});

/// One contestation. Computes the mean residual of the current model on g,
/// compares its magnitude plus noise against the noisy threshold, and on
/// acceptance patches the model by the noisy residual mean (noisy residual
/// sum over noisy mass, mass floored at tau/2, patch clamped to [-1,1]).
/// Exhausted states refuse without any state change.
ContestOutcome contest(ContestableState& state, const GroupMask& g);

enum class SweepStatus { converged, stalled, exhausted };

inline const char* to_string(SweepStatus s) {
    switch (s) {
        case SweepStatus::converged: return "converged";
        case SweepStatus::stalled: return "stalled";
        default: return "exhausted";
    }
}

struct SweepRecord {
    double mass_before = 0.0;        // disagreement mass on eval data at sweep top
    std::vector<Verdict> verdicts;   // four calls: (m1,gt),(m1,lt),(m2,gt),(m2,lt)
};

struct ContestReconcileOutcome {
    SweepStatus status = SweepStatus::converged;
    double final_mass = 0.0;
    long sweeps = 0;
    std::vector<SweepRecord> records;
};

/// Reconciliation through the contest interface: while the pair's
/// disagreement mass on eval_data is at least alpha, both models are
/// contested on both disagreement sides (groups frozen at the top of each
/// sweep). Stops on convergence, on a full sweep of four rejections (noise
/// can reject a true violation), or when either model's budget runs out.
/// Both states must be fresh (no prior accepted patches): groups recorded as
/// row sets do not extend to foreign points.
ContestReconcileOutcome contestable_reconcile(ContestableState& m1, ContestableState& m2,
                                              const Dataset& eval_data, double alpha,
                                              double epsilon);

std::string checkpoint_to_json(const ContestableState& state);
ContestableState checkpoint_from_json(const std::string& text);

}  // namespace concord
