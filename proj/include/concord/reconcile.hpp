#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "concord/core.hpp"

namespace concord {

/// Grid resolution that keeps the rounding loss below half the guaranteed
/// per-round violation: ceil(2 / (sqrt(alpha) * epsilon)).
long default_grid_m(double alpha, double epsilon);

struct ReconcileConfig {
    double alpha = 0.0;       // halt once disagreement mass drops below this
    double epsilon = 0.0;     // prediction gap that counts as a disagreement
    long grid_m = 0;          // patch sizes are integer multiples of 1/grid_m
    std::optional<long> max_rounds_cap;   // tripwire, not a tuning knob

    static ReconcileConfig make(double alpha, double epsilon);
};

/// Throws std::invalid_argument unless alpha in (0,1), epsilon in (0,1] and
/// grid_m is at least default_grid_m(alpha, epsilon).
void validate_config(const ReconcileConfig& cfg);

struct RoundDiagnostics {
    double group_mass = 0.0;
    double v_star = 0.0;
    double v_model = 0.0;
    double brier_drop = 0.0;   // recomputed drop of the patched model, raw accounting
};

/// One update: which model was patched, on which disagreement side, and by
/// how many grid steps. Diagnostics are informational; replay only reads
/// (round, model, direction, delta_k).
struct UpdateRecord {
    long round = 0;
    int model = 0;             // 1 or 2
    Direction direction = Direction::gt;
    long delta_k = 0;          // applied patch is delta_k / grid_m
    RoundDiagnostics diag{};
};

/// Together with the two base models, a transcript fully determines the pair
/// of output models: each round's group is reconstructible from the evolving
/// pair, so replaying the records reproduces every patch.
struct Transcript {
    ReconcileConfig config;
    std::vector<UpdateRecord> records;
    long t1 = 0;
    long t2 = 0;
};

std::string transcript_to_json(const Transcript& transcript);
Transcript transcript_from_json(const std::string& text);

struct PatchedModelPair {
    BaseModel base_f1;
    BaseModel base_f2;
    Transcript transcript;
};

/// Adds delta to preds on g, leaving other entries untouched. Raw values; no
/// clamping. With delta equal to the mean residual on g, the Brier score
/// drops by exactly mass(g) * delta^2.
PredictionVector patch(const PredictionVector& preds, const GroupMask& g, double delta);

struct SelectedUpdate {
    int model = 0;
    Direction direction = Direction::gt;
    ViolationStats stats;
};

/// Argmax of mass * (v_star - v_model)^2 over the four (model, side)
/// candidates. Ties break in the fixed order (1,gt), (1,lt), (2,gt), (2,lt)
/// so transcripts are canonical. Requires a nonempty disagreement region.
SelectedUpdate select_update(const PredictionVector& f1, const PredictionVector& f2,
                             const DisagreementSplit& split, const Dataset& data);

struct ReconcileRun {
    PatchedModelPair pair;
    Transcript transcript;
    PredictionVector f1_final;   // raw working values on the input dataset
    PredictionVector f2_final;
    double initial_brier1 = 0.0;
    double initial_brier2 = 0.0;
    double final_brier1 = 0.0;   // raw accounting
    double final_brier2 = 0.0;
    double final_disagreement_mass = 0.0;
};

/// Iterated falsify-and-patch: while the epsilon-disagreement mass is at
/// least alpha, patch whichever model shows the largest group mean
/// inconsistency on a disagreement side, with the correction rounded to the
/// grid. Each round provably lowers the patched model's Brier score by at
/// least alpha*epsilon^2/16, which bounds the total number of rounds.
ReconcileRun reconcile(const BaseModel& f1, const BaseModel& f2, const Dataset& data,
                       const ReconcileConfig& cfg);

/// Evaluates the reconciled pair at any point, seen or unseen, by replaying
/// the transcript: membership in each round's group is decided from the
/// evolving pair exactly as during the original run. Outputs are clamped.
std::pair<double, double> replay_predict(const PatchedModelPair& pair, const Example& x);

struct ReferenceClassGap {
    double p1 = 0.0;
    double p2 = 0.0;
    double bound = 0.0;   // alpha / mass(E) + epsilon
    bool within = false;
};

/// The two models' implied outcome rates over a reference class E, and the
/// agreement bound that reconciliation guarantees for any E of positive mass.
ReferenceClassGap reference_class_gap(const PredictionVector& f1_final,
                                      const PredictionVector& f2_final,
                                      const ReconcileConfig& cfg, const GroupMask& E,
                                      const Dataset& data);
ReferenceClassGap reference_class_gap(const PatchedModelPair& pair, const GroupMask& E,
                                      const Dataset& data);

}  // namespace concord
