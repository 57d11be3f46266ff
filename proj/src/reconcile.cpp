#include "concord/reconcile.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace concord {

long default_grid_m(double alpha, double epsilon) {
    return static_cast<long>(std::ceil(2.0 / (std::sqrt(alpha) * epsilon)));
}

ReconcileConfig ReconcileConfig::make(double alpha, double epsilon) {
    ReconcileConfig cfg;
    cfg.alpha = alpha;
    cfg.epsilon = epsilon;
    validate_config(cfg);   // range checks before deriving m
    cfg.grid_m = default_grid_m(alpha, epsilon);
    cfg.max_rounds_cap =
        static_cast<long>(std::ceil(32.0 / (alpha * epsilon * epsilon))) + 8;
    return cfg;
}

void validate_config(const ReconcileConfig& cfg) {
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) {
        throw std::invalid_argument("alpha must be in (0, 1)");
    }
    if (!(cfg.epsilon > 0.0 && cfg.epsilon <= 1.0)) {
        throw std::invalid_argument("epsilon must be in (0, 1]");
    }
    if (cfg.grid_m != 0 && cfg.grid_m < default_grid_m(cfg.alpha, cfg.epsilon)) {
        throw std::invalid_argument("grid_m " + std::to_string(cfg.grid_m) +
                                    " is below the required resolution " +
                                    std::to_string(default_grid_m(cfg.alpha, cfg.epsilon)));
    }
}

PredictionVector patch(const PredictionVector& preds, const GroupMask& g, double delta) {
    if (preds.size() != g.size()) {
        throw std::invalid_argument("patch inputs are misaligned");
    }
    PredictionVector out = preds;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (g.member[i]) {
            out.values[i] += delta;
        }
    }
    return out;
}

SelectedUpdate select_update(const PredictionVector& f1, const PredictionVector& f2,
                             const DisagreementSplit& split, const Dataset& data) {
    const std::size_t n = data.n();
    if (f1.size() != n || f2.size() != n || split.u_all.size() != n) {
        throw std::invalid_argument("select_update inputs are misaligned");
    }
    // One pass accumulates both sides' label and prediction sums.
    std::size_t count[2] = {0, 0};
    double label_sum[2] = {0.0, 0.0};
    double pred_sum[2][2] = {{0.0, 0.0}, {0.0, 0.0}};   // [side][model]
    for (std::size_t i = 0; i < n; ++i) {
        int side;
        if (split.u_gt.member[i]) {
            side = 0;
        } else if (split.u_lt.member[i]) {
            side = 1;
        } else {
            continue;
        }
        ++count[side];
        label_sum[side] += static_cast<double>(data.ys[i]);
        pred_sum[side][0] += f1.at(i);
        pred_sum[side][1] += f2.at(i);
    }
    if (count[0] + count[1] == 0) {
        throw std::logic_error("select_update called with an empty disagreement region");
    }

    SelectedUpdate best;
    bool have = false;
    // Fixed candidate order (1,gt), (1,lt), (2,gt), (2,lt); strict improvement
    // only, so the earliest candidate wins ties.
    for (int model = 1; model <= 2; ++model) {
        for (int side = 0; side < 2; ++side) {
            ViolationStats stats;
            if (count[side] > 0) {
                stats.mass = static_cast<double>(count[side]) / static_cast<double>(n);
                stats.v_star = label_sum[side] / static_cast<double>(count[side]);
                stats.v_model = pred_sum[side][model - 1] / static_cast<double>(count[side]);
                const double gap = stats.v_star - stats.v_model;
                stats.weighted_violation = stats.mass * gap * gap;
            }
            if (!have || stats.weighted_violation > best.stats.weighted_violation) {
                best.model = model;
                best.direction = side == 0 ? Direction::gt : Direction::lt;
                best.stats = stats;
                have = true;
            }
        }
    }
    return best;
}

ReconcileRun reconcile(const BaseModel& f1, const BaseModel& f2, const Dataset& data,
                       const ReconcileConfig& cfg) {
    validate_dataset(data);
    validate_config(cfg);
    if (cfg.grid_m < 1) {
        throw std::invalid_argument("config is missing the grid resolution");
    }

    ReconcileRun run;
    run.f1_final = evaluate(f1, data);
    run.f2_final = evaluate(f2, data);
    for (std::size_t i = 0; i < data.n(); ++i) {
        if (run.f1_final.values[i] < 0.0 || run.f1_final.values[i] > 1.0 ||
            run.f2_final.values[i] < 0.0 || run.f2_final.values[i] > 1.0) {
            throw std::invalid_argument("base model prediction outside [0,1] at '" +
                                        data.xs[i].id + "'");
        }
    }
    run.initial_brier1 = brier_score(run.f1_final, data);
    run.initial_brier2 = brier_score(run.f2_final, data);
    run.transcript.config = cfg;

    const long cap = cfg.max_rounds_cap.value_or(
        static_cast<long>(std::ceil(32.0 / (cfg.alpha * cfg.epsilon * cfg.epsilon))) + 8);
    const double md = static_cast<double>(cfg.grid_m);
    double brier1 = run.initial_brier1;
    double brier2 = run.initial_brier2;

    for (long t = 0;; ++t) {
        DisagreementSplit split =
            disagreement_split(run.f1_final, run.f2_final, cfg.epsilon, data);
        const double mass = group_mass(split.u_all, data);
        if (mass < cfg.alpha) {
            run.final_disagreement_mass = mass;
            break;
        }
        if (t >= cap) {
            throw std::runtime_error("round cap " + std::to_string(cap) +
                                     " exceeded with disagreement mass " +
                                     std::to_string(mass) + "; patching is not converging");
        }
        const SelectedUpdate sel = select_update(run.f1_final, run.f2_final, split, data);
        const GroupMask& group = split.mask(sel.direction);
        const double delta_tilde = sel.stats.v_star - sel.stats.v_model;
        const GridPoint grid = round_to_grid(delta_tilde, cfg.grid_m);

        UpdateRecord rec;
        rec.round = t;
        rec.model = sel.model;
        rec.direction = sel.direction;
        rec.delta_k = grid.k;
        rec.diag.group_mass = sel.stats.mass;
        rec.diag.v_star = sel.stats.v_star;
        rec.diag.v_model = sel.stats.v_model;

        const double applied = static_cast<double>(grid.k) / md;
        if (sel.model == 1) {
            run.f1_final = patch(run.f1_final, group, applied);
            const double after = brier_score(run.f1_final, data);
            rec.diag.brier_drop = brier1 - after;
            brier1 = after;
            ++run.transcript.t1;
        } else {
            run.f2_final = patch(run.f2_final, group, applied);
            const double after = brier_score(run.f2_final, data);
            rec.diag.brier_drop = brier2 - after;
            brier2 = after;
            ++run.transcript.t2;
        }
        run.transcript.records.push_back(rec);
    }

    run.final_brier1 = brier1;
    run.final_brier2 = brier2;
    run.pair = PatchedModelPair{f1, f2, run.transcript};
    return run;
}

std::pair<double, double> replay_predict(const PatchedModelPair& pair, const Example& x) {
    double v1 = pair.base_f1(x);
    double v2 = pair.base_f2(x);
    const ReconcileConfig& cfg = pair.transcript.config;
    const double md = static_cast<double>(cfg.grid_m);
    for (const UpdateRecord& rec : pair.transcript.records) {
        const double a = clamp01(v1);
        const double b = clamp01(v2);
        const bool in_group = rec.direction == Direction::gt ? (a - b > cfg.epsilon)
                                                             : (b - a > cfg.epsilon);
        if (in_group) {
            const double applied = static_cast<double>(rec.delta_k) / md;
            if (rec.model == 1) {
                v1 += applied;
            } else {
                v2 += applied;
            }
        }
    }
    return {clamp01(v1), clamp01(v2)};
}

ReferenceClassGap reference_class_gap(const PredictionVector& f1_final,
                                      const PredictionVector& f2_final,
                                      const ReconcileConfig& cfg, const GroupMask& E,
                                      const Dataset& data) {
    if (E.size() != data.n() || f1_final.size() != data.n() || f2_final.size() != data.n()) {
        throw std::invalid_argument("reference_class_gap inputs are misaligned");
    }
    std::size_t count = 0;
    double sum1 = 0.0;
    double sum2 = 0.0;
    for (std::size_t i = 0; i < data.n(); ++i) {
        if (E.member[i]) {
            ++count;
            sum1 += clamp01(f1_final.values[i]);
            sum2 += clamp01(f2_final.values[i]);
        }
    }
    if (count == 0) {
        throw std::invalid_argument("reference class is empty");
    }
    ReferenceClassGap gap;
    gap.p1 = sum1 / static_cast<double>(count);
    gap.p2 = sum2 / static_cast<double>(count);
    const double mass = static_cast<double>(count) / static_cast<double>(data.n());
    gap.bound = cfg.alpha / mass + cfg.epsilon;
    gap.within = std::fabs(gap.p1 - gap.p2) <= gap.bound;
    return gap;
}

ReferenceClassGap reference_class_gap(const PatchedModelPair& pair, const GroupMask& E,
                                      const Dataset& data) {
    PredictionVector f1;
    PredictionVector f2;
    f1.values.reserve(data.n());
    f2.values.reserve(data.n());
    for (const auto& x : data.xs) {
        const auto [p1, p2] = replay_predict(pair, x);
        f1.values.push_back(p1);
        f2.values.push_back(p2);
    }
    return reference_class_gap(f1, f2, pair.transcript.config, E, data);
}

std::string transcript_to_json(const Transcript& transcript) {
    nlohmann::json j;
    j["config"] = {{"alpha", transcript.config.alpha},
                   {"epsilon", transcript.config.epsilon},
                   {"m", transcript.config.grid_m}};
    j["records"] = nlohmann::json::array();
    for (const UpdateRecord& rec : transcript.records) {
        j["records"].push_back({{"t", rec.round},
                                {"model", rec.model},
                                {"direction", to_string(rec.direction)},
                                {"k", rec.delta_k}});
    }
    j["t1"] = transcript.t1;
    j["t2"] = transcript.t2;
    return j.dump();
}

Transcript transcript_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    Transcript transcript;
    transcript.config.alpha = j.at("config").at("alpha").get<double>();
    transcript.config.epsilon = j.at("config").at("epsilon").get<double>();
    transcript.config.grid_m = j.at("config").at("m").get<long>();
    validate_config(transcript.config);
    transcript.t1 = j.at("t1").get<long>();
    transcript.t2 = j.at("t2").get<long>();
    for (const auto& item : j.at("records")) {
        UpdateRecord rec;
        rec.round = item.at("t").get<long>();
        rec.model = item.at("model").get<int>();
        const std::string dir = item.at("direction").get<std::string>();
        if (dir == "gt") {
            rec.direction = Direction::gt;
        } else if (dir == "lt") {
            rec.direction = Direction::lt;
        } else {
            throw std::invalid_argument("unknown direction '" + dir + "' in transcript");
        }
        rec.delta_k = item.at("k").get<long>();
        if (rec.model != 1 && rec.model != 2) {
            throw std::invalid_argument("transcript model index must be 1 or 2");
        }
        if (rec.delta_k < -transcript.config.grid_m || rec.delta_k > transcript.config.grid_m) {
            throw std::invalid_argument("transcript patch step exceeds the grid");
        }
        transcript.records.push_back(rec);
    }
    if (static_cast<long>(transcript.records.size()) != transcript.t1 + transcript.t2) {
        throw std::invalid_argument("transcript per-model counts do not add up");
    }
    return transcript;
}

}  // namespace concord
