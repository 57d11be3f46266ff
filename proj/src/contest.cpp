#include "concord/contest.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "concord/rng.hpp"

namespace concord {

double laplace_from_uniform(double u, double scale) {
    if (!(scale > 0.0)) {
        throw std::invalid_argument("laplace scale must be positive");
    }
    if (u == 0.0) {
        return 0.0;
    }
    const double sign = u > 0.0 ? 1.0 : -1.0;
    // u == 1/2 has probability 2^-53; keep the draw finite.
    const double tail = std::max(1.0 - 2.0 * std::fabs(u), 1e-300);
    return -scale * sign * std::log(tail);
}

double laplace_sample(double scale, std::mt19937_64& rng) {
    const double u = 0.5 - uniform01(rng);   // (-1/2, 1/2]
    return laplace_from_uniform(u, scale);
}

double ContestParams::noise_scale(double epsilon_part) const {
    return std::sqrt(32.0 * static_cast<double>(max_accepts) * std::log(1.0 / delta)) /
           (epsilon_part * static_cast<double>(n));
}

ContestableState new_contestable(const BaseModel& f0, std::shared_ptr<const Dataset> data,
                                 long K, double delta, std::uint64_t seed,
                                 ContestConstants constants) {
    if (!data) {
        throw std::invalid_argument("contestation dataset is required");
    }
    validate_dataset(*data);
    if (K < 1) {
        throw std::invalid_argument("contestation budget K must be at least 1");
    }
    if (!(delta > 0.0 && delta < 1.0)) {
        throw std::invalid_argument("delta must be in (0, 1)");
    }
    if (!(constants.c_tau > 0.0 && constants.c_cap > 0.0)) {
        throw std::invalid_argument("threshold and budget constants must be positive");
    }

    ContestableState state;
    state.params.n = data->n();
    state.params.max_contestations = K;
    state.params.delta = delta;
    state.params.constants = constants;

    const double nd = static_cast<double>(data->n());
    const double log_k_delta = std::log(static_cast<double>(K) / delta);
    const double log_inv_delta = std::log(1.0 / delta);
    state.params.tau = constants.c_tau * std::cbrt(log_k_delta) *
                       std::pow(log_inv_delta, 1.0 / 6.0) / std::cbrt(nd);
    if (!(state.params.tau < 1.0)) {
        throw std::invalid_argument(
            "derived threshold is " + std::to_string(state.params.tau) +
            "; the dataset is too small for K=" + std::to_string(K));
    }
    state.params.max_accepts = std::max<long>(
        1, static_cast<long>(std::ceil(constants.c_cap / (state.params.tau * state.params.tau))));
    state.params.privacy_epsilon = std::sqrt(
        log_k_delta * std::sqrt(static_cast<double>(state.params.max_accepts) * log_inv_delta) /
        nd);
    const double root512 = std::sqrt(512.0);
    state.params.epsilon1 = root512 / (root512 + 1.0) * state.params.privacy_epsilon;
    state.params.epsilon2 = 1.0 / (root512 + 1.0) * state.params.privacy_epsilon;

    state.data = std::move(data);
    state.base = f0;
    state.base_values.reserve(state.data->n());
    for (const auto& x : state.data->xs) {
        const double v = f0(x);
        if (v < 0.0 || v > 1.0) {
            throw std::invalid_argument("base model prediction outside [0,1] at '" + x.id + "'");
        }
        state.base_values.push_back(v);
    }
    state.current.values = state.base_values;
    state.rng.seed(seed);
    state.noisy_threshold =
        state.params.tau + laplace_sample(state.params.noise_scale(state.params.epsilon1),
                                          state.rng);
    return state;
}

ContestOutcome contest(ContestableState& state, const GroupMask& g) {
    if (state.exhausted()) {
        return ContestOutcome{Verdict::exhausted, 0.0, 0.0, 0.0};
    }
    if (g.size() != state.data->n()) {
        throw std::invalid_argument("group mask is misaligned with the contestation dataset");
    }
    const std::size_t n = state.data->n();
    const double nd = static_cast<double>(n);
    double residual_sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (g.member[i]) {
            residual_sum += static_cast<double>(state.data->ys[i]) - state.current.values[i];
            ++count;
        }
    }
    const double eta = residual_sum / nd;

    const double sigma1 = state.params.noise_scale(state.params.epsilon1);
    const double eta_hat = std::fabs(eta) + laplace_sample(2.0 * sigma1, state.rng);

    ContestOutcome outcome;
    if (eta_hat >= state.noisy_threshold) {
        const double sigma2 = state.params.noise_scale(state.params.epsilon2);
        double mu_tilde = static_cast<double>(count) / nd + laplace_sample(2.0 * sigma2, state.rng);
        const double eta_tilde = eta + laplace_sample(2.0 * sigma2, state.rng);
        // A noisy mass near zero makes the ratio blow up; the guarantees only
        // cover groups of mass on the order of tau anyway.
        mu_tilde = std::max(mu_tilde, state.params.tau / 2.0);
        double delta = eta_tilde / mu_tilde;
        delta = std::clamp(delta, -1.0, 1.0);

        PatchLogEntry entry;
        entry.delta = delta;
        entry.rows.reserve(count);
        for (std::size_t i = 0; i < n; ++i) {
            if (g.member[i]) {
                state.current.values[i] += delta;
                entry.rows.push_back(static_cast<std::uint32_t>(i));
            }
        }
        state.patch_log.push_back(std::move(entry));
        ++state.accepted;
        state.noisy_threshold = state.params.tau + laplace_sample(sigma1, state.rng);

        outcome.verdict = Verdict::accepted;
        outcome.delta = delta;
        outcome.mu_tilde = mu_tilde;
        outcome.eta_tilde = eta_tilde;
    } else {
        outcome.verdict = Verdict::rejected;
    }
    ++state.attempted;
    return outcome;
}

namespace {

void apply_delta(std::vector<double>& values, const GroupMask& mask, double delta) {
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask.member[i]) {
            values[i] += delta;
        }
    }
}

}  // namespace

ContestReconcileOutcome contestable_reconcile(ContestableState& m1, ContestableState& m2,
                                              const Dataset& eval_data, double alpha,
                                              double epsilon) {
    validate_dataset(eval_data);
    if (!(alpha > 0.0 && alpha < 1.0) || !(epsilon > 0.0 && epsilon <= 1.0)) {
        throw std::invalid_argument("alpha must be in (0,1) and epsilon in (0,1]");
    }
    if (m1.accepted != 0 || m2.accepted != 0) {
        throw std::invalid_argument(
            "contestable models must be unpatched at the start of a reconciliation");
    }

    // Working copies of each model on the other model's dataset and on the
    // evaluation dataset; the states own their values on their own datasets.
    PredictionVector m1_on_d2 = evaluate(m1.base, *m2.data);
    PredictionVector m2_on_d1 = evaluate(m2.base, *m1.data);
    PredictionVector m1_on_eval = evaluate(m1.base, eval_data);
    PredictionVector m2_on_eval = evaluate(m2.base, eval_data);

    ContestReconcileOutcome outcome;
    while (true) {
        DisagreementSplit eval_split =
            disagreement_split(m1_on_eval, m2_on_eval, epsilon, eval_data);
        const double mass = group_mass(eval_split.u_all, eval_data);
        if (mass < alpha) {
            outcome.status = SweepStatus::converged;
            outcome.final_mass = mass;
            return outcome;
        }
        // Groups are frozen at the top of the sweep: the same predicate
        // materialized on each dataset.
        DisagreementSplit d1_split =
            disagreement_split(m1.current, m2_on_d1, epsilon, *m1.data);
        DisagreementSplit d2_split =
            disagreement_split(m1_on_d2, m2.current, epsilon, *m2.data);

        SweepRecord record;
        record.mass_before = mass;
        bool any_accept = false;
        for (int call = 0; call < 4; ++call) {
            const bool on_m1 = call < 2;
            const Direction dir = (call % 2 == 0) ? Direction::gt : Direction::lt;
            ContestableState& target = on_m1 ? m1 : m2;
            const DisagreementSplit& own_split = on_m1 ? d1_split : d2_split;
            const ContestOutcome result = contest(target, own_split.mask(dir));
            record.verdicts.push_back(result.verdict);
            if (result.verdict == Verdict::exhausted) {
                outcome.records.push_back(record);
                outcome.status = SweepStatus::exhausted;
                DisagreementSplit now =
                    disagreement_split(m1_on_eval, m2_on_eval, epsilon, eval_data);
                outcome.final_mass = group_mass(now.u_all, eval_data);
                return outcome;
            }
            if (result.verdict == Verdict::accepted) {
                any_accept = true;
                const DisagreementSplit& other_split = on_m1 ? d2_split : d1_split;
                if (on_m1) {
                    apply_delta(m1_on_d2.values, other_split.mask(dir), result.delta);
                    apply_delta(m1_on_eval.values, eval_split.mask(dir), result.delta);
                } else {
                    apply_delta(m2_on_d1.values, other_split.mask(dir), result.delta);
                    apply_delta(m2_on_eval.values, eval_split.mask(dir), result.delta);
                }
            }
        }
        outcome.records.push_back(record);
        ++outcome.sweeps;
        if (!any_accept) {
            outcome.status = SweepStatus::stalled;
            DisagreementSplit now =
                disagreement_split(m1_on_eval, m2_on_eval, epsilon, eval_data);
            outcome.final_mass = group_mass(now.u_all, eval_data);
            return outcome;
        }
    }
}

std::string checkpoint_to_json(const ContestableState& state) {
    nlohmann::json j;
    j["params"] = {{"n", state.params.n},
                   {"K", state.params.max_contestations},
                   {"C", state.params.max_accepts},
                   {"delta", state.params.delta},
                   {"tau", state.params.tau},
                   {"privacy_epsilon", state.params.privacy_epsilon},
                   {"epsilon1", state.params.epsilon1},
                   {"epsilon2", state.params.epsilon2},
                   {"c_tau", state.params.constants.c_tau},
                   {"c_cap", state.params.constants.c_cap}};
    j["c"] = state.accepted;
    j["t"] = state.attempted;
    j["noisy_threshold"] = state.noisy_threshold;
    std::ostringstream rng_stream;
    rng_stream << state.rng;
    j["rng_state"] = rng_stream.str();

    nlohmann::json ids = nlohmann::json::array();
    nlohmann::json labels = nlohmann::json::array();
    for (std::size_t i = 0; i < state.data->n(); ++i) {
        ids.push_back(state.data->xs[i].id);
        labels.push_back(static_cast<int>(state.data->ys[i]));
    }
    j["dataset"] = {{"ids", std::move(ids)}, {"labels", std::move(labels)}};
    j["base_model"] = {{"predictions", state.base_values}};

    j["patch_log"] = nlohmann::json::array();
    for (const PatchLogEntry& entry : state.patch_log) {
        nlohmann::json group = nlohmann::json::array();
        for (auto row : entry.rows) {
            group.push_back(state.data->xs[row].id);
        }
        j["patch_log"].push_back({{"group", std::move(group)}, {"delta", entry.delta}});
    }
    return j.dump();
}

ContestableState checkpoint_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);

    auto data = std::make_shared<Dataset>();
    const auto& ids = j.at("dataset").at("ids");
    const auto& labels = j.at("dataset").at("labels");
    if (ids.size() != labels.size()) {
        throw std::invalid_argument("checkpoint dataset ids and labels differ in length");
    }
    data->xs.reserve(ids.size());
    data->ys.reserve(labels.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        data->xs.push_back(Example{ids[i].get<std::string>(), {}});
        const int y = labels[i].get<int>();
        if (y != 0 && y != 1) {
            throw std::invalid_argument("checkpoint label is not 0/1");
        }
        data->ys.push_back(static_cast<std::uint8_t>(y));
    }
    validate_dataset(*data);

    std::unordered_map<std::string, std::uint32_t> row_of;
    row_of.reserve(data->n());
    for (std::size_t i = 0; i < data->n(); ++i) {
        row_of[data->xs[i].id] = static_cast<std::uint32_t>(i);
    }

    ContestableState state;
    state.params.n = j.at("params").at("n").get<std::size_t>();
    state.params.max_contestations = j.at("params").at("K").get<long>();
    state.params.max_accepts = j.at("params").at("C").get<long>();
    state.params.delta = j.at("params").at("delta").get<double>();
    state.params.tau = j.at("params").at("tau").get<double>();
    state.params.privacy_epsilon = j.at("params").at("privacy_epsilon").get<double>();
    state.params.epsilon1 = j.at("params").at("epsilon1").get<double>();
    state.params.epsilon2 = j.at("params").at("epsilon2").get<double>();
    state.params.constants.c_tau = j.at("params").at("c_tau").get<double>();
    state.params.constants.c_cap = j.at("params").at("c_cap").get<double>();
    if (state.params.n != data->n()) {
        throw std::invalid_argument("checkpoint n does not match its dataset");
    }
    state.accepted = j.at("c").get<long>();
    state.attempted = j.at("t").get<long>();
    state.noisy_threshold = j.at("noisy_threshold").get<double>();

    state.base_values = j.at("base_model").at("predictions").get<std::vector<double>>();
    if (state.base_values.size() != data->n()) {
        throw std::invalid_argument("checkpoint base predictions are misaligned");
    }

    state.current.values = state.base_values;
    for (const auto& item : j.at("patch_log")) {
        PatchLogEntry entry;
        entry.delta = item.at("delta").get<double>();
        for (const auto& id : item.at("group")) {
            const auto it = row_of.find(id.get<std::string>());
            if (it == row_of.end()) {
                throw std::invalid_argument("checkpoint patch references unknown id '" +
                                            id.get<std::string>() + "'");
            }
            entry.rows.push_back(it->second);
        }
        for (auto row : entry.rows) {
            state.current.values[row] += entry.delta;
        }
        state.patch_log.push_back(std::move(entry));
    }

    std::istringstream rng_stream(j.at("rng_state").get<std::string>());
    rng_stream >> state.rng;
    if (!rng_stream) {
        throw std::invalid_argument("checkpoint rng state is corrupt");
    }

    state.data = data;
    // Checkpointed models answer by table; points outside the dataset are
    // not part of the session contract.
    auto values = std::make_shared<std::unordered_map<std::string, double>>();
    for (std::size_t i = 0; i < data->n(); ++i) {
        (*values)[data->xs[i].id] = state.base_values[i];
    }
    state.base = [values](const Example& x) {
        const auto it = values->find(x.id);
        if (it == values->end()) {
            throw std::invalid_argument("unknown example id '" + x.id + "'");
        }
        return it->second;
    };
    return state;
}

}  // namespace concord
