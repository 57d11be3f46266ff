#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <memory>
#include <random>

#include "concord/contest.hpp"
#include "concord/rng.hpp"
#include "helpers.hpp"

using namespace concord;
using namespace testutil;

namespace {

BaseModel constant_model(double v) {
    return [v](const Example&) { return v; };
}

// All labels 1; the constant-zero model leaves a residual of 1 everywhere.
std::shared_ptr<const Dataset> ones_dataset(std::size_t n) {
    static std::map<std::size_t, std::shared_ptr<const Dataset>> cache;
    auto& slot = cache[n];
    if (!slot) {
        auto data = std::make_shared<Dataset>();
        data->xs.reserve(n);
        data->ys.assign(n, 1);
        for (std::size_t i = 0; i < n; ++i) {
            data->xs.push_back(Example{"p" + std::to_string(i), {}});
        }
        slot = data;
    }
    return slot;
}

double true_eta(const ContestableState& state, const GroupMask& g) {
    double sum = 0.0;
    for (std::size_t i = 0; i < state.data->n(); ++i) {
        if (g.member[i]) {
            sum += static_cast<double>(state.data->ys[i]) - state.current.values[i];
        }
    }
    return sum / static_cast<double>(state.data->n());
}

double raw_brier(const ContestableState& state) {
    double sum = 0.0;
    for (std::size_t i = 0; i < state.data->n(); ++i) {
        const double d = state.current.values[i] - static_cast<double>(state.data->ys[i]);
        sum += d * d;
    }
    return sum / static_cast<double>(state.data->n());
}

}  // namespace

TEST_CASE("laplace transform at fixed quantiles") {
    CHECK(laplace_from_uniform(0.0, 1.0) == 0.0);
    CHECK(laplace_from_uniform(0.25, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(laplace_from_uniform(-0.25, 1.0) == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
    CHECK(laplace_from_uniform(0.25, 3.0) == doctest::Approx(3.0 * std::log(2.0)));
    CHECK_THROWS_AS(laplace_from_uniform(0.2, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(laplace_from_uniform(0.2, -1.0), std::invalid_argument);
}

TEST_CASE("laplace sample moments at scale 2") {
    std::mt19937_64 rng(42);
    const std::size_t n = 1000000;
    double sum = 0.0;
    double sum_abs = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = laplace_sample(2.0, rng);
        sum += x;
        sum_abs += std::fabs(x);
    }
    CHECK(std::fabs(sum / static_cast<double>(n)) < 0.01);
    CHECK(std::fabs(sum_abs / static_cast<double>(n) - 2.0) < 0.02);
}

TEST_CASE("derived parameters match an independent computation") {
    const long K = 100;
    const double delta = 0.01;
    const auto data = ones_dataset(10000);
    const ContestableState state = new_contestable(constant_model(0.5), data, K, delta, 3);

    const double nd = 10000.0;
    const double lkd = std::log(static_cast<double>(K) / delta);
    const double lid = std::log(1.0 / delta);
    const double tau = std::pow(lkd, 1.0 / 3.0) * std::pow(lid, 1.0 / 6.0) / std::pow(nd, 1.0 / 3.0);
    CHECK(state.params.tau == doctest::Approx(tau).epsilon(1e-12));
    const double cap = std::ceil(1.0 / (tau * tau));
    CHECK(static_cast<double>(state.params.max_accepts) == cap);
    const double eps = std::sqrt(lkd * std::sqrt(cap * lid) / nd);
    CHECK(state.params.privacy_epsilon == doctest::Approx(eps).epsilon(1e-12));
    const double r = std::sqrt(512.0);
    CHECK(state.params.epsilon1 == doctest::Approx(eps * r / (r + 1.0)).epsilon(1e-12));
    CHECK(state.params.epsilon2 == doctest::Approx(eps / (r + 1.0)).epsilon(1e-12));
    CHECK(state.params.epsilon1 + state.params.epsilon2 ==
          doctest::Approx(state.params.privacy_epsilon).epsilon(1e-12));
    CHECK(state.params.noise_scale(state.params.epsilon1) ==
          doctest::Approx(std::sqrt(32.0 * cap * lid) / (state.params.epsilon1 * nd))
              .epsilon(1e-12));
}

TEST_CASE("minimal budget still yields a usable threshold") {
    const auto data = ones_dataset(10000);
    const ContestableState state = new_contestable(constant_model(0.5), data, 1, 0.9, 3);
    const double tau = state.params.tau;
    CHECK(tau > 0.0);
    CHECK(state.params.max_accepts ==
          static_cast<long>(std::ceil(1.0 / (tau * tau))));
}

TEST_CASE("a dataset too small for the budget is refused") {
    const auto data = ones_dataset(8);
    CHECK_THROWS_AS(new_contestable(constant_model(0.5), data, 1000000, 0.01, 3),
                    std::invalid_argument);
    CHECK_THROWS_AS(new_contestable(constant_model(0.5), ones_dataset(100), 0, 0.05, 3),
                    std::invalid_argument);
    CHECK_THROWS_AS(new_contestable(constant_model(0.5), ones_dataset(100), 10, 1.5, 3),
                    std::invalid_argument);
    CHECK_THROWS_AS(new_contestable(constant_model(1.5), ones_dataset(100), 10, 0.05, 3),
                    std::invalid_argument);
}

TEST_CASE("a model that matches every label rejects whatever is contested") {
    std::mt19937_64 rng(7);
    auto data = std::make_shared<Dataset>(random_dataset(10000, rng));
    BaseModel perfect = [data](const Example& x) {
        const std::size_t i = std::stoul(x.id.substr(1));
        return static_cast<double>(data->ys[i]);
    };
    // Wide threshold margin: tau scales by 8 while the noise stays put.
    ContestableState state =
        new_contestable(perfect, data, 20, 0.05, 11, ContestConstants{8.0, 1.0});
    for (int i = 0; i < 10; ++i) {
        const GroupMask g = random_mask(data->n(), rng, 0.3 + 0.4 * uniform01(rng));
        const ContestOutcome outcome = contest(state, g);
        CHECK(outcome.verdict == Verdict::rejected);
    }
    CHECK(state.attempted == 10);
    CHECK(state.accepted == 0);
}

TEST_CASE("a gross miscalibration on the whole dataset is accepted and fixed") {
    const std::size_t n = 1000000;
    const auto data = ones_dataset(n);
    // Small accept budget keeps the answer noise scale low.
    ContestableState state =
        new_contestable(constant_model(0.0), data, 10, 0.05, 5, ContestConstants{1.0, 0.001});
    REQUIRE(state.params.max_accepts == 3);

    const double before = raw_brier(state);
    CHECK(before == doctest::Approx(1.0));
    const ContestOutcome outcome = contest(state, GroupMask::all(n));
    REQUIRE(outcome.verdict == Verdict::accepted);
    CHECK(outcome.delta == doctest::Approx(1.0).epsilon(0.35));
    const double after = raw_brier(state);
    CHECK(before - after >= 0.9);
    CHECK(state.accepted == 1);
    CHECK(state.patch_log.size() == 1);
    CHECK(state.patch_log[0].rows.size() == n);
}

TEST_CASE("budget exhaustion freezes the state") {
    const auto data = ones_dataset(2000);
    ContestableState state =
        new_contestable(constant_model(0.5), data, 2, 0.05, 13, ContestConstants{4.0, 1.0});

    SUBCASE("attempt budget") {
        contest(state, GroupMask::all(2000));
        contest(state, GroupMask::none(2000));
        CHECK(state.attempted == 2);
        const auto before_values = state.current.values;
        const ContestOutcome out = contest(state, GroupMask::all(2000));
        CHECK(out.verdict == Verdict::exhausted);
        CHECK(state.attempted == 2);
        CHECK(state.current.values == before_values);
    }

    SUBCASE("accept budget") {
        state.accepted = state.params.max_accepts;
        const ContestOutcome out = contest(state, GroupMask::all(2000));
        CHECK(out.verdict == Verdict::exhausted);
        CHECK(state.attempted == 0);
        CHECK(state.predict_row(0) == 0.5);   // still answers predictions
    }
}

TEST_CASE("a stream of vacuous contestations burns attempts, not accepts") {
    std::mt19937_64 rng(17);
    const auto data = ones_dataset(10000);
    const long K = 20;
    ContestableState state =
        new_contestable(constant_model(0.5), data, K, 0.05, 19, ContestConstants{8.0, 1.0});
    for (long i = 0; i < K; ++i) {
        // Tiny groups: the residual sum stays far below the threshold.
        GroupMask g = GroupMask::none(data->n());
        g.member[uniform_index(data->n(), rng)] = 1;
        const ContestOutcome out = contest(state, g);
        CHECK(out.verdict == Verdict::rejected);
    }
    CHECK(state.attempted == K);
    CHECK(state.accepted == 0);
    CHECK(contest(state, GroupMask::all(data->n())).verdict == Verdict::exhausted);
    CHECK(state.predict_row(3) == 0.5);
}

TEST_CASE("identical seeds replay identical sessions") {
    std::mt19937_64 mask_rng(23);
    const auto data = ones_dataset(5000);
    std::vector<GroupMask> masks;
    for (int i = 0; i < 8; ++i) {
        masks.push_back(random_mask(data->n(), mask_rng, uniform01(mask_rng)));
    }
    auto run = [&](std::uint64_t seed) {
        ContestableState state = new_contestable(constant_model(0.2), data, 50, 0.05, seed,
                                                 ContestConstants{2.0, 1.0});
        std::vector<std::pair<Verdict, double>> log;
        for (const auto& g : masks) {
            const ContestOutcome out = contest(state, g);
            log.emplace_back(out.verdict, out.delta);
        }
        log.emplace_back(Verdict::rejected, state.current.values[0]);
        return log;
    };
    CHECK(run(99) == run(99));
}

TEST_CASE("accepted updates help, rejected groups are weak") {
    const std::size_t n = 1000000;
    const auto data = ones_dataset(n);
    std::mt19937_64 mask_rng(29);

    int accepted_total = 0;
    int accepted_improving = 0;
    double drop_sum = 0.0;
    double tau = 0.0;
    double reject_band = 0.0;
    bool rejected_all_weak = true;

    const int sessions = 100;
    for (int s = 0; s < sessions; ++s) {
        // The threshold multiplier keeps tau above the answer-noise scale, the
        // regime in which accepted updates carry their improvement guarantee.
        ContestableState state = new_contestable(constant_model(0.0), data, 10, 0.05,
                                                 1000 + static_cast<std::uint64_t>(s),
                                                 ContestConstants{14.0, 0.0005});
        tau = state.params.tau;
        reject_band = tau + 4.0 * state.params.noise_scale(state.params.epsilon1) *
                                std::log(10.0 / 0.05);
        while (!state.exhausted()) {
            GroupMask g = GroupMask::none(n);
            const bool strong = uniform01(mask_rng) < 0.5;
            if (strong) {
                g = GroupMask::all(n);
            } else {
                for (std::size_t i = 0; i < n; ++i) {
                    g.member[i] = bernoulli(0.002, mask_rng) ? 1 : 0;
                }
            }
            const double eta = true_eta(state, g);
            const double before = raw_brier(state);
            const ContestOutcome out = contest(state, g);
            if (out.verdict == Verdict::accepted) {
                ++accepted_total;
                const double drop = before - raw_brier(state);
                drop_sum += drop;
                if (drop > 0.0) {
                    ++accepted_improving;
                }
            } else if (out.verdict == Verdict::rejected) {
                rejected_all_weak = rejected_all_weak && std::fabs(eta) <= reject_band;
            }
        }
        CHECK(state.accepted <= state.params.max_accepts);
    }
    REQUIRE(accepted_total >= 100);
    CHECK(static_cast<double>(accepted_improving) >=
          0.99 * static_cast<double>(accepted_total));
    CHECK(drop_sum / static_cast<double>(accepted_total) >= tau * tau / 4.0);
    CHECK(rejected_all_weak);
}

TEST_CASE("checkpoint round trip resumes mid-session") {
    std::mt19937_64 mask_rng(31);
    const auto data = ones_dataset(2000);
    std::vector<GroupMask> masks;
    for (int i = 0; i < 6; ++i) {
        masks.push_back(random_mask(data->n(), mask_rng, 0.8));
    }

    ContestableState straight = new_contestable(constant_model(0.1), data, 50, 0.05, 77,
                                                ContestConstants{1.0, 0.01});
    std::vector<Verdict> straight_verdicts;
    for (const auto& g : masks) {
        straight_verdicts.push_back(contest(straight, g).verdict);
    }

    ContestableState first = new_contestable(constant_model(0.1), data, 50, 0.05, 77,
                                             ContestConstants{1.0, 0.01});
    std::vector<Verdict> resumed_verdicts;
    for (int i = 0; i < 3; ++i) {
        resumed_verdicts.push_back(contest(first, masks[i]).verdict);
    }
    const std::string saved = checkpoint_to_json(first);
    ContestableState second = checkpoint_from_json(saved);
    for (int i = 3; i < 6; ++i) {
        resumed_verdicts.push_back(contest(second, masks[i]).verdict);
    }

    CHECK(resumed_verdicts == straight_verdicts);
    CHECK(second.current.values == straight.current.values);
    CHECK(second.attempted == straight.attempted);
    CHECK(second.accepted == straight.accepted);
    CHECK(checkpoint_to_json(second) == checkpoint_to_json(straight));
}

TEST_CASE("corrupt checkpoints are refused") {
    CHECK_THROWS(checkpoint_from_json("{"));
    CHECK_THROWS(checkpoint_from_json("{}"));
    const auto data = ones_dataset(50);
    ContestableState state = new_contestable(constant_model(0.1), data, 5, 0.05, 1,
                                             ContestConstants{1.0, 0.01});
    std::string text = checkpoint_to_json(state);
    const auto pos = text.find("\"rng_state\":\"");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 13, "\"rng_state\":\"x");
    CHECK_THROWS(checkpoint_from_json(text));
}

TEST_CASE("contestable reconciliation of an agreeing pair does nothing") {
    const auto data = ones_dataset(500);
    ContestableState m1 = new_contestable(constant_model(0.55), data, 20, 0.05, 1);
    ContestableState m2 = new_contestable(constant_model(0.45), data, 20, 0.05, 2);
    const Dataset eval = *ones_dataset(300);
    const ContestReconcileOutcome out = contestable_reconcile(m1, m2, eval, 0.1, 0.5);
    CHECK(out.status == SweepStatus::converged);
    CHECK(out.sweeps == 0);
    CHECK(out.final_mass == 0.0);
    CHECK(m1.attempted == 0);
}

TEST_CASE("contestable reconciliation drives a gross disagreement together") {
    const std::size_t n = 100000;
    const auto d1 = ones_dataset(n);
    auto d2 = std::make_shared<Dataset>(*d1);
    for (auto& x : d2->xs) {
        x.id += "b";
    }
    const Dataset eval = *ones_dataset(10000);

    int converged = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        ContestableState m1 = new_contestable(constant_model(0.9), d1, 2560, 0.05, 2 * seed);
        ContestableState m2 = new_contestable(constant_model(0.1), d2, 2560, 0.05, 2 * seed + 1);
        const ContestReconcileOutcome out = contestable_reconcile(m1, m2, eval, 0.1, 0.5);
        if (out.status == SweepStatus::converged) {
            ++converged;
            CHECK(out.final_mass < 0.1);
        }
    }
    CHECK(converged >= 8);
}

TEST_CASE("patched models cannot enter a reconciliation") {
    const auto data = ones_dataset(1000000);
    ContestableState m1 = new_contestable(constant_model(0.0), data, 10, 0.05, 5,
                                          ContestConstants{1.0, 0.001});
    REQUIRE(contest(m1, GroupMask::all(data->n())).verdict == Verdict::accepted);
    ContestableState m2 = new_contestable(constant_model(0.5), data, 10, 0.05, 6);
    const Dataset eval = *ones_dataset(100);
    CHECK_THROWS_AS(contestable_reconcile(m1, m2, eval, 0.1, 0.5), std::invalid_argument);
}
