#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>

#include "concord/contest.hpp"
#include "concord/io.hpp"
#include "concord/reconcile.hpp"
#include "concord/synth.hpp"

namespace {

namespace fs = std::filesystem;
using namespace concord;

// Exit contract: 0 clean, 1 statistical bound violated, 2 usage or data error.
constexpr int kExitPass = 0;
constexpr int kExitBoundViolation = 1;
constexpr int kExitUsage = 2;

std::string default_out_dir() {
    if (const char* env = std::getenv("CONCORD_OUT_DIR")) {
        return env;
    }
    return ".";
}

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

struct ReconcileArgs {
    double alpha = 0.0;
    double epsilon = 0.0;
    std::string data_path, f1_path, f2_path;
    std::string out_dir = default_out_dir();
};

int run_reconcile(const ReconcileArgs& args) {
    const Dataset data = load_dataset_csv(args.data_path);
    const std::vector<double> v1 = load_predictions_csv(args.f1_path, data);
    const std::vector<double> v2 = load_predictions_csv(args.f2_path, data);
    const ReconcileConfig cfg = ReconcileConfig::make(args.alpha, args.epsilon);
    const ReconcileRun run = reconcile(table_model(data, v1), table_model(data, v2), data, cfg);

    fs::create_directories(args.out_dir);
    atomic_write_file(join(args.out_dir, "transcript.json"), transcript_to_json(run.transcript));
    write_rounds_csv(join(args.out_dir, "rounds.csv"), run.transcript);
    std::vector<double> out1(data.n()), out2(data.n());
    for (std::size_t i = 0; i < data.n(); ++i) {
        out1[i] = clamp01(run.f1_final.values[i]);
        out2[i] = clamp01(run.f2_final.values[i]);
    }
    write_predictions_csv(join(args.out_dir, "f1_final.csv"), data, out1);
    write_predictions_csv(join(args.out_dir, "f2_final.csv"), data, out2);

    std::printf("rounds=%zu t1=%ld t2=%ld final_disagreement_mass=%s\n",
                run.transcript.records.size(), run.transcript.t1, run.transcript.t2,
                format_double(run.final_disagreement_mass).c_str());
    return kExitPass;
}

struct SimulateArgs {
    std::string dist_kind = "random_bernoulli";
    std::size_t dist_size = 10000;
    std::size_t n = 0;
    int trials = 0;
    double delta = 0.0;
    double alpha = 0.1;
    double epsilon = 0.2;
    std::string pair = "opposed_bias";
    std::uint64_t seed = 0;
    std::string out_dir = default_out_dir();
};

int run_simulate(const SimulateArgs& args) {
    if (args.trials < 1) {
        throw std::invalid_argument("at least one trial is required");
    }
    const SyntheticDistribution dist =
        make_distribution(dist_kind_from_string(args.dist_kind), args.dist_size, args.seed);
    ModelPairMaker maker;
    if (args.pair == "opposed_bias") {
        maker = opposed_bias_pair(0.3, 8);
    } else if (args.pair == "versus_half") {
        maker = versus_half_pair();
    } else if (args.pair == "corrupted_copies") {
        maker = corrupted_copies_pair(0.4, args.seed + 1);
    } else {
        throw std::invalid_argument("unknown pair fixture '" + args.pair + "'");
    }
    ExperimentConfig config;
    config.alpha = args.alpha;
    config.epsilon = args.epsilon;
    config.delta = args.delta;
    config.n = args.n;
    config.trials = args.trials;
    config.seed = args.seed;
    const ExperimentReport report = generalization_experiment(dist, maker, config);

    fs::create_directories(args.out_dir);
    atomic_write_file(join(args.out_dir, "report.json"), report_to_json(report));
    std::printf("trials=%d pass=%d strict_pass=%d required=%d -> %s\n", args.trials,
                report.pass_count, report.strict_pass_count, report.required_passes,
                report.aggregate_pass ? "pass" : "bound violated");
    return report.aggregate_pass ? kExitPass : kExitBoundViolation;
}

struct ContestSessionArgs {
    std::string checkpoint_path;
    std::string masks_path;
    std::string init_data_path;
    std::string init_preds_path;
    long K = 0;
    double delta = 0.0;
    std::uint64_t seed = 0;
    double c_tau = 1.0;
    double c_cap = 1.0;
};

int run_contest_session(const ContestSessionArgs& args) {
    ContestableState state;
    if (fs::exists(args.checkpoint_path)) {
        state = checkpoint_from_json(read_file(args.checkpoint_path));
    } else {
        if (args.init_data_path.empty() || args.init_preds_path.empty() || args.K < 1) {
            throw std::invalid_argument(
                "checkpoint not found; initializing needs --init-data, --init-preds, --K, "
                "--delta and --seed");
        }
        auto data = std::make_shared<Dataset>(load_dataset_csv(args.init_data_path));
        const std::vector<double> preds = load_predictions_csv(args.init_preds_path, *data);
        state = new_contestable(table_model(*data, preds), data, args.K, args.delta, args.seed,
                                ContestConstants{args.c_tau, args.c_cap});
    }

    const std::vector<GroupMask> masks = load_masks(args.masks_path, *state.data);
    for (const GroupMask& mask : masks) {
        const ContestOutcome outcome = contest(state, mask);
        if (outcome.verdict == Verdict::accepted) {
            std::printf("t=%ld verdict=accepted delta=%s\n", state.attempted,
                        format_double(outcome.delta).c_str());
        } else {
            std::printf("t=%ld verdict=%s\n", state.attempted, to_string(outcome.verdict));
        }
    }
    atomic_write_file(args.checkpoint_path, checkpoint_to_json(state));
    return kExitPass;
}

struct AuditArgs {
    std::string data_path, f1_path, f2_path, transcript_path, groups_path;
    std::string out_dir = default_out_dir();
};

int run_audit(const AuditArgs& args) {
    const Dataset data = load_dataset_csv(args.data_path);
    const std::vector<double> v1 = load_predictions_csv(args.f1_path, data);
    const std::vector<double> v2 = load_predictions_csv(args.f2_path, data);
    const Transcript transcript = transcript_from_json(read_file(args.transcript_path));
    const PatchedModelPair pair{table_model(data, v1), table_model(data, v2), transcript};

    PredictionVector f1_final, f2_final;
    f1_final.values.reserve(data.n());
    f2_final.values.reserve(data.n());
    for (const auto& x : data.xs) {
        const auto [p1, p2] = replay_predict(pair, x);
        f1_final.values.push_back(p1);
        f2_final.values.push_back(p2);
    }

    const std::vector<GroupMask> groups = load_masks(args.groups_path, data);
    std::string out = "group,p1,p2,gap,bound,within\n";
    bool all_within = true;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const ReferenceClassGap gap =
            reference_class_gap(f1_final, f2_final, transcript.config, groups[i], data);
        all_within = all_within && gap.within;
        out += std::to_string(i) + "," + format_double(gap.p1) + "," + format_double(gap.p2) +
               "," + format_double(std::fabs(gap.p1 - gap.p2)) + "," +
               format_double(gap.bound) + "," + (gap.within ? "1" : "0") + "\n";
    }
    fs::create_directories(args.out_dir);
    atomic_write_file(join(args.out_dir, "audit.csv"), out);
    std::printf("groups=%zu %s\n", groups.size(), all_within ? "all within bound" : "violations found");
    return all_within ? kExitPass : kExitBoundViolation;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"reconciliation and contestation of probability forecast models"};
    app.require_subcommand(1);

    ReconcileArgs rc;
    CLI::App* cmd_rc = app.add_subcommand("reconcile",
                                          "patch two models until they agree almost everywhere");
    cmd_rc->add_option("--alpha", rc.alpha, "target disagreement mass")->required();
    cmd_rc->add_option("--epsilon", rc.epsilon, "prediction gap counted as disagreement")
        ->required();
    cmd_rc->add_option("--data", rc.data_path, "dataset CSV (example_id,label[,features...])")
        ->required();
    cmd_rc->add_option("--f1", rc.f1_path, "first model CSV (example_id,prediction)")->required();
    cmd_rc->add_option("--f2", rc.f2_path, "second model CSV")->required();
    cmd_rc->add_option("--out", rc.out_dir, "output directory");

    SimulateArgs sim;
    CLI::App* cmd_sim =
        app.add_subcommand("simulate", "Monte Carlo check of the out-of-sample guarantees");
    cmd_sim->add_option("--dist", sim.dist_kind,
                        "constant_half|random_bernoulli|deterministic_coin|piecewise_groups");
    cmd_sim->add_option("--dist-size", sim.dist_size, "support size");
    cmd_sim->add_option("--n", sim.n, "sample size per trial")->required();
    cmd_sim->add_option("--trials", sim.trials, "number of trials")->required();
    cmd_sim->add_option("--delta", sim.delta, "failure probability")->required();
    cmd_sim->add_option("--alpha", sim.alpha, "target disagreement mass");
    cmd_sim->add_option("--epsilon", sim.epsilon, "disagreement gap");
    cmd_sim->add_option("--pair", sim.pair, "opposed_bias|versus_half|corrupted_copies");
    cmd_sim->add_option("--seed", sim.seed, "master seed")->required();
    cmd_sim->add_option("--out", sim.out_dir, "output directory");

    ContestSessionArgs cs;
    CLI::App* cmd_cs =
        app.add_subcommand("contest-session", "run contestations against a checkpointed model");
    cmd_cs->add_option("--checkpoint", cs.checkpoint_path, "checkpoint JSON (created if absent)")
        ->required();
    cmd_cs->add_option("--masks", cs.masks_path, "one group per line: ids, `all`, or `none`")
        ->required();
    cmd_cs->add_option("--init-data", cs.init_data_path, "dataset CSV for a fresh model");
    cmd_cs->add_option("--init-preds", cs.init_preds_path, "base predictions CSV");
    cmd_cs->add_option("--K", cs.K, "total contestation budget");
    cmd_cs->add_option("--delta", cs.delta, "failure probability");
    cmd_cs->add_option("--seed", cs.seed, "noise seed");
    cmd_cs->add_option("--c-tau", cs.c_tau, "threshold multiplier");
    cmd_cs->add_option("--c-cap", cs.c_cap, "accept budget multiplier");

    AuditArgs au;
    CLI::App* cmd_au =
        app.add_subcommand("audit", "reference-class agreement audit of a reconciled pair");
    cmd_au->add_option("--data", au.data_path, "dataset CSV")->required();
    cmd_au->add_option("--f1", au.f1_path, "first base model CSV")->required();
    cmd_au->add_option("--f2", au.f2_path, "second base model CSV")->required();
    cmd_au->add_option("--transcript", au.transcript_path, "transcript JSON")->required();
    cmd_au->add_option("--groups", au.groups_path, "mask file of reference classes")->required();
    cmd_au->add_option("--out", au.out_dir, "output directory");

    try {
        app.parse(argc, argv);
        if (cmd_rc->parsed()) return run_reconcile(rc);
        if (cmd_sim->parsed()) return run_simulate(sim);
        if (cmd_cs->parsed()) return run_contest_session(cs);
        if (cmd_au->parsed()) return run_audit(au);
        return kExitUsage;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
}
