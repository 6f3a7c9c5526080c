// chillerlab CLI: simulate the plant, train critics, run paired experiments,
// score model unit tests, clean logs, and explain single control decisions.
//
// Exit codes: 0 success, 1 usage error, 2 runtime error, 3 acceptance
// threshold failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "chillerlab/critic.hpp"
#include "chillerlab/dataset.hpp"
#include "chillerlab/harness.hpp"
#include "chillerlab/plant_sim.hpp"
#include "chillerlab/policy.hpp"
#include "chillerlab/soo_baseline.hpp"
#include "chillerlab/trajectory.hpp"

namespace cl = chillerlab;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw cl::IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct ConfigBundle {
    cl::FacilityConfig cfg;
    cl::SimParams sim;
    cl::SooRules soo;
    cl::AbParams ab;
    std::vector<cl::FeatureMask> masks;
};

ConfigBundle load_bundle(const std::string& path) {
    ConfigBundle b;
    const std::string text = slurp(path);
    b.cfg = cl::parse_config(text);
    b.sim = cl::load_sim_params(text);
    b.soo = cl::load_soo_rules(text);
    b.ab = cl::load_ab_params(text);
    b.masks = cl::load_masks(text, b.cfg);
    return b;
}

int cmd_simulate(const std::string& config_path, int days, std::uint64_t seed, const std::string& out_path,
                 const std::string& controller, const std::string& model_path) {
    ConfigBundle b = load_bundle(config_path);
    cl::PlantSim sim(b.cfg, b.sim, seed);
    cl::FaultInjector injector(b.cfg, b.sim.faults);
    cl::Trajectory traj;
    cl::PlantState state = sim.initial_state(0);
    cl::ActionVector prev = cl::soo_policy(b.soo, b.cfg, state);

    std::optional<cl::EnsembleModel> model;
    cl::ChillerHeuristicState heur;
    cl::Rng rng(seed ^ 0x73696d756c617465ULL);
    if (controller == "ai") {
        if (model_path.empty()) throw std::runtime_error("--controller ai requires --model");
        model = cl::EnsembleModel::load(model_path);
    }

    const int steps = days * cl::kStepsPerDay;
    for (int i = 0; i < steps; ++i) {
        const cl::PlantState observed = injector.observe(state);
        cl::ActionVector action;
        cl::ControllerId id = cl::ControllerId::Soo;
        if (model) {
            cl::ActResult ar = cl::act(observed, prev, *model, b.cfg, b.ab.policy, b.ab.heuristic, heur,
                                       sim.layout(), rng);
            if (ar.action) {
                action = *ar.action;
                id = cl::ControllerId::Ai;
            } else {
                action = cl::soo_policy(b.soo, b.cfg, observed);
            }
        } else {
            action = cl::soo_policy(b.soo, b.cfg, observed);
        }
        auto sr = sim.step(state, action);
        cl::TrajectoryRow row;
        row.state = observed;
        row.action = action;
        row.reward_kwh = sr.reward_kwh;
        row.controller = id;
        traj.rows.push_back(std::move(row));
        state = std::move(sr.next);
        prev = action;
    }
    cl::write_trajectory_csv(out_path, b.cfg, traj);
    std::printf("wrote %zu rows to %s\n", traj.rows.size(), out_path.c_str());
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path, const std::string& out_path,
              int epochs, int ensemble, std::uint64_t seed, bool include_soo) {
    ConfigBundle b = load_bundle(config_path);
    cl::Trajectory raw = cl::read_trajectory_csv(data_path, b.cfg);
    auto [cleaned, report] = cl::clean(raw, b.cfg);
    std::string warning;
    cl::Trajectory filtered = cl::filter_ai_only(cleaned, !include_soo, &warning);
    if (!warning.empty()) std::fprintf(stderr, "warning: %s\n", warning.c_str());
    if (filtered.rows.empty()) {
        std::fprintf(stderr, "error: no training rows after filtering\n");
        return 2;
    }
    const auto examples = cl::build_targets(filtered, b.cfg);
    cl::CriticHParams hp = b.ab.training.critic;
    if (epochs > 0) hp.epochs = epochs;
    if (ensemble > 0) hp.ensemble_size = ensemble;
    hp.weight_seed = seed;
    cl::EnsembleModel model = cl::train(examples, b.masks, hp, b.cfg);
    model.save(out_path);
    std::printf("trained %d members on %zu examples; final losses:", hp.ensemble_size, examples.size());
    for (double l : model.final_member_losses()) std::printf(" %.4g", l);
    std::printf("\nsaved %s\n", out_path.c_str());
    return 0;
}

int cmd_ab_test(const std::string& config_path, std::uint64_t seed, int days, const std::string& out_dir,
                double min_savings_pct) {
    ConfigBundle b = load_bundle(config_path);
    cl::AbParams params = b.ab;
    params.seed = seed;
    if (days > 0) params.schedule.days = days;
    params.masks = b.masks;

    cl::AbResult res = cl::run_ab(b.cfg, b.sim, b.soo, params);
    const cl::SavingsReport savings = cl::bucketed_savings(res.log, cl::BucketSpec::defaults(), b.cfg);
    const auto constraints = cl::constraint_report(res.log, b.cfg);

    std::printf("overall savings: %.2f%% (over %.0f comparable hours, %zu buckets)\n",
                100.0 * savings.overall_savings, savings.total_hours, savings.buckets.size());
    std::printf("kick-outs: %d, retrains: %d\n", res.kick_outs, res.retrains);
    std::printf("constraint satisfaction (AI vs SOO):\n");
    for (const auto& cs : constraints)
        std::printf("  %-16s AI %.4f (%lld rows)   SOO %.4f (%lld rows)\n", cs.id.c_str(), cs.rate_ai(),
                    static_cast<long long>(cs.n_ai), cs.rate_soo(), static_cast<long long>(cs.n_soo));

    if (!out_dir.empty()) {
        cl::write_trajectory_csv(out_dir + "/experiment_log.csv", b.cfg, res.log);
        std::ofstream bucket_out(out_dir + "/buckets.csv");
        cl::write_bucket_csv(bucket_out, savings);
        std::ofstream dec_out(out_dir + "/decisions.csv");
        cl::write_decisions_csv(dec_out, b.cfg, res.decisions);
        std::printf("wrote experiment_log.csv, buckets.csv, decisions.csv to %s\n", out_dir.c_str());
    }

    if (min_savings_pct > -1e8 && 100.0 * savings.overall_savings < min_savings_pct) {
        std::fprintf(stderr, "savings %.2f%% below threshold %.2f%%\n", 100.0 * savings.overall_savings,
                     min_savings_pct);
        return 3;
    }
    return 0;
}

int cmd_unit_test(const std::string& config_path, const std::string& model_path, const std::string& tests_path,
                  double max_metric) {
    ConfigBundle b = load_bundle(config_path);
    cl::EnsembleModel model = cl::EnsembleModel::load(model_path);
    const auto tests = cl::load_unit_tests_file(tests_path, b.cfg);
    const auto results = cl::run_unit_tests(model, tests, b.cfg);
    for (const auto& r : results) {
        std::printf("%-40s err=%.4f  pred:", r.relationship.c_str(), r.normalized_error);
        for (double d : r.predicted_deltas) std::printf(" %+.4g", d);
        std::printf("  expected:");
        for (double d : r.expected_deltas) std::printf(" %+.4g", d);
        std::printf("\n");
    }
    const double metric = cl::aggregated_metric(results);
    std::printf("aggregated metric: %.6f\n", metric);
    if (max_metric > 0 && metric > max_metric) {
        std::fprintf(stderr, "aggregated metric %.4f above threshold %.4f\n", metric, max_metric);
        return 3;
    }
    return 0;
}

int cmd_clean_data(const std::string& config_path, const std::string& in_path, const std::string& out_path,
                   const std::string& report_path, int lookback) {
    ConfigBundle b = load_bundle(config_path);
    cl::Trajectory raw = cl::read_trajectory_csv(in_path, b.cfg);
    cl::CleaningParams params;
    if (lookback >= 0) params.lookback_steps = lookback;
    auto [cleaned, report] = cl::clean(raw, b.cfg, params);
    cl::write_trajectory_csv(out_path, b.cfg, cleaned);
    const std::string text = report.to_text();
    if (!report_path.empty()) {
        std::ofstream out(report_path);
        out << text;
    }
    std::fputs(text.c_str(), stdout);
    std::printf("wrote %zu cleaned rows to %s\n", cleaned.rows.size(), out_path.c_str());
    return 0;
}

int cmd_explain(const std::string& config_path, const std::string& model_path, const std::string& data_path,
                std::int64_t t, std::uint64_t seed, const std::string& out_path) {
    ConfigBundle b = load_bundle(config_path);
    cl::EnsembleModel model = cl::EnsembleModel::load(model_path);
    cl::Trajectory traj = cl::read_trajectory_csv(data_path, b.cfg);

    std::size_t idx = traj.rows.size();
    for (std::size_t i = 0; i < traj.rows.size(); ++i)
        if (traj.rows[i].state.timestamp_min == t) idx = i;
    if (idx == traj.rows.size()) throw std::runtime_error("timestamp " + std::to_string(t) + " not in log");

    const cl::PlantState& state = traj.rows[idx].state;
    const cl::ActionVector prev = idx > 0 ? traj.rows[idx - 1].action : traj.rows[idx].action;
    cl::PlantLayout layout(b.cfg);
    cl::ChillerHeuristicState heur;
    heur.count = std::max(1, static_cast<int>(state.sensors[static_cast<std::size_t>(layout.chillers_running)] +
                                              state.sensors[static_cast<std::size_t>(layout.fc_running)]));
    heur.mode = state.sensors[static_cast<std::size_t>(layout.free_cooling)] > 0.5 ? cl::ModeName::FreeCooling
                                                                                   : cl::ModeName::Mechanical;
    cl::Rng rng(seed);
    std::vector<cl::ExplainRow> table;
    cl::ActResult ar = cl::act(state, prev, model, b.cfg, b.ab.policy, b.ab.heuristic, heur, layout, rng, &table);

    std::printf("t=%lld: generated=%zu surviving=%zu branch=%s\n", static_cast<long long>(t),
                ar.record.candidates_generated, ar.record.candidates_surviving,
                std::string(cl::to_string(ar.record.branch)).c_str());
    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path);
        out = &file;
    }
    *out << "# explain v1\n";
    for (const auto& d : b.cfg.action_dims) *out << d.name << ",";
    *out << "mu_energy,sigma_energy,survived,exploit_score\n";
    for (const auto& row : table) {
        for (double v : row.action.values) *out << v << ",";
        *out << row.prediction.energy.mu << "," << row.prediction.energy.sigma << "," << (row.survived ? 1 : 0)
             << "," << row.exploit_score << "\n";
    }
    if (!out_path.empty()) std::printf("wrote %zu candidate rows to %s\n", table.size(), out_path.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale chiller plant control laboratory"};
    app.require_subcommand(1);

    std::string config_path = "configs/reference.yaml";
    app.add_option("--config", config_path, "facility configuration file")->capture_default_str();

    auto* sim_cmd = app.add_subcommand("simulate", "run the plant simulator under a controller");
    int sim_days = 7;
    std::uint64_t sim_seed = 0;
    std::string sim_out = "trajectory.csv";
    std::string sim_controller = "soo";
    std::string sim_model;
    sim_cmd->add_option("--days", sim_days);
    sim_cmd->add_option("--seed", sim_seed);
    sim_cmd->add_option("--out", sim_out);
    sim_cmd->add_option("--controller", sim_controller)->check(CLI::IsMember({"soo", "ai"}));
    sim_cmd->add_option("--model", sim_model);

    auto* train_cmd = app.add_subcommand("train", "train the critic ensemble from a trajectory log");
    std::string train_data, train_out = "model.ckpt";
    int train_epochs = 0, train_ensemble = 0;
    std::uint64_t train_seed = 17;
    bool include_soo = false;
    train_cmd->add_option("--data", train_data)->required();
    train_cmd->add_option("--out", train_out);
    train_cmd->add_option("--epochs", train_epochs);
    train_cmd->add_option("--ensemble", train_ensemble);
    train_cmd->add_option("--seed", train_seed);
    train_cmd->add_flag("--include-soo", include_soo, "also train on rule-based controller rows");

    auto* ab_cmd = app.add_subcommand("ab-test", "run the paired daily-alternation experiment");
    std::uint64_t ab_seed = 0;
    int ab_days = 0;
    std::string ab_out_dir;
    double ab_min_savings = -1e9;
    ab_cmd->add_option("--seed", ab_seed);
    ab_cmd->add_option("--days", ab_days);
    ab_cmd->add_option("--out-dir", ab_out_dir);
    ab_cmd->add_option("--min-savings", ab_min_savings, "exit 3 if overall savings %% falls below this");

    auto* ut_cmd = app.add_subcommand("unit-test", "score a model against expected sensitivity trends");
    std::string ut_model, ut_tests;
    double ut_max_metric = 0.0;
    ut_cmd->add_option("--model", ut_model)->required();
    ut_cmd->add_option("--tests", ut_tests)->required();
    ut_cmd->add_option("--max-metric", ut_max_metric, "exit 3 if the aggregated metric exceeds this");

    auto* clean_cmd = app.add_subcommand("clean-data", "gap-fill and flag anomalies in a trajectory log");
    std::string clean_in, clean_out = "cleaned.csv", clean_report;
    int clean_lookback = -1;
    clean_cmd->add_option("--in", clean_in)->required();
    clean_cmd->add_option("--out", clean_out);
    clean_cmd->add_option("--report", clean_report);
    clean_cmd->add_option("--lookback", clean_lookback);

    auto* explain_cmd = app.add_subcommand("explain", "dump the candidate/filter/score table for one step");
    std::string ex_model, ex_data, ex_out;
    std::int64_t ex_t = 0;
    std::uint64_t ex_seed = 0;
    explain_cmd->add_option("--model", ex_model)->required();
    explain_cmd->add_option("--data", ex_data)->required();
    explain_cmd->add_option("--t", ex_t)->required();
    explain_cmd->add_option("--seed", ex_seed);
    explain_cmd->add_option("--out", ex_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (sim_cmd->parsed()) return cmd_simulate(config_path, sim_days, sim_seed, sim_out, sim_controller, sim_model);
        if (train_cmd->parsed())
            return cmd_train(config_path, train_data, train_out, train_epochs, train_ensemble, train_seed, include_soo);
        if (ab_cmd->parsed()) return cmd_ab_test(config_path, ab_seed, ab_days, ab_out_dir, ab_min_savings);
        if (ut_cmd->parsed()) return cmd_unit_test(config_path, ut_model, ut_tests, ut_max_metric);
        if (clean_cmd->parsed()) return cmd_clean_data(config_path, clean_in, clean_out, clean_report, clean_lookback);
        if (explain_cmd->parsed()) return cmd_explain(config_path, ex_model, ex_data, ex_t, ex_seed, ex_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}
