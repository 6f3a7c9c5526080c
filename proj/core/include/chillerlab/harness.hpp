#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "chillerlab/critic.hpp"
#include "chillerlab/dataset.hpp"
#include "chillerlab/plant_sim.hpp"
#include "chillerlab/policy.hpp"
#include "chillerlab/soo_baseline.hpp"
#include "chillerlab/trajectory.hpp"

namespace chillerlab {

struct AbSchedule {
    int days = 28;
    int exclusion_minutes = 120;   // rows this close after a controller handover are excluded
    bool ai_first = true;          // daily alternation starts with the AI
};

struct BucketSpec {
    std::vector<double> wet_bulb_edges_f;   // strictly increasing interior edges
    std::vector<double> load_edges_tons;

    static BucketSpec defaults();   // 5 degF x 200 ton granularity
};

// Retraining hook configuration: the model is retrained from scratch on all
// accumulated data every AI day; AI-only filtering kicks in once enough AI
// rows exist.
struct TrainingHookParams {
    CriticHParams critic;
    CleaningParams cleaning;
    bool ai_only = true;
    std::size_t min_ai_rows = 288;
    std::size_t min_examples = 64;
};

struct AbParams {
    AbSchedule schedule;
    int warmup_soo_days = 2;   // seed data before the first AI day
    int warmup_ai_days = 4;    // AI practice days before the A/B window
    PolicyHParams policy;
    ChillerHeuristicRules heuristic;
    TrainingHookParams training;
    std::vector<FeatureMask> masks;   // empty -> default_masks(cfg)
    std::uint64_t seed = 0;
};

// Optional `harness:` block in the config document.
AbParams load_ab_params(const std::string& config_text);

struct AbResult {
    Trajectory log;         // the A/B window only
    Trajectory full_log;    // warmup days included
    std::vector<DecisionRecord> decisions;
    int kick_outs = 0;
    int retrains = 0;
    std::optional<EnsembleModel> final_model;
};

// Drives the paired experiment: alternating controller days, daily retraining
// on accumulated (AI-filtered) data, guard supervision with kick-outs, and
// handover exclusion flags. Deterministic in (cfg, sim params, rules, params).
AbResult run_ab(const FacilityConfig& cfg, const SimParams& sim_params, const SooRules& soo, const AbParams& params);

struct BucketRow {
    int wb_bin = 0;
    int load_bin = 0;
    double hours_ai = 0.0;
    double hours_soo = 0.0;
    double mean_kw_ai = 0.0;
    double mean_kw_soo = 0.0;
    double savings = 0.0;   // (SOO - AI) / SOO
};

struct SavingsReport {
    std::vector<BucketRow> buckets;        // comparable: both controllers present
    std::vector<BucketRow> incomparable;   // one controller missing; excluded from the weighted sum
    double overall_savings = 0.0;
    double total_hours = 0.0;
};

// Hourly mean power per controller, bucketed by hourly mean wet bulb and
// load; overall savings is the hours-weighted mean over comparable buckets.
// Throws "no comparable conditions" when no bucket has both controllers.
SavingsReport bucketed_savings(const Trajectory& log, const BucketSpec& buckets, const FacilityConfig& cfg);

void write_bucket_csv(std::ostream& out, const SavingsReport& report);

struct ConstraintSatisfaction {
    std::string id;
    std::int64_t n_ai = 0, ok_ai = 0;
    std::int64_t n_soo = 0, ok_soo = 0;

    double rate_ai() const { return n_ai ? static_cast<double>(ok_ai) / static_cast<double>(n_ai) : 1.0; }
    double rate_soo() const { return n_soo ? static_cast<double>(ok_soo) / static_cast<double>(n_soo) : 1.0; }
};

// Per-constraint satisfaction rate (bound + tolerance) over non-excluded
// rows, split by controller.
std::vector<ConstraintSatisfaction> constraint_report(const Trajectory& log, const FacilityConfig& cfg);

struct ModelUnitTest {
    std::string relationship;   // grouping key for the aggregated metric
    std::string head;           // "energy" or an observation constraint id
    std::string action_dim;
    std::vector<double> deltas;
    std::vector<double> expected_deltas;
    double norm = 1.0;          // trend std, or the fixed manual constant for energy
    PlantState anchor_state;
    ActionVector anchor_action;
};

std::vector<ModelUnitTest> load_unit_tests(const std::string& text, const FacilityConfig& cfg);
std::vector<ModelUnitTest> load_unit_tests_file(const std::string& path, const FacilityConfig& cfg);

struct UnitTestResult {
    std::string relationship;
    std::vector<double> predicted_deltas;
    std::vector<double> expected_deltas;
    double normalized_error = 0.0;   // mean over deltas of |pred - expected| / norm
};

std::vector<UnitTestResult> run_unit_tests(const EnsembleModel& model, const std::vector<ModelUnitTest>& tests,
                                           const FacilityConfig& cfg);

// Mean over relationships of the mean normalized error of that relationship's
// tests; invariant to test order and to duplicating a relationship's anchors.
double aggregated_metric(const std::vector<UnitTestResult>& results);

} // namespace chillerlab
