#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "chillerlab/critic.hpp"
#include "chillerlab/facility_config.hpp"
#include "chillerlab/plant_sim.hpp"
#include "chillerlab/plant_state.hpp"
#include "chillerlab/rng.hpp"

namespace chillerlab {

struct PolicyHParams {
    double epsilon = 0.05;            // exploration rate
    double alpha = 1.0;               // ensemble standard deviation weight
    double beta = 0.01;               // exploration softmax temperature
    int candidate_cap = 100000;
    std::uint64_t seed = 0;           // stream seed for the decision rng
    int samples_per_direction = 8;    // log-uniform step draws per continuous dim and direction
    bool verify_filter = false;       // independent re-scan of survivors
};

struct ChillerHeuristicRules {
    std::vector<double> breakpoints_tons = {550.0, 1150.0};
    double hysteresis_tons = 60.0;
    double min_toggle_minutes = 120.0;
    double fc_wet_bulb_on_f = 40.0;    // switch to free cooling below this
    double fc_wet_bulb_off_f = 42.0;   // back to mechanical above this
    bool control_counts = true;        // ablation switch: false returns count dims to the search
};

// High-level agent state: the equipment-count decision and its dwell timer.
struct ChillerHeuristicState {
    int count = 1;
    ModeName mode = ModeName::Mechanical;
    std::int64_t last_toggle_min = -1000000;
};

struct ChillerDecision {
    int count = 1;
    ModeName mode = ModeName::Mechanical;
};

// Stages the chiller count from load breakpoints with hysteresis and picks
// the cooling mode from wet bulb; any change is applied only when the dwell
// time has elapsed, and updates the toggle timestamp.
ChillerDecision chiller_heuristic(const PlantState& state, const PlantLayout& layout,
                                  const ChillerHeuristicRules& rules, ChillerHeuristicState& hs, std::int64_t t_min);

struct DecisionRecord {
    enum class Branch { Exploit, Explore, Fallback };

    std::int64_t timestamp_min = 0;
    std::size_t candidates_generated = 0;
    std::size_t candidates_surviving = 0;
    Branch branch = Branch::Fallback;
    std::optional<ActionVector> chosen;
    double mu_energy = 0.0;
    double sigma_energy = 0.0;
    std::vector<double> mu_constraints;
    std::vector<double> sigma_constraints;
    std::size_t filter_rescan_violations = 0;
};

std::string_view to_string(DecisionRecord::Branch b);

void write_decisions_csv(std::ostream& out, const FacilityConfig& cfg, const std::vector<DecisionRecord>& records);

struct CandidateOptions {
    const ModeSpec* mode = nullptr;                  // restricts active constraints
    std::vector<std::pair<int, double>> pinned;      // dim index -> fixed value
};

// Candidate actions around prev_action: per continuous dim, step magnitudes
// drawn log-uniformly between one grid step and the distance to the range
// edge (both directions, plus "no change"), snapped to the grid; discrete
// dims enumerate their value sets. Dims are expanded with partial-assignment
// pruning against the applicable action constraints. When the pruned
// Cartesian count N exceeds the cap, candidates are kept with probability
// min(1, cap/N). Every returned action satisfies check_action; an empty
// result signals the fallback.
std::vector<ActionVector> generate_candidates(const FacilityConfig& cfg, const ActionVector& prev_action,
                                              const PlantState& state, const PolicyHParams& hparams, Rng& rng,
                                              const CandidateOptions& options = {});

// Pessimistic observation-constraint filter: survive iff for every
// constraint, max_le: mu + alpha*sigma <= u; min_ge: mu - alpha*sigma >= u.
std::vector<std::size_t> filter_candidates(const std::vector<EnsemblePrediction>& predictions,
                                           const FacilityConfig& cfg, const PlantState& state, double alpha,
                                           const ModeSpec* mode = nullptr);

struct Selection {
    std::size_t index = 0;
    DecisionRecord::Branch branch = DecisionRecord::Branch::Exploit;
};

// Optimistic epsilon-greedy over the surviving candidates. Exploit (x >=
// epsilon): argmax of -mu_E - alpha*sigma_E with lowest-index tie break.
// Explore: softmax sample over (-mu_E + alpha*sigma_E) / energy_scale with
// temperature beta.
Selection select_action(const std::vector<EnsemblePrediction>& surviving, const PolicyHParams& hparams,
                        double energy_scale, Rng& rng);

// Exploration softmax probabilities (max-subtracted, compensated summation);
// exposed for tests and the explain tool.
std::vector<double> softmax_probabilities(const std::vector<double>& scores, double beta);

struct ExplainRow {
    ActionVector action;
    EnsemblePrediction prediction;
    bool survived = false;
    double exploit_score = 0.0;
};

struct ActResult {
    std::optional<ActionVector> action;   // empty = fall back to the SOO
    DecisionRecord record;
};

// Full control pipeline: chiller heuristic pins the count dims, the mode mask
// pins inactive dims, then generate -> predict -> filter -> select. Any empty
// stage yields the fallback signal.
ActResult act(const PlantState& state, const ActionVector& prev_action, const EnsembleModel& model,
              const FacilityConfig& cfg, const PolicyHParams& hparams, const ChillerHeuristicRules& heuristic_rules,
              ChillerHeuristicState& heuristic_state, const PlantLayout& layout, Rng& rng,
              std::vector<ExplainRow>* explain = nullptr);

} // namespace chillerlab
