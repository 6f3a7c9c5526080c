#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "chillerlab/facility_config.hpp"
#include "chillerlab/trajectory.hpp"

namespace chillerlab {

// Full feature ordering: all sensors (config order) followed by all action
// dims (config order).
std::vector<std::string> feature_names(const FacilityConfig& cfg);

struct TrainingExample {
    std::int64_t timestamp_min = 0;
    std::vector<double> features;            // sensors then actions
    double energy_target_kw = 0.0;           // mean plant power over the objective window
    std::vector<double> constraint_targets;  // window max/min per observation constraint
};

struct Normalizer {
    double mean = 0.0;
    double std = 1.0;
    bool degenerate = false;   // std was 0 and replaced by 1

    double apply(double v) const { return (v - mean) / std; }
    double invert(double z) const { return z * std + mean; }
};

struct TargetNormalizers {
    Normalizer energy;
    std::vector<Normalizer> constraints;
};

// Feature subset for one critic tower plus the targets that tower predicts
// (target 0 = energy, 1 + k = observation constraint k).
struct FeatureMask {
    std::string tower_name;
    std::vector<std::string> features;
    std::vector<int> targets;
};

struct SensorCleaningCounts {
    std::int64_t gap_filled = 0;
    std::int64_t dropped_implausible = 0;
    std::int64_t stuck_runs = 0;
    std::int64_t jumps = 0;
};

struct CleaningReport {
    std::vector<std::string> sensor;
    std::vector<SensorCleaningCounts> counts;

    std::string to_text() const;
};

struct CleaningParams {
    int lookback_steps = 6;
    int stuck_run_min_length = 6;   // runs of >= K identical values
    double jump_fraction = 0.5;     // single-step jumps > J * plausible range
};

// Gap-fills small holes from the lookback window, drops implausible values,
// flags stuck runs and jumps. All anomalies become report entries; rows with
// unfillable sensors stay gaps.
std::pair<Trajectory, CleaningReport> clean(const Trajectory& raw, const FacilityConfig& cfg,
                                            const CleaningParams& params = {});

// Monte Carlo targets over the configured horizons. Energy: mean plant power
// (kW) over [t, t+h). Constraints: window max (max_le) or min (min_ge) of the
// constrained sensor over [t, t+Tc). Windows crossing gaps or segment ends
// are dropped.
std::vector<TrainingExample> build_targets(const Trajectory& traj, const FacilityConfig& cfg);

// Keeps rows produced under AI control; `enabled = false` is the ablation
// switch that returns the input unchanged.
Trajectory filter_ai_only(const Trajectory& traj, bool enabled = true, std::string* warning = nullptr);

TargetNormalizers fit_normalizers(const std::vector<TrainingExample>& examples);

struct TowerMatrix {
    std::string tower_name;
    std::vector<int> columns;     // feature indices, mask order
    std::size_t rows = 0;
    std::vector<double> values;   // row-major rows x columns

    double at(std::size_t r, std::size_t c) const { return values[r * columns.size() + c]; }
};

std::vector<TowerMatrix> select_features(const std::vector<TrainingExample>& examples,
                                         const std::vector<FeatureMask>& masks, const FacilityConfig& cfg);

// Training-set file: CSV with a versioned header comment.
void write_training_set_csv(std::ostream& out, const FacilityConfig& cfg, const std::vector<TrainingExample>& examples);
std::vector<TrainingExample> read_training_set_csv(std::istream& in, const FacilityConfig& cfg);

// Default tower layout for the reference facility: an energy tower over all
// action dims plus weather/load drivers, and small per-constraint towers.
std::vector<FeatureMask> default_masks(const FacilityConfig& cfg);

// `masks:` block in the config document, if present; otherwise default_masks.
std::vector<FeatureMask> load_masks(const std::string& config_text, const FacilityConfig& cfg);

} // namespace chillerlab
