#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "chillerlab/expression.hpp"
#include "chillerlab/plant_state.hpp"

namespace chillerlab {

enum class SensorUnit { DegF, Tons, Kw, Gpm, Psid, Count, Boolean };

std::string_view to_string(SensorUnit u);
SensorUnit sensor_unit_from_string(std::string_view s);

struct SensorSpec {
    std::string name;
    SensorUnit unit = SensorUnit::DegF;
    double plausible_low = 0.0;
    double plausible_high = 0.0;
};

enum class ActionKind { Continuous, Discrete };

struct ActionDimSpec {
    std::string name;
    ActionKind kind = ActionKind::Continuous;
    double low = 0.0;          // continuous
    double high = 0.0;         // continuous
    double step_size = 0.0;    // continuous
    std::vector<double> values;        // discrete, as declared
    std::optional<double> neutral;     // substituted when a mode masks this dim

    // Number of allowed values: grid points for continuous, set size for
    // discrete.
    std::size_t grid_size() const;
    std::vector<double> allowed_values() const;
    double snap(double v) const;
    bool on_grid(double v, double tol = 1e-6) const;
};

enum class Comparator { Le, Ge };

struct ActionConstraint {
    std::string id;
    ExprPtr lhs;
    Comparator cmp = Comparator::Le;
    ExprPtr rhs;
};

enum class BoundDirection { MaxLe, MinGe };

struct ObservationConstraint {
    std::string id;
    std::string sensor_name;
    int sensor_index = -1;
    BoundDirection direction = BoundDirection::MaxLe;
    ExprPtr bound;             // never references actions
    double tolerance = 0.0;    // violation slack in sensor units
};

enum class ModeName { Mechanical, FreeCooling };

std::string_view to_string(ModeName m);

struct ModeSpec {
    ModeName name = ModeName::Mechanical;
    std::vector<std::string> active_action_dims;
    std::vector<std::string> active_constraints;   // action + observation ids

    bool action_active(std::string_view dim) const;
    bool constraint_active(std::string_view id) const;
};

struct FacilityConfig {
    std::vector<SensorSpec> sensors;
    std::vector<ActionDimSpec> action_dims;
    std::vector<ActionConstraint> action_constraints;
    std::vector<ObservationConstraint> observation_constraints;
    std::vector<ModeSpec> modes;
    int objective_horizon_minutes = 15;
    int constraint_horizon_minutes = 15;

    // Cached name lists (config order); filled by parse_config.
    std::vector<std::string> sensor_names;
    std::vector<std::string> action_names;

    int sensor_index(std::string_view name) const;
    int action_index(std::string_view name) const;
    const ModeSpec* find_mode(ModeName name) const;
    const ModeSpec& mode_or_throw(std::string_view name) const;
    IdentifierScope scope() const;

    int objective_horizon_steps() const { return objective_horizon_minutes / kStepMinutes; }
    int constraint_horizon_steps() const { return constraint_horizon_minutes / kStepMinutes; }
};

struct ConstraintCheckResult {
    std::string id;
    bool passed = false;
    double margin = 0.0;   // signed distance to the boundary; >= 0 passes
};

struct GridViolation {
    std::string dim;
    double value = 0.0;
};

struct InfeasiblePair {
    std::string dim;
    std::string lower_id;
    std::string upper_id;
    double lower = 0.0;
    double upper = 0.0;
};

struct ConstraintReport {
    std::vector<ConstraintCheckResult> constraints;
    std::vector<GridViolation> off_grid;
    std::vector<InfeasiblePair> infeasible_pairs;

    bool pass() const;
};

// Parses and validates a facility configuration document (YAML). Unknown
// top-level keys are ignored so the same file can carry controller and
// simulator blocks. Throws ConfigError naming the offending field.
FacilityConfig parse_config(const std::string& text);
FacilityConfig load_config(const std::string& path);

// Renders the facility sections back to a document; parse(print(cfg)) yields
// a structurally identical config (round-trip identity).
std::string print_config(const FacilityConfig& cfg);

// Evaluates all action constraints (optionally only those active in `mode`)
// and grid membership for every dim. Also scans single-dim bound pairs for
// joint infeasibility under the given state.
ConstraintReport check_action(const FacilityConfig& cfg, const PlantState& state, const ActionVector& action,
                              const ModeSpec* mode = nullptr);

// Bound value u for one observation constraint under the given state.
double evaluate_bound(const FacilityConfig& cfg, const PlantState& state, const ObservationConstraint& oc);

// Replaces dims inactive in `mode` with their neutral value, falling back to
// the previous action's value (or the input's own) when no neutral is
// declared.
ActionVector mask_for_mode(const FacilityConfig& cfg, const ModeSpec& mode, const ActionVector& action,
                           const ActionVector* prev_action = nullptr);

} // namespace chillerlab
