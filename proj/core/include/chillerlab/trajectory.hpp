#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "chillerlab/facility_config.hpp"
#include "chillerlab/plant_state.hpp"

namespace chillerlab {

enum class ControllerId { Ai, Soo };

std::string_view to_string(ControllerId c);
ControllerId controller_from_string(std::string_view s);

enum class GuardOutcome { None, Accept, Modify, KickOut };

std::string_view to_string(GuardOutcome g);
GuardOutcome guard_from_string(std::string_view s);

struct TrajectoryRow {
    PlantState state;
    ActionVector action;
    double reward_kwh = 0.0;
    ControllerId controller = ControllerId::Soo;
    GuardOutcome guard = GuardOutcome::None;
    bool excluded = false;   // handover exclusion window (A/B analysis)

    // A row is a gap when any sensor is still missing after cleaning; target
    // windows never span gaps.
    bool is_gap() const {
        for (double v : state.sensors)
            if (PlantState::missing(v)) return true;
        return false;
    }
};

struct Trajectory {
    std::vector<TrajectoryRow> rows;

    std::size_t size() const { return rows.size(); }
    bool empty() const { return rows.empty(); }
};

// Append-only CSV: one row per 5-minute step, columns fixed by the config
// (timestamp, sensors, actions, reward, controller, guard, excluded), schema
// version in a leading comment row. Missing sensors are empty cells.
void write_trajectory_csv(std::ostream& out, const FacilityConfig& cfg, const Trajectory& traj);
void write_trajectory_csv(const std::string& path, const FacilityConfig& cfg, const Trajectory& traj);
Trajectory read_trajectory_csv(std::istream& in, const FacilityConfig& cfg);
Trajectory read_trajectory_csv(const std::string& path, const FacilityConfig& cfg);

} // namespace chillerlab
