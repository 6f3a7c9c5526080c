#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "chillerlab/facility_config.hpp"
#include "chillerlab/plant_state.hpp"

namespace chillerlab {

// Canonical sensor / action names the simulator binds to. The reference
// facility config declares exactly these.
namespace sensor_names {
inline constexpr const char* kWetBulb = "wet_bulb_temp";
inline constexpr const char* kLoad = "building_load";
inline constexpr const char* kSupplyTemp = "supply_temp";
inline constexpr const char* kChillerLeaving[3] = {"chiller_1_leaving_temp", "chiller_2_leaving_temp",
                                                   "chiller_3_leaving_temp"};
inline constexpr const char* kCondTemp = "condenser_water_temp";
inline constexpr const char* kChwDp = "chw_differential_pressure";
inline constexpr const char* kCondFlow = "condenser_flow";
inline constexpr const char* kChillersRunning = "chillers_running";
inline constexpr const char* kFcRunning = "fc_units_running";
inline constexpr const char* kTowersRunning = "towers_running";
inline constexpr const char* kCwPumpsRunning = "cw_pumps_running";
inline constexpr const char* kChwPumpsRunning = "chw_pumps_running";
inline constexpr const char* kTotalPower = "total_power";
inline constexpr const char* kFreeCooling = "free_cooling_active";
} // namespace sensor_names

namespace action_names {
inline constexpr const char* kChillerTemp[3] = {"chiller_1_temp", "chiller_2_temp", "chiller_3_temp"};
inline constexpr const char* kMechCount = "mech_chillers_count";
inline constexpr const char* kTowersCount = "towers_count";
inline constexpr const char* kTowerTemp = "tower_temp";
inline constexpr const char* kCwFlow = "cw_pump_flow";
inline constexpr const char* kCwPumpsCount = "cw_pumps_count";
inline constexpr const char* kChwDpSp = "chw_differential_pressure_sp";
inline constexpr const char* kChwPumpsCount = "chw_pumps_count";
inline constexpr const char* kFcCount = "fc_chillers_count";
inline constexpr const char* kFcTemp = "fc_chw_temp";
} // namespace action_names

enum class FaultKind { Drift, Jump, Stuck, Gap };

struct FaultSpec {
    std::string sensor;
    FaultKind kind = FaultKind::Drift;
    std::int64_t start_min = 0;
    std::int64_t end_min = 0;     // exclusive; drift/jump persist to end_min
    double magnitude = 0.0;        // drift: degF (or unit) per day; jump: step size
};

using FaultSchedule = std::vector<FaultSpec>;

// Simulator coefficients. These are invented desk-scale defaults tuned to the
// qualitative behaviors the lab asserts (staging crossover, condenser
// trade-off, free-cooling dominance); they do not model any real facility.
struct SimParams {
    double chiller_nominal_tons = 900.0;
    double chiller_overload_frac = 1.08;
    double carnot_eta = 0.45;
    double partload_quadratic = 0.8;   // penalty = 1 + q*(x - optimum)^2
    double partload_optimum = 0.75;
    double chiller_standby_kw = 18.0;

    double fc_unit_tons = 600.0;
    double fc_approach_min_f = 3.0;    // HX approach: tower water must be this far below the fc setpoint
    double fc_ramp_f = 5.0;            // approach margin over which fc capacity ramps to full
    double fc_standby_kw = 6.0;

    double cond_approach_base_f = 4.0; // refrigerant-side approaches grow with per-chiller loading
    double cond_approach_load_f = 8.0;
    double evap_approach_base_f = 2.0;
    double evap_approach_load_f = 3.0;
    double cw_design_gpm_per_ton = 3.0;
    double cw_flow_approach_gain_f = 6.0;
    double min_lift_f = 10.0;

    double tower_fan_coeff_kw = 686.0; // fan kW at reference duty and 1 degF approach, per tower
    double tower_duty_ref_tons = 900.0;
    double tower_min_approach_f = 2.0;

    double chw_flow_base_gpm = 300.0;  // per pump: flow = base + per_psid * dp
    double chw_flow_per_psid_gpm = 140.0;
    double chw_gpm_per_ton = 2.4;
    double chw_pump_coeff_kw = 24.0;
    double chw_pump_ref_gpm = 2540.0;
    double cw_pump_coeff_kw = 30.0;
    double cw_pump_ref_gpm = 1800.0;

    double aux_kw = 5.0;
    double supply_lag_minutes = 15.0;
    double deficit_supply_gain_f = 10.0;
    double cond_track_frac = 0.7;
    double idle_drift_frac = 0.5;      // idle chiller sensors drift toward loop temperature

    // exogenous drivers
    double load_base_tons = 850.0;
    double load_diurnal_frac = 0.45;
    double load_weekend_factor = 0.82;
    double load_noise_tons = 18.0;
    double load_floor_tons = 60.0;
    double wb_mean_f = 53.0;
    double wb_diurnal_amp_f = 7.0;
    double wb_seasonal_amp_f = 5.0;
    double wb_seasonal_period_days = 90.0;
    double wb_noise_f = 0.8;

    // measurement noise (sigma, by sensor role)
    double noise_supply_f = 0.05;
    double noise_leaving_f = 0.03;
    double noise_cond_f = 0.05;
    double noise_dp_psid = 0.02;
    double noise_flow_gpm = 5.0;

    // fixed per-chiller calibration bias added to the leaving-temp sensors
    double leaving_calibration_bias_f[3] = {0.0, 0.0, 0.0};

    FaultSchedule faults;
};

// Optional `sim:` block in the config document overrides defaults by name.
SimParams load_sim_params(const std::string& config_text);

// Resolved sensor/action indices for the canonical names above.
struct PlantLayout {
    explicit PlantLayout(const FacilityConfig& cfg);

    int wet_bulb, load, supply, leaving[3], cond_temp, chw_dp, cond_flow;
    int chillers_running, fc_running, towers_running, cw_pumps_running, chw_pumps_running;
    int total_power, free_cooling;

    int a_chiller_temp[3], a_mech_count, a_towers, a_tower_temp, a_cw_flow, a_cw_pumps;
    int a_chw_dp, a_chw_pumps, a_fc_count, a_fc_temp;
};

// Quasi-steady electrical breakdown for one (state, action) operating point.
struct PowerBreakdown {
    double chiller_kw = 0.0;
    double tower_kw = 0.0;
    double chw_pump_kw = 0.0;
    double cw_pump_kw = 0.0;
    double aux_kw = 0.0;
    double total_kw = 0.0;
    double delivered_tons = 0.0;
    double deficit_tons = 0.0;
    bool free_cooling = false;
};

class PlantSim {
public:
    PlantSim(const FacilityConfig& cfg, SimParams params, std::uint64_t seed);

    const SimParams& params() const { return params_; }
    const PlantLayout& layout() const { return layout_; }
    std::uint64_t seed() const { return seed_; }

    // (wet-bulb degF, building load tons) at step t; deterministic in (seed, t).
    std::pair<double, double> exogenous(std::int64_t t_min) const;

    PlantState initial_state(std::int64_t t0_min) const;

    PowerBreakdown power(const PlantState& state, const ActionVector& action) const;

    struct StepResult {
        PlantState next;
        double reward_kwh = 0.0;   // negative energy over the 5-minute step
    };
    StepResult step(const PlantState& state, const ActionVector& action) const;

private:
    const FacilityConfig& cfg_;
    SimParams params_;
    PlantLayout layout_;
    std::uint64_t seed_;
};

// Applies the fault schedule to true states in timestamp order. Stateful so a
// stuck sensor repeats the last value seen before the fault window.
class FaultInjector {
public:
    FaultInjector(const FacilityConfig& cfg, FaultSchedule schedule);

    PlantState observe(const PlantState& truth);

private:
    const FacilityConfig& cfg_;
    FaultSchedule schedule_;
    std::unordered_map<std::string, double> stuck_values_;
};

// BMS safety layer. Clamps recoverable action problems, kicks control back to
// the rule-based baseline when a live observation constraint is violated
// beyond tolerance or the controller produced no action. After a kick-out the
// AI stays disabled until re_enable() is called.
struct GuardState {
    bool ai_enabled = true;
    std::string last_reason;

    void re_enable() {
        ai_enabled = true;
        last_reason.clear();
    }
};

struct GuardDecision {
    enum class Kind { Accept, Modify, KickOut } kind = Kind::Accept;
    ActionVector action;   // possibly modified
    std::string reason;
};

GuardDecision bms_guard(const FacilityConfig& cfg, const PlantState& state,
                        const std::optional<ActionVector>& proposed, GuardState& guard_state);

} // namespace chillerlab
