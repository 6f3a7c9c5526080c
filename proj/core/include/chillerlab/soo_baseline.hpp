#pragma once

#include <string>
#include <vector>

#include "chillerlab/facility_config.hpp"
#include "chillerlab/plant_sim.hpp"

namespace chillerlab {

// Rule-based Sequence of Operations: the A/B baseline and the fallback
// controller after a kick-out. Values are config-settable defaults; the rules
// are deliberately coarse (fixed setpoints, block-quantized condenser reset,
// breakpoint staging).
struct SooRules {
    double chw_setpoint_f = 44.0;
    double cond_approach_f = 7.0;
    double cond_quantize_f = 4.0;     // condenser target rounded to this block size
    double cond_clamp_low_f = 65.0;
    double cond_clamp_high_f = 85.0;
    std::vector<double> stage_breakpoints_tons = {300.0, 600.0};  // count n -> n+1 at breakpoint[n-1]
    double hysteresis_tons = 40.0;
    double fc_wet_bulb_threshold_f = 39.0;
    double fc_chw_setpoint_f = 45.0;
    double dp_setpoint_psid = 16.0;
    double cw_flow_per_pump_gpm = 1400.0;
    double max_load_per_tower_tons = 650.0;
};

// Optional `soo:` block in the config document.
SooRules load_soo_rules(const std::string& config_text);

// Breakpoint staging with a symmetric hysteresis band; pure helper shared
// with tests.
int stage_with_hysteresis(int current, double load, const std::vector<double>& breakpoints, double band);

// Fully deterministic policy: output depends only on (rules, state) and
// always satisfies the reference config's action constraints.
ActionVector soo_policy(const SooRules& rules, const FacilityConfig& cfg, const PlantState& state);

} // namespace chillerlab
