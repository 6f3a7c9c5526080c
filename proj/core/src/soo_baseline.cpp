#include "chillerlab/soo_baseline.hpp"

#include <algorithm>
#include <cmath>

#include <yaml-cpp/yaml.h>

namespace chillerlab {

int stage_with_hysteresis(int current, double load, const std::vector<double>& breakpoints, double band) {
    const int max_count = static_cast<int>(breakpoints.size()) + 1;
    int n = std::clamp(current, 1, max_count);
    while (n < max_count && load > breakpoints[static_cast<std::size_t>(n - 1)] + band) ++n;
    while (n > 1 && load < breakpoints[static_cast<std::size_t>(n - 2)] - band) --n;
    return n;
}

SooRules load_soo_rules(const std::string& config_text) {
    SooRules r;
    YAML::Node root = YAML::Load(config_text);
    const YAML::Node soo = root["soo"];
    if (!soo) return r;
    if (!soo.IsMap()) throw ConfigError("'soo' must be a map");
    auto get = [&](const char* key, double& ref) {
        if (soo[key]) ref = soo[key].as<double>();
    };
    get("chw_setpoint_f", r.chw_setpoint_f);
    get("cond_approach_f", r.cond_approach_f);
    get("cond_quantize_f", r.cond_quantize_f);
    get("cond_clamp_low_f", r.cond_clamp_low_f);
    get("cond_clamp_high_f", r.cond_clamp_high_f);
    get("hysteresis_tons", r.hysteresis_tons);
    get("fc_wet_bulb_threshold_f", r.fc_wet_bulb_threshold_f);
    get("fc_chw_setpoint_f", r.fc_chw_setpoint_f);
    get("dp_setpoint_psid", r.dp_setpoint_psid);
    get("cw_flow_per_pump_gpm", r.cw_flow_per_pump_gpm);
    get("max_load_per_tower_tons", r.max_load_per_tower_tons);
    if (soo["stage_breakpoints_tons"]) {
        r.stage_breakpoints_tons.clear();
        for (const auto& v : soo["stage_breakpoints_tons"]) r.stage_breakpoints_tons.push_back(v.as<double>());
        if (r.stage_breakpoints_tons.empty()) throw ConfigError("soo.stage_breakpoints_tons must be nonempty");
        for (std::size_t i = 1; i < r.stage_breakpoints_tons.size(); ++i)
            if (r.stage_breakpoints_tons[i] <= r.stage_breakpoints_tons[i - 1])
                throw ConfigError("soo.stage_breakpoints_tons must be strictly increasing");
    }
    if (!(r.hysteresis_tons > 0.0)) throw ConfigError("soo.hysteresis_tons must be > 0");
    return r;
}

ActionVector soo_policy(const SooRules& rules, const FacilityConfig& cfg, const PlantState& state) {
    const PlantLayout L(cfg);
    const auto& s = state.sensors;
    const double load = s[L.load];
    const double wb = s[L.wet_bulb];

    const int current =
        static_cast<int>(std::lround(s[L.chillers_running])) + static_cast<int>(std::lround(s[L.fc_running]));
    const int staged = stage_with_hysteresis(current, load, rules.stage_breakpoints_tons, rules.hysteresis_tons);
    const bool free_cooling = wb < rules.fc_wet_bulb_threshold_f;

    ActionVector a;
    a.values.assign(cfg.action_dims.size(), 0.0);

    for (int i = 0; i < 3; ++i) a.values[static_cast<std::size_t>(L.a_chiller_temp[i])] = rules.chw_setpoint_f;
    a.values[static_cast<std::size_t>(L.a_mech_count)] = free_cooling ? 0.0 : staged;
    a.values[static_cast<std::size_t>(L.a_fc_count)] = free_cooling ? staged : 0.0;
    a.values[static_cast<std::size_t>(L.a_fc_temp)] = rules.fc_chw_setpoint_f;

    // Towers: one per staged unit, plus enough to respect the per-tower duty cap.
    const auto& tower_dim = cfg.action_dims[static_cast<std::size_t>(L.a_towers)];
    const double tower_max = *std::max_element(tower_dim.values.begin(), tower_dim.values.end());
    double towers = std::max(static_cast<double>(staged), std::ceil(load / rules.max_load_per_tower_tons));
    towers = std::clamp(towers, 1.0, tower_max);
    a.values[static_cast<std::size_t>(L.a_towers)] = towers;

    // Condenser target: wet bulb plus a fixed approach, block-quantized, clamped.
    double cond = wb + rules.cond_approach_f;
    cond = std::round(cond / rules.cond_quantize_f) * rules.cond_quantize_f;
    cond = std::clamp(cond, rules.cond_clamp_low_f, rules.cond_clamp_high_f);
    const auto& tower_temp_dim = cfg.action_dims[static_cast<std::size_t>(L.a_tower_temp)];
    a.values[static_cast<std::size_t>(L.a_tower_temp)] = tower_temp_dim.snap(cond);

    a.values[static_cast<std::size_t>(L.a_cw_pumps)] = staged;
    const auto& flow_dim = cfg.action_dims[static_cast<std::size_t>(L.a_cw_flow)];
    a.values[static_cast<std::size_t>(L.a_cw_flow)] = flow_dim.snap(rules.cw_flow_per_pump_gpm * staged);
    a.values[static_cast<std::size_t>(L.a_chw_pumps)] = staged;
    const auto& dp_dim = cfg.action_dims[static_cast<std::size_t>(L.a_chw_dp)];
    a.values[static_cast<std::size_t>(L.a_chw_dp)] = dp_dim.snap(rules.dp_setpoint_psid);

    return a;
}

} // namespace chillerlab
