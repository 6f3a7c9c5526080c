#include "chillerlab/plant_sim.hpp"

#include <algorithm>
#include <cmath>

#include <yaml-cpp/yaml.h>

#include "chillerlab/rng.hpp"

namespace chillerlab {

namespace {

constexpr double kKwPerTon = 3.5167;
constexpr double kRankineOffset = 459.67;
constexpr double kTwoPi = 6.283185307179586;

// noise stream ids
enum Stream : std::uint64_t {
    kLoadNoise = 1,
    kWbNoise = 2,
    kSupplyNoise = 3,
    kCondNoise = 4,
    kDpNoise = 5,
    kFlowNoise = 6,
    kLeavingNoise = 10, // +i per chiller
};

int require_sensor(const FacilityConfig& cfg, const char* name) {
    const int i = cfg.sensor_index(name);
    if (i < 0) throw ConfigError(std::string("simulator requires sensor '") + name + "'");
    return i;
}

int require_action(const FacilityConfig& cfg, const char* name) {
    const int i = cfg.action_index(name);
    if (i < 0) throw ConfigError(std::string("simulator requires action '") + name + "'");
    return i;
}

} // namespace

PlantLayout::PlantLayout(const FacilityConfig& cfg) {
    wet_bulb = require_sensor(cfg, sensor_names::kWetBulb);
    load = require_sensor(cfg, sensor_names::kLoad);
    supply = require_sensor(cfg, sensor_names::kSupplyTemp);
    for (int i = 0; i < 3; ++i) leaving[i] = require_sensor(cfg, sensor_names::kChillerLeaving[i]);
    cond_temp = require_sensor(cfg, sensor_names::kCondTemp);
    chw_dp = require_sensor(cfg, sensor_names::kChwDp);
    cond_flow = require_sensor(cfg, sensor_names::kCondFlow);
    chillers_running = require_sensor(cfg, sensor_names::kChillersRunning);
    fc_running = require_sensor(cfg, sensor_names::kFcRunning);
    towers_running = require_sensor(cfg, sensor_names::kTowersRunning);
    cw_pumps_running = require_sensor(cfg, sensor_names::kCwPumpsRunning);
    chw_pumps_running = require_sensor(cfg, sensor_names::kChwPumpsRunning);
    total_power = require_sensor(cfg, sensor_names::kTotalPower);
    free_cooling = require_sensor(cfg, sensor_names::kFreeCooling);

    for (int i = 0; i < 3; ++i) a_chiller_temp[i] = require_action(cfg, action_names::kChillerTemp[i]);
    a_mech_count = require_action(cfg, action_names::kMechCount);
    a_towers = require_action(cfg, action_names::kTowersCount);
    a_tower_temp = require_action(cfg, action_names::kTowerTemp);
    a_cw_flow = require_action(cfg, action_names::kCwFlow);
    a_cw_pumps = require_action(cfg, action_names::kCwPumpsCount);
    a_chw_dp = require_action(cfg, action_names::kChwDpSp);
    a_chw_pumps = require_action(cfg, action_names::kChwPumpsCount);
    a_fc_count = require_action(cfg, action_names::kFcCount);
    a_fc_temp = require_action(cfg, action_names::kFcTemp);
}

PlantSim::PlantSim(const FacilityConfig& cfg, SimParams params, std::uint64_t seed)
    : cfg_(cfg), params_(std::move(params)), layout_(cfg), seed_(seed) {}

std::pair<double, double> PlantSim::exogenous(std::int64_t t_min) const {
    const SimParams& p = params_;
    const double hod = static_cast<double>(t_min % 1440) / 60.0;
    const double day = static_cast<double>(t_min) / 1440.0;
    const int dow = static_cast<int>((t_min / 1440) % 7);

    const double week_factor = (dow >= 5) ? p.load_weekend_factor : 1.0;
    const double diurnal = 1.0 + p.load_diurnal_frac * std::cos(kTwoPi * (hod - 15.5) / 24.0);
    double load = p.load_base_tons * week_factor * diurnal + p.load_noise_tons * hash_normal(seed_, t_min, kLoadNoise);
    load = std::max(load, p.load_floor_tons);

    double wb = p.wb_mean_f + p.wb_seasonal_amp_f * std::sin(kTwoPi * day / p.wb_seasonal_period_days) +
                p.wb_diurnal_amp_f * std::cos(kTwoPi * (hod - 15.0) / 24.0) +
                p.wb_noise_f * hash_normal(seed_, t_min, kWbNoise);
    return {wb, load};
}

PowerBreakdown PlantSim::power(const PlantState& state, const ActionVector& action) const {
    const SimParams& p = params_;
    const PlantLayout& L = layout_;
    const auto& s = state.sensors;
    const auto& a = action.values;

    PowerBreakdown out;
    const double load = s[L.load];
    const double wb = s[L.wet_bulb];
    const int n_mech = static_cast<int>(std::lround(a[L.a_mech_count]));
    const int n_fc = static_cast<int>(std::lround(a[L.a_fc_count]));
    const int n_tw = std::max(1, static_cast<int>(std::lround(a[L.a_towers])));
    const int n_cwp = std::max(1, static_cast<int>(std::lround(a[L.a_cw_pumps])));
    const int n_chwp = std::max(1, static_cast<int>(std::lround(a[L.a_chw_pumps])));
    const bool mech = n_mech >= 1;
    out.free_cooling = !mech && n_fc >= 1;

    const double chw_flow = n_chwp * (p.chw_flow_base_gpm + p.chw_flow_per_psid_gpm * a[L.a_chw_dp]);
    const double flow_limit_tons = chw_flow / p.chw_gpm_per_ton;

    double capacity = 0.0;
    if (mech) {
        capacity = n_mech * p.chiller_nominal_tons * p.chiller_overload_frac;
    } else if (n_fc >= 1) {
        const double margin = a[L.a_fc_temp] - (wb + p.fc_approach_min_f);
        const double avail = std::clamp(margin / p.fc_ramp_f, 0.0, 1.0);
        capacity = n_fc * p.fc_unit_tons * avail;
    }
    out.delivered_tons = std::min({load, capacity, flow_limit_tons});
    out.deficit_tons = load - out.delivered_tons;

    double compressor_kw = 0.0;
    if (mech) {
        out.chiller_kw = n_mech * p.chiller_standby_kw;
        if (out.delivered_tons > 0.0) {
            const double x = out.delivered_tons / (n_mech * p.chiller_nominal_tons);
            double chw_eff = 0.0;
            for (int i = 0; i < n_mech; ++i) chw_eff += a[L.a_chiller_temp[i]];
            chw_eff /= n_mech;
            const double specific_flow =
                a[L.a_cw_flow] / std::max(out.delivered_tons * p.cw_design_gpm_per_ton, 1.0);
            const double flow_penalty_f = p.cw_flow_approach_gain_f * std::max(0.0, 1.0 / std::max(specific_flow, 0.1) - 1.0);
            const double t_cond_refrig =
                s[L.cond_temp] + p.cond_approach_base_f + p.cond_approach_load_f * x + flow_penalty_f;
            const double t_evap = chw_eff - (p.evap_approach_base_f + p.evap_approach_load_f * x);
            const double lift = std::max(p.min_lift_f, t_cond_refrig - t_evap);
            const double cop = p.carnot_eta * (t_evap + kRankineOffset) / lift;
            const double partload = 1.0 + p.partload_quadratic * (x - p.partload_optimum) * (x - p.partload_optimum);
            compressor_kw = out.delivered_tons * kKwPerTon / cop * partload;
            out.chiller_kw += compressor_kw;
        }
    }
    if (n_fc >= 1) out.chiller_kw += n_fc * p.fc_standby_kw;

    const double duty_tons = out.delivered_tons + compressor_kw / kKwPerTon;
    if (duty_tons > 0.0) {
        double approach;
        if (out.free_cooling)
            approach = std::max(a[L.a_fc_temp] - p.fc_approach_min_f - wb, p.tower_min_approach_f);
        else
            approach = std::max(a[L.a_tower_temp] - wb, p.tower_min_approach_f);
        out.tower_kw = n_tw * p.tower_fan_coeff_kw * (duty_tons / p.tower_duty_ref_tons) / (approach * approach);
    }

    const double chw_per_pump = chw_flow / n_chwp;
    out.chw_pump_kw = n_chwp * p.chw_pump_coeff_kw * std::pow(chw_per_pump / p.chw_pump_ref_gpm, 3.0);
    const double cw_per_pump = a[L.a_cw_flow] / n_cwp;
    out.cw_pump_kw = n_cwp * p.cw_pump_coeff_kw * std::pow(cw_per_pump / p.cw_pump_ref_gpm, 3.0);

    out.aux_kw = p.aux_kw;
    out.total_kw = out.chiller_kw + out.tower_kw + out.chw_pump_kw + out.cw_pump_kw + out.aux_kw;
    return out;
}

PlantState PlantSim::initial_state(std::int64_t t0_min) const {
    const SimParams& p = params_;
    const PlantLayout& L = layout_;
    PlantState st;
    st.timestamp_min = t0_min;
    st.sensors.assign(cfg_.sensors.size(), 0.0);
    const auto [wb, load] = exogenous(t0_min);
    st.sensors[L.wet_bulb] = wb;
    st.sensors[L.load] = load;
    st.sensors[L.supply] = 44.5;
    for (int i = 0; i < 3; ++i) st.sensors[L.leaving[i]] = 44.0 + p.leaving_calibration_bias_f[i];
    st.sensors[L.cond_temp] = std::clamp(wb + 7.0, 65.0, 85.0);
    st.sensors[L.chw_dp] = 16.0;
    st.sensors[L.cond_flow] = 2800.0;
    const double n_ch = std::clamp(std::ceil(load / 600.0), 1.0, 3.0);
    st.sensors[L.chillers_running] = n_ch;
    st.sensors[L.fc_running] = 0.0;
    st.sensors[L.towers_running] = n_ch;
    st.sensors[L.cw_pumps_running] = n_ch;
    st.sensors[L.chw_pumps_running] = n_ch;
    st.sensors[L.total_power] = 400.0;
    st.sensors[L.free_cooling] = 0.0;
    return st;
}

PlantSim::StepResult PlantSim::step(const PlantState& state, const ActionVector& action) const {
    const SimParams& p = params_;
    const PlantLayout& L = layout_;
    const std::int64_t t_next = state.timestamp_min + kStepMinutes;

    const PowerBreakdown pb = power(state, action);

    StepResult res;
    res.reward_kwh = -pb.total_kw / 12.0;
    PlantState& next = res.next;
    next.timestamp_min = t_next;
    next.sensors.assign(cfg_.sensors.size(), 0.0);

    const auto [wb, load] = exogenous(t_next);
    next.sensors[L.wet_bulb] = wb;
    next.sensors[L.load] = load;

    const int n_mech = static_cast<int>(std::lround(action.values[L.a_mech_count]));
    const int n_fc = static_cast<int>(std::lround(action.values[L.a_fc_count]));
    const bool mech = n_mech >= 1;

    // Chiller leaving temperatures track their setpoints with a one-step lag;
    // idle sensors drift toward the loop temperature.
    for (int i = 0; i < 3; ++i) {
        const double noise = p.noise_leaving_f * hash_normal(seed_, t_next, kLeavingNoise + static_cast<std::uint64_t>(i));
        if (mech && i < n_mech)
            next.sensors[L.leaving[i]] =
                action.values[L.a_chiller_temp[i]] + p.leaving_calibration_bias_f[i] + noise;
        else
            next.sensors[L.leaving[i]] = state.sensors[L.leaving[i]] +
                                         p.idle_drift_frac * (state.sensors[L.supply] - state.sensors[L.leaving[i]]) +
                                         noise;
    }

    // Distribution supply: first-order lag toward the blended source
    // temperature, lifted by any unmet load.
    double source;
    if (pb.delivered_tons > 0.0 && mech) {
        source = 0.0;
        for (int i = 0; i < n_mech; ++i) source += next.sensors[L.leaving[i]];
        source /= n_mech;
    } else if (pb.delivered_tons > 0.0) {
        source = action.values[L.a_fc_temp] + 1.0;
    } else {
        source = state.sensors[L.supply] + 3.0;
    }
    const double demand_scale = std::max(state.sensors[L.load], 50.0);
    double supply_target = source + p.deficit_supply_gain_f * (pb.deficit_tons / demand_scale);
    const double lag_frac = static_cast<double>(kStepMinutes) / p.supply_lag_minutes;
    double supply = state.sensors[L.supply] + (supply_target - state.sensors[L.supply]) * lag_frac +
                    p.noise_supply_f * hash_normal(seed_, t_next, kSupplyNoise);
    const auto& supply_spec = cfg_.sensors[static_cast<std::size_t>(L.supply)];
    supply = std::clamp(supply, supply_spec.plausible_low + 0.5, supply_spec.plausible_high - 0.5);
    next.sensors[L.supply] = supply;

    // Condenser water tracks the tower target, floored by physics at wb + min approach.
    double cond_target;
    if (pb.free_cooling)
        cond_target = action.values[L.a_fc_temp] - p.fc_approach_min_f;
    else
        cond_target = action.values[L.a_tower_temp];
    cond_target = std::max(cond_target, wb + p.tower_min_approach_f);
    next.sensors[L.cond_temp] = state.sensors[L.cond_temp] +
                                (cond_target - state.sensors[L.cond_temp]) * p.cond_track_frac +
                                p.noise_cond_f * hash_normal(seed_, t_next, kCondNoise);

    next.sensors[L.chw_dp] =
        action.values[L.a_chw_dp] + p.noise_dp_psid * hash_normal(seed_, t_next, kDpNoise);
    next.sensors[L.cond_flow] =
        action.values[L.a_cw_flow] + p.noise_flow_gpm * hash_normal(seed_, t_next, kFlowNoise);

    next.sensors[L.chillers_running] = n_mech;
    next.sensors[L.fc_running] = n_fc;
    next.sensors[L.towers_running] = std::lround(action.values[L.a_towers]);
    next.sensors[L.cw_pumps_running] = std::lround(action.values[L.a_cw_pumps]);
    next.sensors[L.chw_pumps_running] = std::lround(action.values[L.a_chw_pumps]);
    next.sensors[L.total_power] = pb.total_kw;
    next.sensors[L.free_cooling] = pb.free_cooling ? 1.0 : 0.0;

    // Keep every sensor inside its declared plausible range.
    for (std::size_t i = 0; i < next.sensors.size(); ++i) {
        const auto& spec = cfg_.sensors[i];
        next.sensors[i] = std::clamp(next.sensors[i], spec.plausible_low, spec.plausible_high);
    }
    return res;
}

FaultInjector::FaultInjector(const FacilityConfig& cfg, FaultSchedule schedule)
    : cfg_(cfg), schedule_(std::move(schedule)) {
    for (const auto& f : schedule_)
        if (cfg_.sensor_index(f.sensor) < 0)
            throw ConfigError("fault schedule references unknown sensor '" + f.sensor + "'");
}

PlantState FaultInjector::observe(const PlantState& truth) {
    PlantState obs = truth;
    const std::int64_t t = truth.timestamp_min;
    for (std::size_t fi = 0; fi < schedule_.size(); ++fi) {
        const auto& f = schedule_[fi];
        if (t < f.start_min || t >= f.end_min) continue;
        const int idx = cfg_.sensor_index(f.sensor);
        double& v = obs.sensors[static_cast<std::size_t>(idx)];
        switch (f.kind) {
        case FaultKind::Drift:
            v += f.magnitude * static_cast<double>(t - f.start_min) / 1440.0;
            break;
        case FaultKind::Jump:
            v += f.magnitude;
            break;
        case FaultKind::Stuck: {
            const std::string key = f.sensor + "#" + std::to_string(fi);
            auto it = stuck_values_.find(key);
            if (it == stuck_values_.end()) it = stuck_values_.emplace(key, v).first;
            v = it->second;
            break;
        }
        case FaultKind::Gap:
            v = std::nan("");
            break;
        }
    }
    return obs;
}

GuardDecision bms_guard(const FacilityConfig& cfg, const PlantState& state,
                        const std::optional<ActionVector>& proposed, GuardState& guard_state) {
    GuardDecision d;
    if (!proposed.has_value()) {
        guard_state.ai_enabled = false;
        guard_state.last_reason = "no actions generated";
        d.kind = GuardDecision::Kind::KickOut;
        d.reason = guard_state.last_reason;
        return d;
    }

    for (const auto& oc : cfg.observation_constraints) {
        const double v = state.sensors[static_cast<std::size_t>(oc.sensor_index)];
        if (PlantState::missing(v)) continue;
        const double u = evaluate_bound(cfg, state, oc);
        const bool violated = oc.direction == BoundDirection::MaxLe ? v > u + oc.tolerance : v < u - oc.tolerance;
        if (violated) {
            guard_state.ai_enabled = false;
            guard_state.last_reason = "constraint violation: " + oc.id;
            d.kind = GuardDecision::Kind::KickOut;
            d.reason = guard_state.last_reason;
            return d;
        }
    }

    d.action = *proposed;
    bool modified = false;
    for (std::size_t i = 0; i < cfg.action_dims.size(); ++i) {
        const auto& spec = cfg.action_dims[i];
        if (!spec.on_grid(d.action.values[i])) {
            d.action.values[i] = spec.snap(d.action.values[i]);
            modified = true;
        }
    }
    d.kind = modified ? GuardDecision::Kind::Modify : GuardDecision::Kind::Accept;
    return d;
}

SimParams load_sim_params(const std::string& config_text) {
    SimParams p;
    YAML::Node root = YAML::Load(config_text);
    const YAML::Node sim = root["sim"];
    if (!sim) return p;
    if (!sim.IsMap()) throw ConfigError("'sim' must be a map");

    auto get = [&](const char* key, double& ref) {
        if (sim[key]) ref = sim[key].as<double>();
    };
    get("chiller_nominal_tons", p.chiller_nominal_tons);
    get("chiller_overload_frac", p.chiller_overload_frac);
    get("carnot_eta", p.carnot_eta);
    get("partload_quadratic", p.partload_quadratic);
    get("partload_optimum", p.partload_optimum);
    get("chiller_standby_kw", p.chiller_standby_kw);
    get("fc_unit_tons", p.fc_unit_tons);
    get("fc_approach_min_f", p.fc_approach_min_f);
    get("fc_ramp_f", p.fc_ramp_f);
    get("fc_standby_kw", p.fc_standby_kw);
    get("cond_approach_base_f", p.cond_approach_base_f);
    get("cond_approach_load_f", p.cond_approach_load_f);
    get("evap_approach_base_f", p.evap_approach_base_f);
    get("evap_approach_load_f", p.evap_approach_load_f);
    get("cw_design_gpm_per_ton", p.cw_design_gpm_per_ton);
    get("cw_flow_approach_gain_f", p.cw_flow_approach_gain_f);
    get("min_lift_f", p.min_lift_f);
    get("tower_fan_coeff_kw", p.tower_fan_coeff_kw);
    get("tower_duty_ref_tons", p.tower_duty_ref_tons);
    get("tower_min_approach_f", p.tower_min_approach_f);
    get("chw_flow_base_gpm", p.chw_flow_base_gpm);
    get("chw_flow_per_psid_gpm", p.chw_flow_per_psid_gpm);
    get("chw_gpm_per_ton", p.chw_gpm_per_ton);
    get("chw_pump_coeff_kw", p.chw_pump_coeff_kw);
    get("chw_pump_ref_gpm", p.chw_pump_ref_gpm);
    get("cw_pump_coeff_kw", p.cw_pump_coeff_kw);
    get("cw_pump_ref_gpm", p.cw_pump_ref_gpm);
    get("aux_kw", p.aux_kw);
    get("supply_lag_minutes", p.supply_lag_minutes);
    get("deficit_supply_gain_f", p.deficit_supply_gain_f);
    get("cond_track_frac", p.cond_track_frac);
    get("idle_drift_frac", p.idle_drift_frac);
    get("load_base_tons", p.load_base_tons);
    get("load_diurnal_frac", p.load_diurnal_frac);
    get("load_weekend_factor", p.load_weekend_factor);
    get("load_noise_tons", p.load_noise_tons);
    get("load_floor_tons", p.load_floor_tons);
    get("wb_mean_f", p.wb_mean_f);
    get("wb_diurnal_amp_f", p.wb_diurnal_amp_f);
    get("wb_seasonal_amp_f", p.wb_seasonal_amp_f);
    get("wb_seasonal_period_days", p.wb_seasonal_period_days);
    get("wb_noise_f", p.wb_noise_f);
    get("noise_supply_f", p.noise_supply_f);
    get("noise_leaving_f", p.noise_leaving_f);
    get("noise_cond_f", p.noise_cond_f);
    get("noise_dp_psid", p.noise_dp_psid);
    get("noise_flow_gpm", p.noise_flow_gpm);

    if (sim["leaving_calibration_bias_f"]) {
        const YAML::Node b = sim["leaving_calibration_bias_f"];
        if (!b.IsSequence() || b.size() != 3)
            throw ConfigError("sim.leaving_calibration_bias_f must be a list of 3 values");
        for (int i = 0; i < 3; ++i) p.leaving_calibration_bias_f[i] = b[static_cast<std::size_t>(i)].as<double>();
    }
    if (sim["faults"]) {
        for (const auto& n : sim["faults"]) {
            FaultSpec f;
            f.sensor = n["sensor"].as<std::string>();
            const std::string kind = n["kind"].as<std::string>();
            if (kind == "drift")
                f.kind = FaultKind::Drift;
            else if (kind == "jump")
                f.kind = FaultKind::Jump;
            else if (kind == "stuck")
                f.kind = FaultKind::Stuck;
            else if (kind == "gap")
                f.kind = FaultKind::Gap;
            else
                throw ConfigError("sim.faults[].kind must be drift|jump|stuck|gap");
            f.start_min = n["start_min"].as<std::int64_t>();
            f.end_min = n["end_min"].as<std::int64_t>();
            if (n["magnitude"]) f.magnitude = n["magnitude"].as<double>();
            p.faults.push_back(std::move(f));
        }
    }
    return p;
}

} // namespace chillerlab
