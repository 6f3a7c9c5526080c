#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "chillerlab/facility_config.hpp"
#include "chillerlab/plant_sim.hpp"
#include "chillerlab/soo_baseline.hpp"

namespace test_util {

inline std::string source_path(const std::string& rel) { return std::string(CHILLERLAB_SOURCE_DIR) + "/" + rel; }

inline std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string reference_config_text() { return slurp(source_path("configs/reference.yaml")); }

inline const chillerlab::FacilityConfig& reference_config() {
    static chillerlab::FacilityConfig cfg = chillerlab::parse_config(reference_config_text());
    return cfg;
}

// A plant state with every sensor set to a plausible mid-load operating point.
inline chillerlab::PlantState mid_load_state(const chillerlab::FacilityConfig& cfg, double load = 600.0,
                                             double wb = 57.0) {
    namespace sn = chillerlab::sensor_names;
    chillerlab::PlantState st;
    st.timestamp_min = 0;
    st.sensors.assign(cfg.sensors.size(), 0.0);
    auto set = [&](const char* name, double v) {
        const int i = cfg.sensor_index(name);
        if (i >= 0) st.sensors[static_cast<std::size_t>(i)] = v;
    };
    set(sn::kWetBulb, wb);
    set(sn::kLoad, load);
    set(sn::kSupplyTemp, 44.5);
    set(sn::kChillerLeaving[0], 44.0);
    set(sn::kChillerLeaving[1], 44.0);
    set(sn::kChillerLeaving[2], 44.0);
    set(sn::kCondTemp, 72.0);
    set(sn::kChwDp, 16.0);
    set(sn::kCondFlow, 2800.0);
    set(sn::kChillersRunning, 2.0);
    set(sn::kFcRunning, 0.0);
    set(sn::kTowersRunning, 2.0);
    set(sn::kCwPumpsRunning, 2.0);
    set(sn::kChwPumpsRunning, 2.0);
    set(sn::kTotalPower, 450.0);
    set(sn::kFreeCooling, 0.0);
    return st;
}

// The rule-based controller's action at this state; a convenient valid anchor.
inline chillerlab::ActionVector soo_action(const chillerlab::FacilityConfig& cfg, const chillerlab::PlantState& st) {
    return chillerlab::soo_policy(chillerlab::SooRules{}, cfg, st);
}

} // namespace test_util
