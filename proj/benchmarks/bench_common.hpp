#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "chillerlab/critic.hpp"
#include "chillerlab/dataset.hpp"
#include "chillerlab/facility_config.hpp"
#include "chillerlab/rng.hpp"

namespace bench {

inline std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline const chillerlab::FacilityConfig& reference_config() {
    static chillerlab::FacilityConfig cfg =
        chillerlab::parse_config(slurp(std::string(CHILLERLAB_SOURCE_DIR) + "/configs/reference.yaml"));
    return cfg;
}

// Small synthetic training set so benchmarks exercise a realistically shaped
// model without running a simulation first.
inline std::vector<chillerlab::TrainingExample> synthetic_examples(const chillerlab::FacilityConfig& cfg, int n) {
    const std::size_t f = chillerlab::feature_names(cfg).size();
    chillerlab::Rng rng(5);
    std::vector<chillerlab::TrainingExample> out;
    for (int i = 0; i < n; ++i) {
        chillerlab::TrainingExample ex;
        ex.timestamp_min = i * 5;
        for (std::size_t j = 0; j < f; ++j) ex.features.push_back(rng.uniform(0, 50));
        ex.energy_target_kw = rng.uniform(100, 800);
        ex.constraint_targets.assign(cfg.observation_constraints.size(), rng.uniform(40, 46));
        out.push_back(std::move(ex));
    }
    return out;
}

} // namespace bench
