#include "chillerlab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "chillerlab/plant_sim.hpp"

namespace chillerlab {

std::vector<std::string> feature_names(const FacilityConfig& cfg) {
    std::vector<std::string> names = cfg.sensor_names;
    names.insert(names.end(), cfg.action_names.begin(), cfg.action_names.end());
    return names;
}

std::string CleaningReport::to_text() const {
    std::ostringstream out;
    out << "cleaning report v1\n";
    for (std::size_t i = 0; i < sensor.size(); ++i) {
        const auto& c = counts[i];
        out << sensor[i] << ": gap_filled=" << c.gap_filled << " dropped_implausible=" << c.dropped_implausible
            << " stuck_runs=" << c.stuck_runs << " jumps=" << c.jumps << "\n";
    }
    return out.str();
}

std::pair<Trajectory, CleaningReport> clean(const Trajectory& raw, const FacilityConfig& cfg,
                                            const CleaningParams& params) {
    Trajectory out = raw;
    CleaningReport report;
    const std::size_t n = out.rows.size();

    auto contiguous = [&](std::size_t later, std::size_t earlier) {
        return out.rows[later].state.timestamp_min - out.rows[earlier].state.timestamp_min ==
               static_cast<std::int64_t>(later - earlier) * kStepMinutes;
    };

    for (std::size_t j = 0; j < cfg.sensors.size(); ++j) {
        const auto& spec = cfg.sensors[j];
        SensorCleaningCounts c;
        const double width = spec.plausible_high - spec.plausible_low;

        // implausible values become missing
        for (std::size_t i = 0; i < n; ++i) {
            double& v = out.rows[i].state.sensors[j];
            if (!PlantState::missing(v) && (v < spec.plausible_low || v > spec.plausible_high)) {
                v = std::nan("");
                ++c.dropped_implausible;
            }
        }

        // single-step jumps (reported, not removed)
        for (std::size_t i = 1; i < n; ++i) {
            const double a = out.rows[i - 1].state.sensors[j];
            const double b = out.rows[i].state.sensors[j];
            if (!PlantState::missing(a) && !PlantState::missing(b) && contiguous(i, i - 1) &&
                std::abs(b - a) > params.jump_fraction * width)
                ++c.jumps;
        }

        // stuck runs: >= K identical consecutive values; everything after the
        // run start is treated as missing
        std::size_t i = 0;
        while (i < n) {
            const double v = out.rows[i].state.sensors[j];
            if (PlantState::missing(v)) {
                ++i;
                continue;
            }
            std::size_t k = i + 1;
            while (k < n && !PlantState::missing(out.rows[k].state.sensors[j]) &&
                   out.rows[k].state.sensors[j] == v && contiguous(k, k - 1))
                ++k;
            if (k - i >= static_cast<std::size_t>(params.stuck_run_min_length)) {
                ++c.stuck_runs;
                for (std::size_t m = i + 1; m < k; ++m) out.rows[m].state.sensors[j] = std::nan("");
            }
            i = k;
        }

        // lookback fill from the most recent surviving real value
        std::vector<bool> original(n);
        for (std::size_t m = 0; m < n; ++m) original[m] = !PlantState::missing(out.rows[m].state.sensors[j]);
        for (std::size_t m = 0; m < n; ++m) {
            if (original[m]) continue;
            for (std::size_t back = 1; back <= static_cast<std::size_t>(params.lookback_steps) && back <= m; ++back) {
                const std::size_t src = m - back;
                if (!contiguous(m, src)) break;
                if (original[src]) {
                    out.rows[m].state.sensors[j] = out.rows[src].state.sensors[j];
                    ++c.gap_filled;
                    break;
                }
            }
        }

        report.sensor.push_back(spec.name);
        report.counts.push_back(c);
    }
    return {std::move(out), std::move(report)};
}

std::vector<TrainingExample> build_targets(const Trajectory& traj, const FacilityConfig& cfg) {
    std::vector<TrainingExample> out;
    const std::size_t n = traj.rows.size();
    const std::size_t h_e = static_cast<std::size_t>(cfg.objective_horizon_steps());
    const std::size_t h_c = static_cast<std::size_t>(cfg.constraint_horizon_steps());
    const std::size_t w = std::max(h_e, h_c);
    if (n < w) return out;

    for (std::size_t t = 0; t + w <= n; ++t) {
        bool ok = true;
        for (std::size_t k = t; k < t + w && ok; ++k) {
            if (traj.rows[k].is_gap()) ok = false;
            if (k > t && traj.rows[k].state.timestamp_min - traj.rows[k - 1].state.timestamp_min != kStepMinutes)
                ok = false;
        }
        if (!ok) continue;

        TrainingExample ex;
        ex.timestamp_min = traj.rows[t].state.timestamp_min;
        ex.features = traj.rows[t].state.sensors;
        ex.features.insert(ex.features.end(), traj.rows[t].action.values.begin(), traj.rows[t].action.values.end());

        double sum = 0.0;
        for (std::size_t k = t; k < t + h_e; ++k) sum += -traj.rows[k].reward_kwh * 12.0;
        ex.energy_target_kw = sum / static_cast<double>(h_e);

        ex.constraint_targets.reserve(cfg.observation_constraints.size());
        for (const auto& oc : cfg.observation_constraints) {
            const std::size_t si = static_cast<std::size_t>(oc.sensor_index);
            double agg = traj.rows[t].state.sensors[si];
            for (std::size_t k = t + 1; k < t + h_c; ++k) {
                const double v = traj.rows[k].state.sensors[si];
                agg = oc.direction == BoundDirection::MaxLe ? std::max(agg, v) : std::min(agg, v);
            }
            ex.constraint_targets.push_back(agg);
        }
        out.push_back(std::move(ex));
    }
    return out;
}

Trajectory filter_ai_only(const Trajectory& traj, bool enabled, std::string* warning) {
    if (!enabled) return traj;
    Trajectory out;
    for (const auto& r : traj.rows)
        if (r.controller == ControllerId::Ai) out.rows.push_back(r);
    if (out.rows.empty() && warning) *warning = "filter_ai_only: no AI-controlled rows in trajectory";
    return out;
}

namespace {

Normalizer fit_one(const std::vector<double>& xs) {
    Normalizer z;
    const double n = static_cast<double>(xs.size());
    double sum = 0.0;
    for (double x : xs) sum += x;
    z.mean = sum / n;
    double ss = 0.0;
    for (double x : xs) ss += (x - z.mean) * (x - z.mean);
    const double sd = std::sqrt(ss / n); // population formula
    if (sd > 0.0) {
        z.std = sd;
    } else {
        z.std = 1.0;
        z.degenerate = true;
    }
    return z;
}

} // namespace

TargetNormalizers fit_normalizers(const std::vector<TrainingExample>& examples) {
    if (examples.size() < 2) throw std::invalid_argument("fit_normalizers: need at least 2 examples");
    TargetNormalizers out;
    std::vector<double> col(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) col[i] = examples[i].energy_target_kw;
    out.energy = fit_one(col);
    const std::size_t k = examples.front().constraint_targets.size();
    for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t i = 0; i < examples.size(); ++i) col[i] = examples[i].constraint_targets[j];
        out.constraints.push_back(fit_one(col));
    }
    return out;
}

std::vector<TowerMatrix> select_features(const std::vector<TrainingExample>& examples,
                                         const std::vector<FeatureMask>& masks, const FacilityConfig& cfg) {
    const std::vector<std::string> names = feature_names(cfg);
    std::vector<TowerMatrix> out;
    for (const auto& mask : masks) {
        if (mask.features.empty()) throw ConfigError("mask '" + mask.tower_name + "' selects no features");
        TowerMatrix m;
        m.tower_name = mask.tower_name;
        for (const auto& f : mask.features) {
            const auto it = std::find(names.begin(), names.end(), f);
            if (it == names.end())
                throw ConfigError("mask '" + mask.tower_name + "' references unknown feature '" + f + "'");
            m.columns.push_back(static_cast<int>(it - names.begin()));
        }
        m.rows = examples.size();
        m.values.reserve(m.rows * m.columns.size());
        for (const auto& ex : examples)
            for (int cidx : m.columns) m.values.push_back(ex.features[static_cast<std::size_t>(cidx)]);
        out.push_back(std::move(m));
    }
    return out;
}

void write_training_set_csv(std::ostream& out, const FacilityConfig& cfg,
                            const std::vector<TrainingExample>& examples) {
    out << "# training-set v1\n";
    out << "timestamp_min";
    for (const auto& f : feature_names(cfg)) out << "," << f;
    out << ",energy_target_kw";
    for (const auto& oc : cfg.observation_constraints) out << ",target_" << oc.id;
    out << "\n";
    char buf[32];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.10g", v);
        out << "," << buf;
    };
    for (const auto& ex : examples) {
        out << ex.timestamp_min;
        for (double v : ex.features) put(v);
        put(ex.energy_target_kw);
        for (double v : ex.constraint_targets) put(v);
        out << "\n";
    }
}

std::vector<TrainingExample> read_training_set_csv(std::istream& in, const FacilityConfig& cfg) {
    std::vector<TrainingExample> out;
    const std::size_t n_features = feature_names(cfg).size();
    const std::size_t n_targets = cfg.observation_constraints.size();
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        std::stringstream ss(line);
        std::string cell;
        TrainingExample ex;
        std::getline(ss, cell, ',');
        ex.timestamp_min = std::stoll(cell);
        for (std::size_t i = 0; i < n_features; ++i) {
            std::getline(ss, cell, ',');
            ex.features.push_back(std::stod(cell));
        }
        std::getline(ss, cell, ',');
        ex.energy_target_kw = std::stod(cell);
        for (std::size_t i = 0; i < n_targets; ++i) {
            std::getline(ss, cell, ',');
            ex.constraint_targets.push_back(std::stod(cell));
        }
        out.push_back(std::move(ex));
    }
    return out;
}

namespace {

// Keeps only names that exist in this config (so masks degrade gracefully on
// reduced test configs).
std::vector<std::string> present(const FacilityConfig& cfg, std::vector<std::string> names) {
    const auto all = feature_names(cfg);
    std::vector<std::string> out;
    for (auto& n : names)
        if (std::find(all.begin(), all.end(), n) != all.end()) out.push_back(std::move(n));
    return out;
}

} // namespace

std::vector<FeatureMask> default_masks(const FacilityConfig& cfg) {
    namespace sn = sensor_names;
    namespace an = action_names;
    std::vector<FeatureMask> masks;

    FeatureMask energy;
    energy.tower_name = "energy";
    energy.features = cfg.action_names; // all action dims, always
    for (const char* s : {sn::kWetBulb, sn::kLoad})
        if (cfg.sensor_index(s) >= 0) energy.features.push_back(s);
    energy.targets = {0};
    masks.push_back(std::move(energy));

    // Group observation constraints by their constrained sensor.
    std::vector<std::pair<std::string, std::vector<int>>> groups;
    for (std::size_t k = 0; k < cfg.observation_constraints.size(); ++k) {
        const auto& oc = cfg.observation_constraints[k];
        auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == oc.sensor_name; });
        if (it == groups.end())
            groups.push_back({oc.sensor_name, {static_cast<int>(k) + 1}});
        else
            it->second.push_back(static_cast<int>(k) + 1);
    }

    for (auto& [sensor, targets] : groups) {
        FeatureMask m;
        m.tower_name = sensor;
        m.targets = std::move(targets);
        if (sensor == sn::kSupplyTemp) {
            m.features = present(cfg, {sn::kSupplyTemp, sn::kLoad, sn::kWetBulb, an::kChillerTemp[0],
                                       an::kChillerTemp[1], an::kChillerTemp[2], an::kFcTemp, an::kMechCount,
                                       an::kFcCount, an::kChwDpSp, an::kChwPumpsCount});
        } else if (sensor == sn::kCondTemp) {
            m.features = present(cfg, {sn::kCondTemp, sn::kWetBulb, an::kTowerTemp, an::kTowersCount, an::kMechCount,
                                       an::kCwFlow, an::kFcTemp, an::kFcCount});
        } else if (sensor == sn::kChwDp) {
            m.features = present(cfg, {sn::kChwDp, an::kChwDpSp, an::kChwPumpsCount});
        } else if (sensor == sn::kCondFlow) {
            m.features = present(cfg, {sn::kCondFlow, sn::kCwPumpsRunning, an::kCwFlow, an::kCwPumpsCount});
        } else {
            m.features = present(cfg, {sensor, sn::kLoad, sn::kWetBulb});
            for (const auto& a : cfg.action_names) m.features.push_back(a);
        }
        masks.push_back(std::move(m));
    }
    return masks;
}

std::vector<FeatureMask> load_masks(const std::string& config_text, const FacilityConfig& cfg) {
    YAML::Node root = YAML::Load(config_text);
    const YAML::Node node = root["masks"];
    if (!node) return default_masks(cfg);
    if (!node.IsSequence()) throw ConfigError("'masks' must be a list");
    std::vector<FeatureMask> masks;
    for (const auto& n : node) {
        FeatureMask m;
        m.tower_name = n["tower"].as<std::string>();
        for (const auto& f : n["features"]) m.features.push_back(f.as<std::string>());
        for (const auto& t : n["targets"]) {
            const std::string name = t.as<std::string>();
            if (name == "energy") {
                m.targets.push_back(0);
                continue;
            }
            bool found = false;
            for (std::size_t k = 0; k < cfg.observation_constraints.size(); ++k) {
                if (cfg.observation_constraints[k].id == name) {
                    m.targets.push_back(static_cast<int>(k) + 1);
                    found = true;
                    break;
                }
            }
            if (!found) throw ConfigError("masks: unknown target '" + name + "'");
        }
        masks.push_back(std::move(m));
    }
    return masks;
}

} // namespace chillerlab
