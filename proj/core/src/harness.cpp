#include "chillerlab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace chillerlab {

BucketSpec BucketSpec::defaults() {
    BucketSpec b;
    for (double e = 40.0; e <= 70.0; e += 5.0) b.wet_bulb_edges_f.push_back(e);
    for (double e = 200.0; e <= 1400.0; e += 200.0) b.load_edges_tons.push_back(e);
    return b;
}

AbParams load_ab_params(const std::string& config_text) {
    AbParams p;
    YAML::Node root = YAML::Load(config_text);
    const YAML::Node h = root["harness"];
    if (!h) return p;
    if (!h.IsMap()) throw ConfigError("'harness' must be a map");

    if (h["days"]) p.schedule.days = h["days"].as<int>();
    if (h["exclusion_minutes"]) p.schedule.exclusion_minutes = h["exclusion_minutes"].as<int>();
    if (h["ai_first"]) p.schedule.ai_first = h["ai_first"].as<bool>();
    if (h["warmup_soo_days"]) p.warmup_soo_days = h["warmup_soo_days"].as<int>();
    if (h["warmup_ai_days"]) p.warmup_ai_days = h["warmup_ai_days"].as<int>();
    if (h["seed"]) p.seed = h["seed"].as<std::uint64_t>();

    const YAML::Node pol = h["policy"];
    if (pol) {
        if (pol["epsilon"]) p.policy.epsilon = pol["epsilon"].as<double>();
        if (pol["alpha"]) p.policy.alpha = pol["alpha"].as<double>();
        if (pol["beta"]) p.policy.beta = pol["beta"].as<double>();
        if (pol["candidate_cap"]) p.policy.candidate_cap = pol["candidate_cap"].as<int>();
        if (pol["samples_per_direction"]) p.policy.samples_per_direction = pol["samples_per_direction"].as<int>();
        if (pol["seed"]) p.policy.seed = pol["seed"].as<std::uint64_t>();
    }
    const YAML::Node heur = h["heuristic"];
    if (heur) {
        if (heur["breakpoints_tons"]) {
            p.heuristic.breakpoints_tons.clear();
            for (const auto& v : heur["breakpoints_tons"]) p.heuristic.breakpoints_tons.push_back(v.as<double>());
        }
        if (heur["hysteresis_tons"]) p.heuristic.hysteresis_tons = heur["hysteresis_tons"].as<double>();
        if (heur["min_toggle_minutes"]) p.heuristic.min_toggle_minutes = heur["min_toggle_minutes"].as<double>();
        if (heur["fc_wet_bulb_on_f"]) p.heuristic.fc_wet_bulb_on_f = heur["fc_wet_bulb_on_f"].as<double>();
        if (heur["fc_wet_bulb_off_f"]) p.heuristic.fc_wet_bulb_off_f = heur["fc_wet_bulb_off_f"].as<double>();
        if (heur["control_counts"]) p.heuristic.control_counts = heur["control_counts"].as<bool>();
    }
    const YAML::Node tr = h["training"];
    if (tr) {
        if (tr["epochs"]) p.training.critic.epochs = tr["epochs"].as<int>();
        if (tr["batch_size"]) p.training.critic.batch_size = tr["batch_size"].as<int>();
        if (tr["ensemble_size"]) p.training.critic.ensemble_size = tr["ensemble_size"].as<int>();
        if (tr["units_per_layer"]) p.training.critic.units_per_layer = tr["units_per_layer"].as<int>();
        if (tr["learning_rate"]) p.training.critic.learning_rate = tr["learning_rate"].as<double>();
        if (tr["num_threads"]) p.training.critic.num_threads = tr["num_threads"].as<int>();
        if (tr["ai_only"]) p.training.ai_only = tr["ai_only"].as<bool>();
        if (tr["min_ai_rows"]) p.training.min_ai_rows = tr["min_ai_rows"].as<std::size_t>();
        if (tr["min_examples"]) p.training.min_examples = tr["min_examples"].as<std::size_t>();
    }
    return p;
}

AbResult run_ab(const FacilityConfig& cfg, const SimParams& sim_params, const SooRules& soo, const AbParams& params) {
    AbResult result;
    PlantSim sim(cfg, sim_params, params.seed);
    FaultInjector injector(cfg, sim_params.faults);
    const PlantLayout& layout = sim.layout();
    GuardState guard;
    ChillerHeuristicState heur;
    Rng policy_rng(Rng::hash_mix(params.seed ^ Rng::hash_mix(params.policy.seed ^ 0x706f6c69637932ULL)));

    const std::vector<FeatureMask> masks = params.masks.empty() ? default_masks(cfg) : params.masks;

    PlantState state = sim.initial_state(0);
    ActionVector prev_action = soo_policy(soo, cfg, state);
    std::optional<EnsembleModel> model;

    const int total_days = params.warmup_soo_days + params.warmup_ai_days + params.schedule.days;
    const int ab_start_day = params.warmup_soo_days + params.warmup_ai_days;

    std::int64_t last_handover = -1000000;
    ControllerId last_controller = ControllerId::Soo;

    for (int day = 0; day < total_days; ++day) {
        bool ai_day;
        if (day < params.warmup_soo_days)
            ai_day = false;
        else if (day < ab_start_day)
            ai_day = true;
        else {
            const int ab_day = day - ab_start_day;
            ai_day = params.schedule.ai_first ? (ab_day % 2 == 0) : (ab_day % 2 == 1);
        }

        if (ai_day) {
            guard.re_enable();
            // Daily retraining hook: from scratch, on everything collected so far.
            auto [cleaned, report] = clean(result.full_log, cfg, params.training.cleaning);
            (void)report;
            std::size_t ai_rows = 0;
            for (const auto& r : cleaned.rows)
                if (r.controller == ControllerId::Ai) ++ai_rows;
            const bool use_ai_only = params.training.ai_only && ai_rows >= params.training.min_ai_rows;
            const Trajectory training_traj = use_ai_only ? filter_ai_only(cleaned) : cleaned;
            const std::vector<TrainingExample> examples = build_targets(training_traj, cfg);
            if (examples.size() >= params.training.min_examples) {
                model = train(examples, masks, params.training.critic, cfg);
                ++result.retrains;
            }
            // Hand the high-level agent the live equipment counts; syncing is
            // not a toggle.
            const int mech = static_cast<int>(std::lround(state.sensors[static_cast<std::size_t>(layout.chillers_running)]));
            const int fc = static_cast<int>(std::lround(state.sensors[static_cast<std::size_t>(layout.fc_running)]));
            heur.count = std::max(1, mech + fc);
            heur.mode = state.sensors[static_cast<std::size_t>(layout.free_cooling)] > 0.5 ? ModeName::FreeCooling
                                                                                           : ModeName::Mechanical;
        }

        for (int step = 0; step < kStepsPerDay; ++step) {
            const PlantState observed = injector.observe(state);
            ActionVector actual;
            ControllerId controller;
            GuardOutcome outcome = GuardOutcome::None;

            if (ai_day && guard.ai_enabled && model.has_value()) {
                ActResult ar = act(observed, prev_action, *model, cfg, params.policy, params.heuristic, heur, layout,
                                   policy_rng);
                result.decisions.push_back(ar.record);
                GuardDecision gd = bms_guard(cfg, observed, ar.action, guard);
                if (gd.kind == GuardDecision::Kind::KickOut) {
                    ++result.kick_outs;
                    outcome = GuardOutcome::KickOut;
                    actual = soo_policy(soo, cfg, observed);
                    controller = ControllerId::Soo;
                } else {
                    outcome = gd.kind == GuardDecision::Kind::Modify ? GuardOutcome::Modify : GuardOutcome::Accept;
                    actual = gd.action;
                    controller = ControllerId::Ai;
                }
            } else {
                actual = soo_policy(soo, cfg, observed);
                controller = ControllerId::Soo;
            }

            if (controller != last_controller) {
                last_handover = state.timestamp_min;
                last_controller = controller;
            }
            const bool excluded =
                state.timestamp_min - last_handover < static_cast<std::int64_t>(params.schedule.exclusion_minutes);

            PlantSim::StepResult sr = sim.step(state, actual);

            TrajectoryRow row;
            row.state = observed;
            row.action = actual;
            row.reward_kwh = sr.reward_kwh;
            row.controller = controller;
            row.guard = outcome;
            row.excluded = excluded;
            result.full_log.rows.push_back(row);
            if (day >= ab_start_day) result.log.rows.push_back(std::move(row));

            state = std::move(sr.next);
            prev_action = actual;
        }
    }
    result.final_model = std::move(model);
    return result;
}

namespace {

int bin_index(double v, const std::vector<double>& edges) {
    int b = 0;
    for (double e : edges) {
        if (v < e) break;
        ++b;
    }
    return b;
}

} // namespace

SavingsReport bucketed_savings(const Trajectory& log, const BucketSpec& buckets, const FacilityConfig& cfg) {
    const PlantLayout layout(cfg);
    struct HourAgg {
        double power_sum = 0.0, wb_sum = 0.0, load_sum = 0.0;
        int n = 0;
        ControllerId controller = ControllerId::Soo;
        bool mixed = false;
    };
    std::map<std::int64_t, HourAgg> hours;
    for (const auto& r : log.rows) {
        if (r.excluded) continue;
        auto& h = hours[r.state.timestamp_min / 60];
        if (h.n > 0 && h.controller != r.controller) h.mixed = true;
        h.controller = r.controller;
        h.power_sum += -r.reward_kwh * 12.0;
        h.wb_sum += r.state.sensors[static_cast<std::size_t>(layout.wet_bulb)];
        h.load_sum += r.state.sensors[static_cast<std::size_t>(layout.load)];
        ++h.n;
    }

    struct Cell {
        double kw_sum_ai = 0.0, kw_sum_soo = 0.0;
        int hours_ai = 0, hours_soo = 0;
    };
    std::map<std::pair<int, int>, Cell> cells;
    for (const auto& [hour, h] : hours) {
        if (h.n != kStepsPerHour || h.mixed) continue; // partial or mixed hours are dropped
        const double mean_kw = h.power_sum / h.n;
        const int wb_bin = bin_index(h.wb_sum / h.n, buckets.wet_bulb_edges_f);
        const int load_bin = bin_index(h.load_sum / h.n, buckets.load_edges_tons);
        Cell& c = cells[{wb_bin, load_bin}];
        if (h.controller == ControllerId::Ai) {
            c.kw_sum_ai += mean_kw;
            ++c.hours_ai;
        } else {
            c.kw_sum_soo += mean_kw;
            ++c.hours_soo;
        }
    }

    SavingsReport report;
    double weighted = 0.0;
    for (const auto& [key, c] : cells) {
        BucketRow row;
        row.wb_bin = key.first;
        row.load_bin = key.second;
        row.hours_ai = c.hours_ai;
        row.hours_soo = c.hours_soo;
        row.mean_kw_ai = c.hours_ai ? c.kw_sum_ai / c.hours_ai : 0.0;
        row.mean_kw_soo = c.hours_soo ? c.kw_sum_soo / c.hours_soo : 0.0;
        if (c.hours_ai > 0 && c.hours_soo > 0 && row.mean_kw_soo > 0.0) {
            row.savings = (row.mean_kw_soo - row.mean_kw_ai) / row.mean_kw_soo;
            const double w = row.hours_ai + row.hours_soo;
            weighted += w * row.savings;
            report.total_hours += w;
            report.buckets.push_back(row);
        } else {
            report.incomparable.push_back(row);
        }
    }
    if (report.buckets.empty()) throw std::runtime_error("no comparable conditions");
    report.overall_savings = weighted / report.total_hours;
    return report;
}

void write_bucket_csv(std::ostream& out, const SavingsReport& report) {
    out << "# bucket-table v1\n";
    out << "wb_bin,load_bin,hours_ai,hours_soo,mean_kw_ai,mean_kw_soo,savings,comparable\n";
    char buf[64];
    auto line = [&](const BucketRow& r, bool comparable) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%g,%g,%.6g,%.6g,%.6g,%d", r.wb_bin, r.load_bin, r.hours_ai,
                      r.hours_soo, r.mean_kw_ai, r.mean_kw_soo, r.savings, comparable ? 1 : 0);
        out << buf << "\n";
    };
    for (const auto& r : report.buckets) line(r, true);
    for (const auto& r : report.incomparable) line(r, false);
    std::snprintf(buf, sizeof(buf), "%.6g", report.overall_savings);
    out << "# overall_savings," << buf << "\n";
}

std::vector<ConstraintSatisfaction> constraint_report(const Trajectory& log, const FacilityConfig& cfg) {
    if (log.rows.empty()) throw std::invalid_argument("constraint_report: empty log");
    std::vector<ConstraintSatisfaction> out;
    for (const auto& oc : cfg.observation_constraints) {
        ConstraintSatisfaction cs;
        cs.id = oc.id;
        for (const auto& r : log.rows) {
            if (r.excluded) continue;
            const double v = r.state.sensors[static_cast<std::size_t>(oc.sensor_index)];
            if (PlantState::missing(v)) continue;
            const double u = evaluate_bound(cfg, r.state, oc);
            const bool ok = oc.direction == BoundDirection::MaxLe ? v <= u + oc.tolerance : v >= u - oc.tolerance;
            if (r.controller == ControllerId::Ai) {
                ++cs.n_ai;
                if (ok) ++cs.ok_ai;
            } else {
                ++cs.n_soo;
                if (ok) ++cs.ok_soo;
            }
        }
        out.push_back(cs);
    }
    return out;
}

std::vector<ModelUnitTest> load_unit_tests(const std::string& text, const FacilityConfig& cfg) {
    YAML::Node root = YAML::Load(text);
    const YAML::Node list = root["unit_tests"];
    if (!list || !list.IsSequence()) throw ConfigError("missing 'unit_tests' list");
    std::vector<ModelUnitTest> out;
    for (const auto& n : list) {
        ModelUnitTest t;
        t.relationship = n["relationship"].as<std::string>();
        t.head = n["head"] ? n["head"].as<std::string>() : "energy";
        t.action_dim = n["action"].as<std::string>();
        if (cfg.action_index(t.action_dim) < 0)
            throw ConfigError("unit test '" + t.relationship + "': unknown action '" + t.action_dim + "'");
        for (const auto& d : n["deltas"]) t.deltas.push_back(d.as<double>());
        for (const auto& d : n["expected"]) t.expected_deltas.push_back(d.as<double>());
        if (t.deltas.size() != t.expected_deltas.size())
            throw ConfigError("unit test '" + t.relationship + "': deltas and expected lengths differ");
        t.norm = n["norm"].as<double>();
        if (!(t.norm > 0.0)) throw ConfigError("unit test '" + t.relationship + "': norm must be > 0");

        t.anchor_state.sensors.assign(cfg.sensors.size(), 0.0);
        for (const auto& kv : n["anchor"]["sensors"]) {
            const std::string name = kv.first.as<std::string>();
            const int idx = cfg.sensor_index(name);
            if (idx < 0) throw ConfigError("unit test '" + t.relationship + "': unknown sensor '" + name + "'");
            t.anchor_state.sensors[static_cast<std::size_t>(idx)] = kv.second.as<double>();
        }
        t.anchor_action.values.assign(cfg.action_dims.size(), 0.0);
        for (const auto& kv : n["anchor"]["actions"]) {
            const std::string name = kv.first.as<std::string>();
            const int idx = cfg.action_index(name);
            if (idx < 0) throw ConfigError("unit test '" + t.relationship + "': unknown action '" + name + "'");
            t.anchor_action.values[static_cast<std::size_t>(idx)] = kv.second.as<double>();
        }
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<ModelUnitTest> load_unit_tests_file(const std::string& path, const FacilityConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_unit_tests(ss.str(), cfg);
}

std::vector<UnitTestResult> run_unit_tests(const EnsembleModel& model, const std::vector<ModelUnitTest>& tests,
                                           const FacilityConfig& cfg) {
    std::vector<UnitTestResult> out;
    for (const auto& t : tests) {
        int head_index = -1;
        if (t.head == "energy") {
            head_index = 0;
        } else {
            for (std::size_t k = 0; k < cfg.observation_constraints.size(); ++k)
                if (cfg.observation_constraints[k].id == t.head) head_index = static_cast<int>(k) + 1;
            if (head_index < 0) throw ConfigError("unit test '" + t.relationship + "': unknown head '" + t.head + "'");
        }
        const auto deltas =
            sensitivity(model, cfg, t.anchor_state, t.anchor_action, cfg.action_index(t.action_dim), t.deltas);
        UnitTestResult r;
        r.relationship = t.relationship;
        r.expected_deltas = t.expected_deltas;
        double err = 0.0;
        for (std::size_t i = 0; i < deltas.size(); ++i) {
            const double pred = deltas[i][static_cast<std::size_t>(head_index)];
            r.predicted_deltas.push_back(pred);
            err += std::abs(pred - t.expected_deltas[i]) / t.norm;
        }
        r.normalized_error = err / static_cast<double>(deltas.size());
        out.push_back(std::move(r));
    }
    return out;
}

double aggregated_metric(const std::vector<UnitTestResult>& results) {
    if (results.empty()) throw std::invalid_argument("aggregated_metric: no results");
    std::map<std::string, std::pair<double, int>> groups;
    for (const auto& r : results) {
        auto& g = groups[r.relationship];
        g.first += r.normalized_error;
        g.second += 1;
    }
    double total = 0.0;
    for (const auto& [name, g] : groups) total += g.first / g.second;
    return total / static_cast<double>(groups.size());
}

} // namespace chillerlab
