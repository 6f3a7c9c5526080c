#include "chillerlab/facility_config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace chillerlab {

std::string_view to_string(SensorUnit u) {
    switch (u) {
    case SensorUnit::DegF: return "degF";
    case SensorUnit::Tons: return "tons";
    case SensorUnit::Kw: return "kW";
    case SensorUnit::Gpm: return "gpm";
    case SensorUnit::Psid: return "psid";
    case SensorUnit::Count: return "count";
    case SensorUnit::Boolean: return "boolean";
    }
    return "?";
}

SensorUnit sensor_unit_from_string(std::string_view s) {
    if (s == "degF") return SensorUnit::DegF;
    if (s == "tons") return SensorUnit::Tons;
    if (s == "kW") return SensorUnit::Kw;
    if (s == "gpm") return SensorUnit::Gpm;
    if (s == "psid") return SensorUnit::Psid;
    if (s == "count") return SensorUnit::Count;
    if (s == "boolean") return SensorUnit::Boolean;
    throw ConfigError("unknown sensor unit '" + std::string(s) + "'");
}

std::string_view to_string(ModeName m) {
    return m == ModeName::Mechanical ? "mechanical" : "free_cooling";
}

std::size_t ActionDimSpec::grid_size() const {
    if (kind == ActionKind::Discrete) return values.size();
    return static_cast<std::size_t>(std::floor((high - low) / step_size + 1e-9)) + 1;
}

std::vector<double> ActionDimSpec::allowed_values() const {
    if (kind == ActionKind::Discrete) return values;
    std::vector<double> out;
    const std::size_t n = grid_size();
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(low + static_cast<double>(i) * step_size);
    return out;
}

double ActionDimSpec::snap(double v) const {
    if (kind == ActionKind::Discrete) {
        double best = values.front();
        double best_d = std::abs(v - best);
        for (double w : values) {
            const double d = std::abs(v - w);
            if (d < best_d) {
                best = w;
                best_d = d;
            }
        }
        return best;
    }
    const double n_max = std::floor((high - low) / step_size + 1e-9);
    double n = std::round((v - low) / step_size);
    n = std::clamp(n, 0.0, n_max);
    return low + n * step_size;
}

bool ActionDimSpec::on_grid(double v, double tol) const {
    return std::abs(v - snap(v)) <= tol * std::max(1.0, std::abs(v));
}

bool ModeSpec::action_active(std::string_view dim) const {
    return std::find(active_action_dims.begin(), active_action_dims.end(), dim) != active_action_dims.end();
}

bool ModeSpec::constraint_active(std::string_view id) const {
    return std::find(active_constraints.begin(), active_constraints.end(), id) != active_constraints.end();
}

int FacilityConfig::sensor_index(std::string_view name) const {
    for (std::size_t i = 0; i < sensors.size(); ++i)
        if (sensors[i].name == name) return static_cast<int>(i);
    return -1;
}

int FacilityConfig::action_index(std::string_view name) const {
    for (std::size_t i = 0; i < action_dims.size(); ++i)
        if (action_dims[i].name == name) return static_cast<int>(i);
    return -1;
}

const ModeSpec* FacilityConfig::find_mode(ModeName name) const {
    for (const auto& m : modes)
        if (m.name == name) return &m;
    return nullptr;
}

const ModeSpec& FacilityConfig::mode_or_throw(std::string_view name) const {
    for (const auto& m : modes)
        if (to_string(m.name) == name) return m;
    throw ConfigError("unknown mode '" + std::string(name) + "'");
}

IdentifierScope FacilityConfig::scope() const {
    return IdentifierScope{sensor_names, action_names};
}

bool ConstraintReport::pass() const {
    if (!off_grid.empty()) return false;
    for (const auto& c : constraints)
        if (!c.passed) return false;
    return true;
}

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ConfigError(msg); }

double require_double(const YAML::Node& n, const std::string& field) {
    if (!n || !n.IsScalar()) fail("missing or non-scalar field '" + field + "'");
    try {
        return n.as<double>();
    } catch (const YAML::Exception&) {
        fail("field '" + field + "' is not a number");
    }
}

std::string require_string(const YAML::Node& n, const std::string& field) {
    if (!n || !n.IsScalar()) fail("missing or non-scalar field '" + field + "'");
    return n.as<std::string>();
}

// Splits "lhs <= rhs" / "lhs >= rhs" into its three parts.
ActionConstraint parse_inequality(const std::string& id, const std::string& text, const IdentifierScope& scope) {
    auto le = text.find("<=");
    auto ge = text.find(">=");
    if ((le == std::string::npos) == (ge == std::string::npos))
        fail("action constraint '" + id + "': expected exactly one '<=' or '>=' in \"" + text + "\"");
    const auto pos = le != std::string::npos ? le : ge;
    ActionConstraint ac;
    ac.id = id;
    ac.cmp = le != std::string::npos ? Comparator::Le : Comparator::Ge;
    ac.lhs = parse_expression(text.substr(0, pos), scope);
    ac.rhs = parse_expression(text.substr(pos + 2), scope);
    return ac;
}

} // namespace

FacilityConfig parse_config(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        fail("syntax error at line " + std::to_string(e.mark.line + 1) + ", column " +
             std::to_string(e.mark.column + 1) + ": " + e.msg);
    }
    if (!root.IsMap()) fail("configuration document must be a key/value map");

    FacilityConfig cfg;

    const YAML::Node horizons = root["horizons"];
    if (horizons) {
        cfg.objective_horizon_minutes = static_cast<int>(require_double(horizons["objective_minutes"], "horizons.objective_minutes"));
        cfg.constraint_horizon_minutes = static_cast<int>(require_double(horizons["constraint_minutes"], "horizons.constraint_minutes"));
    }
    if (cfg.objective_horizon_minutes <= 0 || cfg.objective_horizon_minutes % kStepMinutes != 0)
        fail("horizons.objective_minutes must be a positive multiple of 5");
    if (cfg.constraint_horizon_minutes <= 0 || cfg.constraint_horizon_minutes % kStepMinutes != 0)
        fail("horizons.constraint_minutes must be a positive multiple of 5");

    const YAML::Node sensors = root["sensors"];
    if (!sensors || !sensors.IsSequence()) fail("missing 'sensors' list");
    std::set<std::string> seen_names;
    for (const auto& n : sensors) {
        SensorSpec s;
        s.name = require_string(n["name"], "sensors[].name");
        s.unit = sensor_unit_from_string(require_string(n["unit"], "sensors[].unit"));
        const YAML::Node range = n["range"];
        if (!range || !range.IsSequence() || range.size() != 2)
            fail("sensor '" + s.name + "': 'range' must be [low, high]");
        s.plausible_low = range[0].as<double>();
        s.plausible_high = range[1].as<double>();
        if (!(s.plausible_low < s.plausible_high))
            fail("sensor '" + s.name + "': range low must be < high");
        if (!seen_names.insert(s.name).second) fail("duplicate identifier '" + s.name + "'");
        cfg.sensors.push_back(std::move(s));
    }

    const YAML::Node actions = root["actions"];
    if (!actions || !actions.IsSequence()) fail("missing 'actions' list");
    for (const auto& n : actions) {
        ActionDimSpec d;
        d.name = require_string(n["name"], "actions[].name");
        const std::string kind = require_string(n["kind"], "actions[].kind");
        if (!seen_names.insert(d.name).second) fail("duplicate identifier '" + d.name + "'");
        if (kind == "continuous") {
            d.kind = ActionKind::Continuous;
            const YAML::Node range = n["range"];
            if (!range || !range.IsSequence() || range.size() != 2)
                fail("action '" + d.name + "': 'range' must be [low, high]");
            d.low = range[0].as<double>();
            d.high = range[1].as<double>();
            d.step_size = require_double(n["step"], "actions[].step");
            if (!(d.low < d.high)) fail("action '" + d.name + "': range low must be < high");
            if (!(d.step_size > 0.0)) fail("action '" + d.name + "': step must be positive");
            if (d.step_size > d.high - d.low) fail("action '" + d.name + "': step exceeds range width");
        } else if (kind == "discrete") {
            d.kind = ActionKind::Discrete;
            const YAML::Node values = n["values"];
            if (!values || !values.IsSequence() || values.size() == 0)
                fail("action '" + d.name + "': 'values' must be a nonempty list");
            for (const auto& v : values) d.values.push_back(v.as<double>());
        } else {
            fail("action '" + d.name + "': kind must be 'continuous' or 'discrete'");
        }
        if (n["neutral"]) d.neutral = n["neutral"].as<double>();
        cfg.action_dims.push_back(std::move(d));
    }

    cfg.sensor_names.reserve(cfg.sensors.size());
    for (const auto& s : cfg.sensors) cfg.sensor_names.push_back(s.name);
    cfg.action_names.reserve(cfg.action_dims.size());
    for (const auto& d : cfg.action_dims) cfg.action_names.push_back(d.name);
    const IdentifierScope scope = cfg.scope();

    std::set<std::string> constraint_ids;
    const YAML::Node acs = root["action_constraints"];
    if (acs) {
        if (!acs.IsSequence()) fail("'action_constraints' must be a list");
        int auto_id = 0;
        for (const auto& n : acs) {
            std::string id = n["id"] ? n["id"].as<std::string>() : "ac" + std::to_string(auto_id);
            ++auto_id;
            ActionConstraint ac = parse_inequality(id, require_string(n["expr"], "action_constraints[].expr"), scope);
            if (!contains_action_ref(*ac.lhs) && !contains_action_ref(*ac.rhs))
                fail("action constraint '" + id + "': no action ref appears in lhs or rhs");
            if (!constraint_ids.insert(id).second) fail("duplicate constraint id '" + id + "'");
            cfg.action_constraints.push_back(std::move(ac));
        }
    }

    const YAML::Node ocs = root["observation_constraints"];
    if (ocs) {
        if (!ocs.IsSequence()) fail("'observation_constraints' must be a list");
        int auto_id = 0;
        for (const auto& n : ocs) {
            ObservationConstraint oc;
            oc.id = n["id"] ? n["id"].as<std::string>() : "oc" + std::to_string(auto_id);
            ++auto_id;
            oc.sensor_name = require_string(n["sensor"], "observation_constraints[].sensor");
            oc.sensor_index = cfg.sensor_index(oc.sensor_name);
            if (oc.sensor_index < 0)
                fail("observation constraint '" + oc.id + "': unresolved sensor '" + oc.sensor_name + "'");
            const std::string dir = require_string(n["direction"], "observation_constraints[].direction");
            if (dir == "max_le")
                oc.direction = BoundDirection::MaxLe;
            else if (dir == "min_ge")
                oc.direction = BoundDirection::MinGe;
            else
                fail("observation constraint '" + oc.id + "': direction must be 'max_le' or 'min_ge'");
            oc.bound = parse_expression(require_string(n["bound"], "observation_constraints[].bound"), scope);
            if (contains_action_ref(*oc.bound))
                fail("observation constraint '" + oc.id + "': bound contains no action refs — found one");
            if (n["tolerance"]) oc.tolerance = n["tolerance"].as<double>();
            if (oc.tolerance < 0.0) fail("observation constraint '" + oc.id + "': tolerance must be >= 0");
            if (!constraint_ids.insert(oc.id).second) fail("duplicate constraint id '" + oc.id + "'");
            cfg.observation_constraints.push_back(std::move(oc));
        }
    }

    const YAML::Node modes = root["modes"];
    if (modes) {
        if (!modes.IsSequence()) fail("'modes' must be a list");
        for (const auto& n : modes) {
            ModeSpec m;
            const std::string name = require_string(n["name"], "modes[].name");
            if (name == "mechanical")
                m.name = ModeName::Mechanical;
            else if (name == "free_cooling")
                m.name = ModeName::FreeCooling;
            else
                fail("mode '" + name + "': name must be 'mechanical' or 'free_cooling'");
            const YAML::Node dims = n["active_actions"];
            if (dims) {
                for (const auto& d : dims) {
                    const std::string dn = d.as<std::string>();
                    if (cfg.action_index(dn) < 0) fail("mode '" + name + "': unknown action dim '" + dn + "'");
                    m.active_action_dims.push_back(dn);
                }
            } else {
                m.active_action_dims = cfg.action_names;
            }
            const YAML::Node cons = n["active_constraints"];
            if (cons) {
                for (const auto& c : cons) {
                    const std::string cid = c.as<std::string>();
                    if (!constraint_ids.count(cid)) fail("mode '" + name + "': unknown constraint id '" + cid + "'");
                    m.active_constraints.push_back(cid);
                }
            } else {
                m.active_constraints.assign(constraint_ids.begin(), constraint_ids.end());
            }
            cfg.modes.push_back(std::move(m));
        }
    }

    return cfg;
}

FacilityConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string print_config(const FacilityConfig& cfg) {
    YAML::Emitter out;
    out << YAML::BeginMap;
    out << YAML::Key << "horizons" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "objective_minutes" << YAML::Value << cfg.objective_horizon_minutes;
    out << YAML::Key << "constraint_minutes" << YAML::Value << cfg.constraint_horizon_minutes;
    out << YAML::EndMap;

    out << YAML::Key << "sensors" << YAML::Value << YAML::BeginSeq;
    for (const auto& s : cfg.sensors) {
        out << YAML::BeginMap;
        out << YAML::Key << "name" << YAML::Value << s.name;
        out << YAML::Key << "unit" << YAML::Value << std::string(to_string(s.unit));
        out << YAML::Key << "range" << YAML::Value << YAML::Flow << YAML::BeginSeq << s.plausible_low
            << s.plausible_high << YAML::EndSeq;
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;

    out << YAML::Key << "actions" << YAML::Value << YAML::BeginSeq;
    for (const auto& d : cfg.action_dims) {
        out << YAML::BeginMap;
        out << YAML::Key << "name" << YAML::Value << d.name;
        if (d.kind == ActionKind::Continuous) {
            out << YAML::Key << "kind" << YAML::Value << "continuous";
            out << YAML::Key << "range" << YAML::Value << YAML::Flow << YAML::BeginSeq << d.low << d.high
                << YAML::EndSeq;
            out << YAML::Key << "step" << YAML::Value << d.step_size;
        } else {
            out << YAML::Key << "kind" << YAML::Value << "discrete";
            out << YAML::Key << "values" << YAML::Value << YAML::Flow << YAML::BeginSeq;
            for (double v : d.values) out << v;
            out << YAML::EndSeq;
        }
        if (d.neutral) out << YAML::Key << "neutral" << YAML::Value << *d.neutral;
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;

    out << YAML::Key << "action_constraints" << YAML::Value << YAML::BeginSeq;
    for (const auto& c : cfg.action_constraints) {
        out << YAML::BeginMap;
        out << YAML::Key << "id" << YAML::Value << c.id;
        const std::string cmp = c.cmp == Comparator::Le ? " <= " : " >= ";
        out << YAML::Key << "expr" << YAML::Value << (to_text(*c.lhs) + cmp + to_text(*c.rhs));
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;

    out << YAML::Key << "observation_constraints" << YAML::Value << YAML::BeginSeq;
    for (const auto& c : cfg.observation_constraints) {
        out << YAML::BeginMap;
        out << YAML::Key << "id" << YAML::Value << c.id;
        out << YAML::Key << "sensor" << YAML::Value << c.sensor_name;
        out << YAML::Key << "direction" << YAML::Value << (c.direction == BoundDirection::MaxLe ? "max_le" : "min_ge");
        out << YAML::Key << "bound" << YAML::Value << to_text(*c.bound);
        out << YAML::Key << "tolerance" << YAML::Value << c.tolerance;
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;

    out << YAML::Key << "modes" << YAML::Value << YAML::BeginSeq;
    for (const auto& m : cfg.modes) {
        out << YAML::BeginMap;
        out << YAML::Key << "name" << YAML::Value << std::string(to_string(m.name));
        out << YAML::Key << "active_actions" << YAML::Value << YAML::Flow << m.active_action_dims;
        out << YAML::Key << "active_constraints" << YAML::Value << YAML::Flow << m.active_constraints;
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

ConstraintReport check_action(const FacilityConfig& cfg, const PlantState& state, const ActionVector& action,
                              const ModeSpec* mode) {
    if (action.values.size() != cfg.action_dims.size())
        throw EvalError("action has " + std::to_string(action.values.size()) + " values, config declares " +
                        std::to_string(cfg.action_dims.size()) + " dims");
    ConstraintReport report;

    for (std::size_t i = 0; i < cfg.action_dims.size(); ++i) {
        const auto& d = cfg.action_dims[i];
        if (!d.on_grid(action.values[i])) report.off_grid.push_back({d.name, action.values[i]});
    }

    // Per-dim interval scan for jointly infeasible bound pairs, using bounds
    // evaluated under this state.
    struct Interval {
        double lower = -1e300, upper = 1e300;
        std::string lower_id, upper_id;
    };
    std::map<int, Interval> intervals;

    for (const auto& c : cfg.action_constraints) {
        if (mode && !mode->constraint_active(c.id)) continue;
        const double lhs = evaluate(*c.lhs, state.sensors, action.values);
        const double rhs = evaluate(*c.rhs, state.sensors, action.values);
        ConstraintCheckResult r;
        r.id = c.id;
        r.margin = c.cmp == Comparator::Le ? rhs - lhs : lhs - rhs;
        r.passed = r.margin >= 0.0;
        report.constraints.push_back(r);

        // Canonical single-dim bound: bare action ref on one side, action-free
        // expression on the other.
        const Expression* ref = nullptr;
        const Expression* other = nullptr;
        bool ref_on_lhs = true;
        if (c.lhs->op == ExprOp::ActionRef && !contains_action_ref(*c.rhs)) {
            ref = c.lhs.get();
            other = c.rhs.get();
        } else if (c.rhs->op == ExprOp::ActionRef && !contains_action_ref(*c.lhs)) {
            ref = c.rhs.get();
            other = c.lhs.get();
            ref_on_lhs = false;
        }
        if (!ref) continue;
        const double b = evaluate(*other, state.sensors, action.values);
        // dim <= b / dim >= b after normalizing for which side the ref is on
        const bool is_upper = (c.cmp == Comparator::Le) == ref_on_lhs;
        auto& iv = intervals[ref->index];
        if (is_upper && b < iv.upper) {
            iv.upper = b;
            iv.upper_id = c.id;
        } else if (!is_upper && b > iv.lower) {
            iv.lower = b;
            iv.lower_id = c.id;
        }
    }

    for (const auto& [dim_idx, iv] : intervals) {
        if (iv.lower > iv.upper + 1e-12)
            report.infeasible_pairs.push_back(
                {cfg.action_dims[static_cast<std::size_t>(dim_idx)].name, iv.lower_id, iv.upper_id, iv.lower, iv.upper});
    }
    return report;
}

double evaluate_bound(const FacilityConfig& cfg, const PlantState& state, const ObservationConstraint& oc) {
    (void)cfg;
    static const std::vector<double> no_actions;
    return evaluate(*oc.bound, state.sensors, no_actions);
}

ActionVector mask_for_mode(const FacilityConfig& cfg, const ModeSpec& mode, const ActionVector& action,
                           const ActionVector* prev_action) {
    if (action.values.size() != cfg.action_dims.size()) throw EvalError("action size mismatch in mask_for_mode");
    ActionVector out = action;
    for (std::size_t i = 0; i < cfg.action_dims.size(); ++i) {
        const auto& d = cfg.action_dims[i];
        if (mode.action_active(d.name)) continue;
        if (d.neutral)
            out.values[i] = *d.neutral;
        else if (prev_action)
            out.values[i] = prev_action->values[i];
        // no neutral and no previous value: hold the input value
    }
    return out;
}

} // namespace chillerlab
