#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "chillerlab/expression.hpp"
#include "chillerlab/facility_config.hpp"
#include "chillerlab/rng.hpp"
#include "test_util.hpp"

using namespace chillerlab;

namespace {

constexpr const char* kMinimalConfig = R"(
sensors:
  - {name: temp, unit: degF, range: [0, 100]}
actions:
  - {name: setpoint, kind: continuous, range: [40, 52], step: 0.5}
)";

FacilityConfig minimal() { return parse_config(kMinimalConfig); }

PlantState one_sensor_state(double v) {
    PlantState st;
    st.sensors = {v};
    return st;
}

} // namespace

TEST_CASE("minimal config: continuous dim grid has 25 allowed values") {
    FacilityConfig cfg = minimal();
    REQUIRE(cfg.action_dims.size() == 1);
    const auto values = cfg.action_dims[0].allowed_values();
    CHECK(values.size() == 25); // (52-40)/0.5 + 1
    CHECK(values.front() == doctest::Approx(40.0));
    CHECK(values.back() == doctest::Approx(52.0));
    CHECK(cfg.action_dims[0].grid_size() == 25);
}

TEST_CASE("reference config mirrors the published 12-dim action space") {
    const FacilityConfig& cfg = test_util::reference_config();
    REQUIRE(cfg.action_dims.size() == 12);
    auto dim = [&](const char* name) -> const ActionDimSpec& {
        const int i = cfg.action_index(name);
        REQUIRE(i >= 0);
        return cfg.action_dims[static_cast<std::size_t>(i)];
    };
    for (const char* n : {"chiller_1_temp", "chiller_2_temp", "chiller_3_temp"}) {
        CHECK(dim(n).low == 40.0);
        CHECK(dim(n).high == 52.0);
    }
    CHECK(dim("mech_chillers_count").values == std::vector<double>{0, 1, 2, 3});
    CHECK(dim("towers_count").values == std::vector<double>{1, 2, 3});
    CHECK(dim("tower_temp").low == 40.0);
    CHECK(dim("tower_temp").high == 100.0);
    CHECK(dim("cw_pump_flow").low == 700.0);
    CHECK(dim("cw_pump_flow").high == 5400.0);
    CHECK(dim("cw_pumps_count").values == std::vector<double>{1, 2, 3});
    CHECK(dim("chw_differential_pressure_sp").low == 12.5);
    CHECK(dim("chw_differential_pressure_sp").high == 20.0);
    CHECK(dim("chw_pumps_count").values == std::vector<double>{1, 2, 3});
    CHECK(dim("fc_chillers_count").values == std::vector<double>{0, 1, 2, 3});
    CHECK(dim("fc_chw_temp").low == 42.0);
    CHECK(dim("fc_chw_temp").high == 52.0);
}

TEST_CASE("observation constraint bound may not reference actions") {
    const std::string bad = R"(
sensors:
  - {name: temp, unit: degF, range: [0, 100]}
actions:
  - {name: setpoint, kind: continuous, range: [40, 52], step: 0.5}
observation_constraints:
  - {id: oc, sensor: temp, direction: max_le, bound: "setpoint + 1"}
)";
    CHECK_THROWS_WITH_AS(parse_config(bad), doctest::Contains("bound contains no action refs"), ConfigError);
}

TEST_CASE("config parse errors name the offending field") {
    CHECK_THROWS_AS(parse_config("sensors: 3"), ConfigError);
    const std::string bad_range = R"(
sensors:
  - {name: t, unit: degF, range: [10, 5]}
actions:
  - {name: a, kind: continuous, range: [0, 1], step: 0.5}
)";
    CHECK_THROWS_WITH_AS(parse_config(bad_range), doctest::Contains("range low must be < high"), ConfigError);
    const std::string dup = R"(
sensors:
  - {name: t, unit: degF, range: [0, 5]}
actions:
  - {name: t, kind: discrete, values: [1]}
)";
    CHECK_THROWS_WITH_AS(parse_config(dup), doctest::Contains("duplicate identifier"), ConfigError);
    const std::string bad_step = R"(
sensors:
  - {name: t, unit: degF, range: [0, 5]}
actions:
  - {name: a, kind: continuous, range: [0, 1], step: 2}
)";
    CHECK_THROWS_WITH_AS(parse_config(bad_step), doctest::Contains("step exceeds range width"), ConfigError);
    const std::string bad_horizon = R"(
horizons: {objective_minutes: 7, constraint_minutes: 15}
sensors:
  - {name: t, unit: degF, range: [0, 5]}
actions:
  - {name: a, kind: discrete, values: [1]}
)";
    CHECK_THROWS_WITH_AS(parse_config(bad_horizon), doctest::Contains("positive multiple of 5"), ConfigError);
}

TEST_CASE("unresolved references are rejected with the identifier named") {
    const std::string bad = R"(
sensors:
  - {name: temp, unit: degF, range: [0, 100]}
actions:
  - {name: setpoint, kind: continuous, range: [40, 52], step: 0.5}
action_constraints:
  - {id: c, expr: "setpoint <= mystery"}
)";
    CHECK_THROWS_WITH_AS(parse_config(bad), doctest::Contains("unresolved reference 'mystery'"), ConfigError);
}

TEST_CASE("check_action: boundary value passes with margin zero") {
    const std::string text = R"(
sensors:
  - {name: temp, unit: degF, range: [0, 100]}
actions:
  - {name: chiller_temp, kind: continuous, range: [40, 52], step: 0.5}
action_constraints:
  - {id: cap, expr: "chiller_temp <= 42"}
)";
    FacilityConfig cfg = parse_config(text);
    ActionVector a{{42.0}};
    const ConstraintReport report = check_action(cfg, one_sensor_state(70.0), a);
    CHECK(report.pass());
    REQUIRE(report.constraints.size() == 1);
    CHECK(report.constraints[0].margin == doctest::Approx(0.0));
}

TEST_CASE("check_action: off-grid value fails") {
    FacilityConfig cfg = minimal();
    ActionVector a{{42.3}}; // not 40 + n*0.5
    const ConstraintReport report = check_action(cfg, one_sensor_state(0.0), a);
    CHECK_FALSE(report.pass());
    REQUIRE(report.off_grid.size() == 1);
    CHECK(report.off_grid[0].dim == "setpoint");
}

TEST_CASE("check_action: contradictory bound pair is reported infeasible") {
    const std::string text = R"(
sensors:
  - {name: temp, unit: degF, range: [0, 100]}
actions:
  - {name: a1, kind: continuous, range: [40, 52], step: 0.5}
action_constraints:
  - {id: upper, expr: "a1 <= 44"}
  - {id: lower, expr: "a1 >= 46"}
)";
    FacilityConfig cfg = parse_config(text);
    for (double v : cfg.action_dims[0].allowed_values()) {
        const ConstraintReport report = check_action(cfg, one_sensor_state(0.0), ActionVector{{v}});
        CHECK_FALSE(report.pass());
        REQUIRE(report.infeasible_pairs.size() == 1);
        CHECK(report.infeasible_pairs[0].dim == "a1");
        CHECK(report.infeasible_pairs[0].lower == doctest::Approx(46.0));
        CHECK(report.infeasible_pairs[0].upper == doctest::Approx(44.0));
    }
}

TEST_CASE("evaluate_bound: constant bound") {
    const std::string text = R"(
sensors:
  - {name: temp, unit: degF, range: [0, 100]}
actions:
  - {name: a1, kind: discrete, values: [1]}
observation_constraints:
  - {id: oc, sensor: temp, direction: max_le, bound: "45"}
)";
    FacilityConfig cfg = parse_config(text);
    CHECK(evaluate_bound(cfg, one_sensor_state(50.0), cfg.observation_constraints[0]) == doctest::Approx(45.0));
}

TEST_CASE("evaluate_bound: nested min/max reset form matches a step-by-step oracle") {
    // h1..o1 live as sensors so the bound exercises reference resolution.
    const std::string text = R"(
sensors:
  - {name: h1, unit: degF, range: [0, 100]}
  - {name: h2, unit: degF, range: [0, 100]}
  - {name: h3, unit: degF, range: [0, 100]}
  - {name: l1, unit: degF, range: [0, 100]}
  - {name: l2, unit: degF, range: [0, 100]}
  - {name: o1, unit: degF, range: [0, 100]}
  - {name: supply, unit: degF, range: [0, 100]}
actions:
  - {name: a1, kind: discrete, values: [1]}
observation_constraints:
  - id: reset
    sensor: supply
    direction: max_le
    bound: "min(h3, 3 + max(h1, min(l1, l1 + (h1 - l1) / (h2 - l2) * (o1 - l2))))"
)";
    FacilityConfig cfg = parse_config(text);
    const double h1 = 50, h2 = 80, h3 = 48, l1 = 44, l2 = 60, o1 = 70;
    PlantState st;
    st.sensors = {h1, h2, h3, l1, l2, o1, 44.0};

    // independent hand evaluation, inside out
    const double interp = l1 + (h1 - l1) / (h2 - l2) * (o1 - l2); // 44 + 6/20*10 = 47
    CHECK(interp == doctest::Approx(47.0));
    const double inner_min = std::min(l1, interp);                // 44
    const double inner_max = std::max(h1, inner_min);             // 50
    const double oracle = std::min(h3, 3.0 + inner_max);          // min(48, 53) = 48
    CHECK(oracle == doctest::Approx(48.0));

    CHECK(evaluate_bound(cfg, st, cfg.observation_constraints[0]) == doctest::Approx(oracle));

    // degenerate denominator: h2 == l2
    st.sensors[1] = 60.0;
    CHECK_THROWS_WITH_AS(evaluate_bound(cfg, st, cfg.observation_constraints[0]), doctest::Contains("division by zero"),
                         EvalError);
}

TEST_CASE("mask_for_mode follows neutral/previous-value rules") {
    const FacilityConfig& cfg = test_util::reference_config();
    PlantState st = test_util::mid_load_state(cfg);
    ActionVector action = test_util::soo_action(cfg, st);
    const int fc_temp = cfg.action_index("fc_chw_temp");
    const int mech = cfg.action_index("mech_chillers_count");

    SUBCASE("mechanical mode holds the free-cooling temperature at its previous value") {
        ActionVector prev = action;
        prev.values[static_cast<std::size_t>(fc_temp)] = 46.5;
        ActionVector in = action;
        in.values[static_cast<std::size_t>(fc_temp)] = 50.0;
        const ActionVector out = mask_for_mode(cfg, cfg.mode_or_throw("mechanical"), in, &prev);
        CHECK(out.values[static_cast<std::size_t>(fc_temp)] == 46.5);
        CHECK(out.values[static_cast<std::size_t>(mech)] == in.values[static_cast<std::size_t>(mech)]);
    }
    SUBCASE("free-cooling mode zeroes the mechanical chiller count") {
        ActionVector in = action;
        in.values[static_cast<std::size_t>(mech)] = 2.0;
        const ActionVector out = mask_for_mode(cfg, cfg.mode_or_throw("free_cooling"), in);
        CHECK(out.values[static_cast<std::size_t>(mech)] == 0.0);
    }
    SUBCASE("mode with all dims active is the identity") {
        ModeSpec all;
        all.name = ModeName::Mechanical;
        all.active_action_dims = cfg.action_names;
        const ActionVector out = mask_for_mode(cfg, all, action);
        CHECK(out.values == action.values);
    }
    SUBCASE("unknown mode name throws") { CHECK_THROWS_AS(cfg.mode_or_throw("defrost"), ConfigError); }
}

TEST_CASE("grid closure: accepted actions re-snap to themselves") {
    const FacilityConfig& cfg = test_util::reference_config();
    PlantState st = test_util::mid_load_state(cfg);
    Rng rng(7);
    int accepted = 0;
    for (int trial = 0; trial < 500; ++trial) {
        ActionVector a;
        for (const auto& d : cfg.action_dims) {
            const auto vals = d.allowed_values();
            a.values.push_back(vals[rng.below(vals.size())]);
        }
        const ConstraintReport report = check_action(cfg, st, a);
        if (!report.pass()) continue;
        ++accepted;
        for (std::size_t i = 0; i < a.values.size(); ++i)
            CHECK(cfg.action_dims[i].snap(a.values[i]) == a.values[i]);
    }
    CHECK(accepted > 0);
}

TEST_CASE("bound purity: equal states give equal bounds on random expression trees") {
    std::vector<std::string> sensor_names = {"s0", "s1", "s2"};
    std::vector<std::string> action_names = {};
    IdentifierScope scope{sensor_names, action_names};
    Rng rng(11);

    std::function<ExprPtr(int)> gen = [&](int depth) -> ExprPtr {
        const double pick = rng.uniform();
        if (depth >= 4 || pick < 0.3) {
            if (rng.uniform() < 0.5) return expr_const(std::floor(rng.uniform(-10, 10)));
            const std::size_t i = rng.below(sensor_names.size());
            return expr_ref(ExprOp::SensorRef, sensor_names[i], static_cast<int>(i));
        }
        static const ExprOp ops[] = {ExprOp::Add, ExprOp::Sub, ExprOp::Mul, ExprOp::Min, ExprOp::Max};
        return expr_node(ops[rng.below(5)], gen(depth + 1), gen(depth + 1));
    };

    for (int trial = 0; trial < 200; ++trial) {
        const ExprPtr e = gen(0);
        std::vector<double> sensors = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
        const std::vector<double> copy = sensors;
        const double a = evaluate(*e, sensors, {});
        const double b = evaluate(*e, copy, {});
        CHECK(a == b);

        // print -> parse reproduces the same tree
        const ExprPtr reparsed = parse_expression(to_text(*e), scope);
        CHECK(structurally_equal(*e, *reparsed));
    }
}

TEST_CASE("infeasibility detection: contradictory pairs leave no feasible grid point") {
    Rng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        const double x = 40.0 + std::floor(rng.uniform(0, 12));   // upper bound
        const double y = x + 1.0 + std::floor(rng.uniform(0, 5)); // lower bound, strictly above
        std::string text = R"(
sensors:
  - {name: temp, unit: degF, range: [0, 100]}
actions:
  - {name: a1, kind: continuous, range: [40, 60], step: 0.5}
action_constraints:
  - {id: upper, expr: "a1 <= )" + std::to_string(x) + R"("}
  - {id: lower, expr: "a1 >= )" + std::to_string(y) + R"("}
)";
        FacilityConfig cfg = parse_config(text);
        int feasible = 0;
        for (double v : cfg.action_dims[0].allowed_values()) {
            const ConstraintReport report = check_action(cfg, one_sensor_state(0.0), ActionVector{{v}});
            if (report.pass()) ++feasible;
            CHECK(report.infeasible_pairs.size() == 1);
        }
        CHECK(feasible == 0);
    }
}

TEST_CASE("facility config round-trips through print_config") {
    const FacilityConfig& cfg = test_util::reference_config();
    const std::string printed = print_config(cfg);
    const FacilityConfig reparsed = parse_config(printed);
    CHECK(print_config(reparsed) == printed);
    CHECK(reparsed.sensor_names == cfg.sensor_names);
    CHECK(reparsed.action_names == cfg.action_names);
    REQUIRE(reparsed.action_constraints.size() == cfg.action_constraints.size());
    for (std::size_t i = 0; i < cfg.action_constraints.size(); ++i) {
        CHECK(structurally_equal(*reparsed.action_constraints[i].lhs, *cfg.action_constraints[i].lhs));
        CHECK(structurally_equal(*reparsed.action_constraints[i].rhs, *cfg.action_constraints[i].rhs));
    }
    REQUIRE(reparsed.observation_constraints.size() == cfg.observation_constraints.size());
    for (std::size_t i = 0; i < cfg.observation_constraints.size(); ++i)
        CHECK(structurally_equal(*reparsed.observation_constraints[i].bound, *cfg.observation_constraints[i].bound));
}
