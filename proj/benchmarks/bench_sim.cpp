#include <benchmark/benchmark.h>

#include "bench_common.hpp"
#include "chillerlab/plant_sim.hpp"
#include "chillerlab/soo_baseline.hpp"

using namespace chillerlab;

namespace {

void BM_sim_step(benchmark::State& state) {
    const FacilityConfig& cfg = bench::reference_config();
    PlantSim sim(cfg, SimParams{}, 1);
    SooRules rules;
    PlantState st = sim.initial_state(0);
    for (auto _ : state) {
        const ActionVector a = soo_policy(rules, cfg, st);
        auto res = sim.step(st, a);
        st = std::move(res.next);
        benchmark::DoNotOptimize(st.sensors.data());
    }
}

BENCHMARK(BM_sim_step);

} // namespace
