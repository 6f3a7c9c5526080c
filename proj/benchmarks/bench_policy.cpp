#include <benchmark/benchmark.h>

#include "bench_common.hpp"
#include "chillerlab/policy.hpp"
#include "chillerlab/soo_baseline.hpp"

using namespace chillerlab;

namespace {

PlantState bench_state(const FacilityConfig& cfg) {
    PlantSim sim(cfg, SimParams{}, 1);
    return sim.initial_state(0);
}

void BM_generate_candidates(benchmark::State& state) {
    const FacilityConfig& cfg = bench::reference_config();
    const PlantState st = bench_state(cfg);
    const ActionVector prev = soo_policy(SooRules{}, cfg, st);
    PolicyHParams hp;
    hp.candidate_cap = static_cast<int>(state.range(0));
    hp.samples_per_direction = 3;
    CandidateOptions options;
    options.mode = cfg.find_mode(ModeName::Mechanical);
    options.pinned = {{cfg.action_index("mech_chillers_count"), 2.0}, {cfg.action_index("fc_chillers_count"), 0.0}};
    Rng rng(42);
    for (auto _ : state) {
        auto candidates = generate_candidates(cfg, prev, st, hp, rng, options);
        benchmark::DoNotOptimize(candidates.data());
    }
}

BENCHMARK(BM_generate_candidates)->Arg(1500)->Arg(100000)->Unit(benchmark::kMillisecond);

} // namespace
