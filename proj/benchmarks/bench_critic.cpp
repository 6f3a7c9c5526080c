#include <benchmark/benchmark.h>

#include "bench_common.hpp"

using namespace chillerlab;

namespace {

const EnsembleModel& bench_model() {
    static EnsembleModel model = [] {
        const FacilityConfig& cfg = bench::reference_config();
        CriticHParams hp;
        hp.epochs = 1;
        const auto examples = bench::synthetic_examples(cfg, 512);
        return train(examples, default_masks(cfg), hp, cfg);
    }();
    return model;
}

// The real-time budget check: scoring a full candidate batch with the default
// 10-member, 128-unit ensemble. One iteration at 100k rows is the number the
// README quotes.
void BM_predict_batch(benchmark::State& state) {
    const FacilityConfig& cfg = bench::reference_config();
    const EnsembleModel& model = bench_model();
    const std::size_t batch = static_cast<std::size_t>(state.range(0));
    const std::size_t f = feature_names(cfg).size();
    Rng rng(3);
    std::vector<std::vector<double>> rows(batch);
    for (auto& row : rows) {
        row.resize(f);
        for (auto& v : row) v = rng.uniform(0, 50);
    }
    for (auto _ : state) {
        auto preds = model.predict_features(rows);
        benchmark::DoNotOptimize(preds.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(batch) * state.iterations());
}

BENCHMARK(BM_predict_batch)->Arg(1000)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_train_epoch(benchmark::State& state) {
    const FacilityConfig& cfg = bench::reference_config();
    const auto examples = bench::synthetic_examples(cfg, static_cast<int>(state.range(0)));
    CriticHParams hp;
    hp.epochs = 1;
    hp.ensemble_size = 10;
    for (auto _ : state) {
        EnsembleModel model = train(examples, default_masks(cfg), hp, cfg);
        benchmark::DoNotOptimize(model.parameter_count());
    }
}

BENCHMARK(BM_train_epoch)->Arg(1000)->Unit(benchmark::kMillisecond);

} // namespace
