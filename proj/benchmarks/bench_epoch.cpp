#include <benchmark/benchmark.h>

#include "bkd/pipeline.hpp"

namespace {

using namespace bkd;

// One epoch on the default desk-scale problem (C=10, d=20, rho=100, n_max=500).
void BM_Epoch(benchmark::State& state) {
  const auto counts = make_longtail_counts({ProfileKind::kExponential, 100.0, 500, 10});
  const auto data = synth_gaussian_mixture(counts, 20, 3.0, 7, 100);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.schedule.base_lr = 0.05;
  const auto teacher = init_mlp(std::vector<std::size_t>{20, 64, 64, 10}, 9);
  cfg.loss = static_cast<LossKind>(state.range(0));
  for (auto _ : state) {
    Trainer t(data.train, data.test, cfg, &teacher);
    t.run_epoch();
    benchmark::DoNotOptimize(t.params());
  }
  state.SetLabel(std::string(to_string(cfg.loss)));
}

BENCHMARK(BM_Epoch)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

}  // namespace
