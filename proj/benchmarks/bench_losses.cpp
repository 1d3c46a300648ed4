#include <benchmark/benchmark.h>

#include "bkd/losses.hpp"
#include "bkd/weights.hpp"

namespace {

using namespace bkd;

struct Inputs {
  explicit Inputs(std::size_t c) : z(c), teacher(c), w(c) {
    Rng rng(c);
    ClassCounts counts(c);
    for (std::size_t i = 0; i < c; ++i) {
      z[i] = 4.0 * rng.uniform() - 2.0;
      teacher[i] = 4.0 * rng.uniform() - 2.0;
      counts[i] = 1 + static_cast<std::int64_t>(rng.uniform_index(5000));
    }
    w = effective_number_weights(counts, 0.9999);
  }
  Vector z, teacher, w;
};

void BM_CeLoss(benchmark::State& state) {
  const Inputs in(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(ce_loss(in.z, 0));
}

void BM_KdLoss(benchmark::State& state) {
  const Inputs in(state.range(0));
  const auto soft = TeacherSoftTargets::from_logits(in.teacher, 2.0);
  for (auto _ : state) benchmark::DoNotOptimize(kd_loss(in.z, soft, 0, {}));
}

void BM_BkdLoss(benchmark::State& state) {
  const Inputs in(state.range(0));
  const auto soft = TeacherSoftTargets::from_logits(in.teacher, 2.0);
  for (auto _ : state) benchmark::DoNotOptimize(bkd_loss(in.z, soft, 0, in.w, {}));
}

BENCHMARK(BM_CeLoss)->Arg(10)->Arg(100)->Arg(1000);
BENCHMARK(BM_KdLoss)->Arg(10)->Arg(100)->Arg(1000);
BENCHMARK(BM_BkdLoss)->Arg(10)->Arg(100)->Arg(1000);

}  // namespace
