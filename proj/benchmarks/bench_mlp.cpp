#include <benchmark/benchmark.h>

#include "bkd/losses.hpp"
#include "bkd/mlp.hpp"

namespace {

using namespace bkd;

void BM_ForwardBackward(benchmark::State& state) {
  const auto hidden = static_cast<std::size_t>(state.range(0));
  const std::size_t dims[] = {20, hidden, hidden, 10};
  const auto params = init_mlp(dims, 1);
  auto grads = zeros_like(params);
  Rng rng(2);
  Vector x(20);
  for (double& v : x) v = rng.normal();
  for (auto _ : state) {
    const auto fwd = forward(params, x);
    const auto loss = ce_loss(fwd.logits, 3);
    backward_accumulate(params, fwd.cache, loss.grad_logits, grads);
  }
  benchmark::DoNotOptimize(grads);
}

BENCHMARK(BM_ForwardBackward)->Arg(64)->Arg(256);

}  // namespace
