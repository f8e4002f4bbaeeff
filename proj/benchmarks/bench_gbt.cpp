#include "mulch/dataset.hpp"
#include "mulch/gbt.hpp"

#include <benchmark/benchmark.h>

using namespace mulch;

static void BM_GbtTrain(benchmark::State& state) {
  const auto task = make_synthetic({2000, 6, 0.05, 3});
  GbtHyperparams hp;
  hp.eta = 0.1;
  hp.max_depth = 6;
  hp.num_boost_round = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(train(task, hp, {}, 11));
  }
}
BENCHMARK(BM_GbtTrain)->Arg(25)->Arg(100);

static void BM_SubsampleFidelity(benchmark::State& state) {
  const auto task = make_synthetic({4000, 8, 0.05, 3});
  for (auto _ : state) {
    benchmark::DoNotOptimize(subsample_fidelity(task, 0.1, 5));
  }
}
BENCHMARK(BM_SubsampleFidelity);
