#include "mulch/priors.hpp"
#include "mulch/search_space.hpp"
#include "mulch/sobol.hpp"

#include <benchmark/benchmark.h>

using namespace mulch;

static void BM_SobolNext(benchmark::State& state) {
  SobolSequence sobol(12, 1);
  std::vector<double> point(12);
  for (auto _ : state) {
    sobol.next_into(point.data());
    benchmark::DoNotOptimize(point);
  }
}
BENCHMARK(BM_SobolNext);

static void BM_SampleQuasi(benchmark::State& state) {
  const auto space = default_space("xgb12");
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample(space, 1024, SampleMode::Quasi, 7));
  }
}
BENCHMARK(BM_SampleQuasi);

static void BM_SamplePrior(benchmark::State& state) {
  const auto space = default_space("mulch5");
  const auto ensemble = uniform_ensemble(space);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample_prior(ensemble, 8, 5));
  }
}
BENCHMARK(BM_SamplePrior);
