#include "mulch/gp.hpp"
#include "mulch/rng.hpp"

#include <benchmark/benchmark.h>

using namespace mulch;

namespace {

void fill_problem(int n, int d, Eigen::MatrixXd* X, Eigen::VectorXd* y) {
  Rng rng(7);
  X->resize(n, d);
  y->resize(n);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = 0; j < d; ++j) {
      const double v = rng.next_double();
      (*X)(i, j) = v;
      acc += std::sin(3.0 * v);
    }
    (*y)(i) = acc;
  }
}

} // namespace

static void BM_GpFit(benchmark::State& state) {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  fill_problem(static_cast<int>(state.range(0)), 5, &X, &y);
  for (auto _ : state) {
    benchmark::DoNotOptimize(GpModel::fit(X, y, nullptr, 4, 1));
  }
}
BENCHMARK(BM_GpFit)->Arg(16)->Arg(32)->Arg(50);

static void BM_GpPredict(benchmark::State& state) {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  fill_problem(50, 5, &X, &y);
  const auto gp = GpModel::fit(X, y, nullptr, 4, 1);
  Eigen::VectorXd x = Eigen::VectorXd::Constant(5, 0.4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(gp.predict(x));
  }
}
BENCHMARK(BM_GpPredict);

static void BM_Suggest(benchmark::State& state) {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  fill_problem(30, 5, &X, &y);
  const auto gp = GpModel::fit(X, y, nullptr, 4, 1);
  const auto space = default_space("mulch5");
  for (auto _ : state) {
    benchmark::DoNotOptimize(suggest(gp, space, y.maxCoeff(), 256, 3));
  }
}
BENCHMARK(BM_Suggest);
