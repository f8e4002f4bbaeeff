#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mulch/errors.hpp"
#include "mulch/priors.hpp"
#include "mulch/rng.hpp"
#include "mulch/search_space.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

using namespace mulch;

namespace {

// ---- independent oracles (test-only) ----

double digamma_ref(double x) {
  double acc = 0.0;
  while (x < 6.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  return acc + std::log(x) - 0.5 * inv -
         inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0));
}

// beta MLE by Newton on the digamma score equations
std::pair<double, double> beta_mle_ref(const std::vector<double>& z) {
  double mean_ln = 0.0, mean_ln1m = 0.0, m = 0.0, m2 = 0.0;
  for (double zi : z) {
    mean_ln += std::log(zi);
    mean_ln1m += std::log1p(-zi);
    m += zi;
    m2 += zi * zi;
  }
  const auto n = static_cast<double>(z.size());
  mean_ln /= n;
  mean_ln1m /= n;
  m /= n;
  const double v = m2 / n - m * m;
  double common = m * (1.0 - m) / v - 1.0;
  double a = m * common, b = (1.0 - m) * common;
  for (int iter = 0; iter < 200; ++iter) {
    const double f1 = digamma_ref(a) - digamma_ref(a + b) - mean_ln;
    const double f2 = digamma_ref(b) - digamma_ref(a + b) - mean_ln1m;
    const double h = 1e-6;
    const double j11 = (digamma_ref(a + h) - digamma_ref(a + b + h) - mean_ln - f1) / h;
    const double j12 = (digamma_ref(a) - digamma_ref(a + b + h) - mean_ln - f1) / h;
    const double j21 = (digamma_ref(b) - digamma_ref(a + b + h) - mean_ln1m - f2) / h;
    const double j22 = (digamma_ref(b + h) - digamma_ref(a + b + h) - mean_ln1m - f2) / h;
    const double det = j11 * j22 - j12 * j21;
    if (std::fabs(det) < 1e-14) break;
    const double da = (f1 * j22 - f2 * j12) / det;
    const double db = (f2 * j11 - f1 * j21) / det;
    a = std::max(a - da, 1e-3);
    b = std::max(b - db, 1e-3);
    if (std::fabs(da) + std::fabs(db) < 1e-10) break;
  }
  return {a, b};
}

// gamma MLE: Newton on ln k - digamma(k) = ln(mean) - mean(ln)
std::pair<double, double> gamma_mle_ref(const std::vector<double>& y) {
  double m = 0.0, mean_ln = 0.0;
  for (double yi : y) {
    m += yi;
    mean_ln += std::log(yi);
  }
  const auto n = static_cast<double>(y.size());
  m /= n;
  mean_ln /= n;
  const double s = std::log(m) - mean_ln;
  double k = (3.0 - s + std::sqrt((s - 3.0) * (s - 3.0) + 24.0 * s)) / (12.0 * s);
  for (int iter = 0; iter < 100; ++iter) {
    const double f = std::log(k) - digamma_ref(k) - s;
    const double h = 1e-6;
    const double fp = (std::log(k + h) - digamma_ref(k + h) - s - f) / h;
    const double step = f / fp;
    k = std::max(k - step, 1e-3);
    if (std::fabs(step) < 1e-10) break;
  }
  return {k, m / k};
}

double simpson(const std::function<double(double)>& fn, double lo, double hi,
               int panels) {
  const double h = (hi - lo) / panels;
  double acc = fn(lo) + fn(hi);
  for (int i = 1; i < panels; ++i) {
    acc += fn(lo + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  }
  return acc * h / 3.0;
}

SearchSpace unit_space(int d) {
  std::vector<Parameter> params;
  for (int j = 0; j < d; ++j) {
    params.push_back(Parameter{"x" + std::to_string(j), ParamKind::Continuous,
                               0.0, 1.0, {}, Transform::None});
  }
  return SearchSpace(std::move(params));
}

Configuration single(const std::string& name, double v) {
  Configuration c;
  c.values[name] = v;
  return c;
}

} // namespace

TEST_CASE("aggregate_top_configs bookkeeping") {
  std::vector<TaskHistory> histories(3);
  for (int t = 0; t < 3; ++t) {
    histories[t].task = "t" + std::to_string(t);
    for (int i = 0; i < 5; ++i) {
      histories[t].configs.push_back(single("x0", 0.1 * i));
      histories[t].metrics.push_back(0.1 * i);
    }
  }
  const auto pool = aggregate_top_configs(histories, 2);
  CHECK(pool.size() == 6);

  TaskHistory h;
  h.task = "argmax";
  h.configs = {single("x0", 0.1), single("x0", 0.2), single("x0", 0.3)};
  h.metrics = {0.1, 0.9, 0.5};
  const auto top = aggregate_top_configs({h}, 1);
  REQUIRE(top.size() == 1);
  CHECK(top.configs[0].number("x0") == 0.2);

  CHECK_THROWS_AS(aggregate_top_configs({h}, 4), ValidationError);
}

TEST_CASE("aggregate_top_configs percentile property") {
  // 17 tasks x 100 evals, take top 10: every pooled metric must be >= the
  // task's 90th percentile (brute-force check)
  Rng rng(31);
  std::vector<TaskHistory> histories(17);
  for (int t = 0; t < 17; ++t) {
    histories[t].task = "t" + std::to_string(t);
    for (int i = 0; i < 100; ++i) {
      const double metric = rng.next_double();
      histories[t].configs.push_back(single("x0", metric));
      histories[t].metrics.push_back(metric);
    }
  }
  const auto pool = aggregate_top_configs(histories, 10);
  REQUIRE(pool.size() == 170);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& src = pool.source_tasks[i];
    std::vector<double> metrics;
    for (const auto& h : histories) {
      if (h.task == src) metrics = h.metrics;
    }
    std::sort(metrics.begin(), metrics.end());
    const double p90 = metrics[89];
    CHECK(pool.metrics[i] >= p90);
  }
}

TEST_CASE("non-finite metrics are dropped before pooling") {
  TaskHistory h;
  h.task = "nan";
  h.configs = {single("x0", 0.1), single("x0", 0.2), single("x0", 0.3)};
  h.metrics = {0.5, std::nan(""), 0.7};
  const auto pool = aggregate_top_configs({h}, 2);
  CHECK(pool.size() == 2);
  CHECK(pool.metrics[0] == 0.7);
  CHECK(pool.metrics[1] == 0.5);
  CHECK_THROWS_AS(aggregate_top_configs({h}, 3), ValidationError);
}

TEST_CASE("quantile-uniform fit") {
  std::vector<double> samples;
  for (int i = 1; i <= 100; ++i) samples.push_back(i);
  const auto d = fit_quantile_uniform(samples, 0.05, 0.95, 0.0, 200.0);
  CHECK(d.params[0] == doctest::Approx(5.95).epsilon(1e-12));
  CHECK(d.params[1] == doctest::Approx(95.05).epsilon(1e-12));

  const auto extremes = fit_quantile_uniform(samples, 0.0, 1.0, 0.0, 200.0);
  CHECK(extremes.params[0] == 1.0);
  CHECK(extremes.params[1] == 100.0);

  // degenerate: all equal -> widened interval containing c, inside the domain
  const auto constant = fit_quantile_uniform({5.0, 5.0, 5.0}, 0.05, 0.95, 0.0, 10.0);
  CHECK(constant.params[0] < 5.0);
  CHECK(constant.params[1] > 5.0);
  CHECK(constant.params[0] >= 0.0);
  CHECK(constant.params[1] <= 10.0);

  CHECK_THROWS_AS(fit_quantile_uniform({1.0}, 0.05, 0.95, 0, 10), ValidationError);
  CHECK_THROWS_AS(fit_quantile_uniform(samples, 0.9, 0.1, 0, 200), ValidationError);
}

TEST_CASE("quantile-uniform fitting is monotone in the quantile pair") {
  Rng rng(77);
  std::vector<double> samples;
  for (int i = 0; i < 200; ++i) samples.push_back(rng.next_double() * 10.0);
  const auto narrow = fit_quantile_uniform(samples, 0.2, 0.8, 0.0, 10.0);
  const auto wide = fit_quantile_uniform(samples, 0.05, 0.95, 0.0, 10.0);
  CHECK(wide.params[0] <= narrow.params[0]);
  CHECK(wide.params[1] >= narrow.params[1]);
}

TEST_CASE("beta MLE recovers Beta(2,5) within tolerance") {
  // Beta(2,5) as the 2nd order statistic of 6 uniforms: independent of the
  // inverse-CDF sampler under test
  Rng rng(2025);
  std::vector<double> samples;
  samples.reserve(10000);
  for (int i = 0; i < 10000; ++i) {
    double u[6];
    for (double& v : u) v = rng.next_double();
    std::sort(u, u + 6);
    samples.push_back(u[1]);
  }
  const auto density = fit_family_mle(samples, DensityFamily::Beta, 0.0, 1.0);
  CHECK(std::fabs(density.params[0] - 2.0) < 0.15);
  CHECK(std::fabs(density.params[1] - 5.0) < 0.15);

  const auto [a_ref, b_ref] = beta_mle_ref(samples);
  CHECK(std::fabs(density.params[0] - a_ref) < 0.02);
  CHECK(std::fabs(density.params[1] - b_ref) < 0.02);
}

TEST_CASE("gamma MLE recovers Gamma(3, 0.5) within tolerance") {
  // sum of 3 exponentials, scaled
  Rng rng(515);
  std::vector<double> samples;
  samples.reserve(10000);
  for (int i = 0; i < 10000; ++i) {
    double acc = 0.0;
    for (int k = 0; k < 3; ++k) acc -= std::log(1.0 - rng.next_double());
    samples.push_back(0.5 * acc);
  }
  const auto density = fit_family_mle(samples, DensityFamily::Gamma, 0.0, 50.0);
  CHECK(std::fabs(density.params[0] - 3.0) < 0.2);
  CHECK(std::fabs(density.params[1] - 0.5) < 0.1);
  CHECK(density.params[2] == 0.0); // location pinned at the domain lower bound

  const auto [k_ref, theta_ref] = gamma_mle_ref(samples);
  CHECK(std::fabs(density.params[0] - k_ref) < 0.03);
  CHECK(std::fabs(density.params[1] - theta_ref) < 0.03);
}

TEST_CASE("constant samples cannot be fit") {
  std::vector<double> constant(20, 0.4);
  CHECK_THROWS_AS(fit_family_mle(constant, DensityFamily::Beta, 0.0, 1.0), FitError);
  CHECK_THROWS_AS(fit_family_mle(constant, DensityFamily::Gamma, 0.0, 1.0), FitError);
  CHECK_THROWS_AS(fit_family_mle(constant, DensityFamily::HalfCauchy, 0.0, 1.0), FitError);
  std::vector<double> few = {0.1, 0.2};
  CHECK_THROWS_AS(fit_family_mle(few, DensityFamily::Beta, 0.0, 1.0), ValidationError);
}

TEST_CASE("fitted densities integrate to one over their support") {
  Rng rng(88);
  std::vector<double> samples;
  for (int i = 0; i < 2000; ++i) {
    double u[6];
    for (double& v : u) v = rng.next_double();
    std::sort(u, u + 6);
    samples.push_back(0.2 + 0.6 * u[1]); // inside [0,1]
  }
  for (auto family :
       {DensityFamily::Beta, DensityFamily::Gamma, DensityFamily::HalfCauchy}) {
    const auto density = fit_family_mle(samples, family, 0.0, 1.0);
    const double integral =
        simpson([&](double t) { return density.pdf(t); }, 1e-9, 1.0, 200000);
    CHECK(std::fabs(integral - 1.0) < 1e-6);
  }
  const auto uniform = fit_quantile_uniform(samples, 0.05, 0.95, 0.0, 1.0);
  const double integral = simpson([&](double t) { return uniform.pdf(t); },
                                  uniform.params[0], uniform.params[1], 20000);
  CHECK(std::fabs(integral - 1.0) < 1e-6);
}

TEST_CASE("ensemble weights and categorical smoothing") {
  SearchSpace space(
      {Parameter{"x", ParamKind::Continuous, 0.0, 1.0, {}, Transform::None},
       Parameter{"m", ParamKind::Categorical, 0, 0, {"approx", "hist"}, Transform::None}});

  TopConfigPool pool;
  Rng rng(11);
  for (int i = 0; i < 40; ++i) {
    Configuration c;
    double u[6];
    for (double& v : u) v = rng.next_double();
    std::sort(u, u + 6);
    c.values["x"] = 0.2 + 0.5 * u[1];
    c.values["m"] = std::string(i < 36 ? "hist" : "approx");
    pool.configs.push_back(c);
    pool.source_tasks.push_back("t");
    pool.metrics.push_back(0.5);
  }

  const auto ensemble = build_ensemble(pool, space);
  REQUIRE(ensemble.parameters.size() == 2);

  // all four families converge on smooth data -> equal quarter weights
  const auto& x_prior = ensemble.parameters[0];
  REQUIRE(x_prior.components.size() == 4);
  for (double w : x_prior.weights) CHECK(w == doctest::Approx(0.25));

  const auto& m_prior = ensemble.parameters[1];
  REQUIRE(m_prior.components.size() == 1);
  const auto& pmf = m_prior.components[0].params;
  // add-one smoothing: (4+1)/(40+2), (36+1)/(40+2)
  CHECK(pmf[0] == doctest::Approx(5.0 / 42.0));
  CHECK(pmf[1] == doctest::Approx(37.0 / 42.0));
}

TEST_CASE("categorical smoothing matches the 9-1 worked example") {
  SearchSpace space({Parameter{
      "m", ParamKind::Categorical, 0, 0, {"approx", "hist"}, Transform::None}});
  TopConfigPool pool;
  for (int i = 0; i < 10; ++i) {
    Configuration c;
    c.values["m"] = std::string(i < 9 ? "hist" : "approx");
    pool.configs.push_back(c);
    pool.source_tasks.push_back("t");
    pool.metrics.push_back(1.0);
  }
  const auto ensemble = build_ensemble(pool, space);
  const auto& pmf = ensemble.parameters[0].components[0].params;
  CHECK(pmf[0] == doctest::Approx(2.0 / 12.0));  // approx
  CHECK(pmf[1] == doctest::Approx(10.0 / 12.0)); // hist
}

TEST_CASE("ensemble mode lands near concentrated eta samples") {
  const auto space = default_space("top1"); // eta only, exponent domain [-5,1]
  TopConfigPool pool;
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    // exponents concentrated around -1 (eta near 1e-1)
    const double exponent = std::clamp(-1.0 + 0.35 * rng.next_gaussian(), -5.0, 1.0);
    pool.configs.push_back(single("eta", std::pow(10.0, exponent)));
    pool.source_tasks.push_back("t");
    pool.metrics.push_back(0.9);
  }
  const auto ensemble = build_ensemble(pool, space);

  // grid-evaluation oracle over the exponent domain
  double best_t = -5.0, best_pdf = -1.0;
  for (int i = 0; i <= 600; ++i) {
    const double t = -5.0 + 6.0 * i / 600.0;
    const double pdf = ensemble.parameters[0].density_at(t);
    if (pdf > best_pdf) {
      best_pdf = pdf;
      best_t = t;
    }
  }
  CHECK(best_t >= -2.0); // mode within [1e-2, 1e0]
  CHECK(best_t <= 0.0);
}

TEST_CASE("sample_prior yields valid configurations and respects support") {
  const auto space = default_space("mulch5");
  const auto ensemble = uniform_ensemble(space);
  const auto few = sample_prior(ensemble, 8, 42);
  REQUIRE(few.size() == 8);
  for (const auto& config : few) space.validate(config);

  // deterministic given seed
  CHECK(sample_prior(ensemble, 8, 42) == few);

  // point-like uniform component: all samples inside [c, c+eps]
  SearchSpace tiny({Parameter{"x", ParamKind::Continuous, 0.0, 1.0, {}, Transform::None}});
  PriorEnsemble point = uniform_ensemble(tiny);
  point.parameters[0].components[0].params = {0.42, 0.42 + 1e-6};
  for (const auto& config : sample_prior(point, 100, 9)) {
    CHECK(config.number("x") >= 0.42);
    CHECK(config.number("x") <= 0.42 + 1e-6);
  }
}

TEST_CASE("uniform ensemble sampling matches uniform moments") {
  SearchSpace space = unit_space(3);
  const auto ensemble = uniform_ensemble(space);
  const auto samples = sample_prior(ensemble, 10000, 5);
  for (int j = 0; j < 3; ++j) {
    double acc = 0.0;
    for (const auto& config : samples) acc += config.number("x" + std::to_string(j));
    const double mean = acc / 1e4;
    // 3 sigma of a uniform mean over 1e4 i.i.d. draws
    CHECK(std::fabs(mean - 0.5) < 3.0 * std::sqrt(1.0 / 12.0 / 1e4));
  }
}

TEST_CASE("density_at is the product of per-parameter mixtures") {
  SearchSpace space = unit_space(2);
  const auto ensemble = uniform_ensemble(space);

  Configuration inside;
  inside.values["x0"] = 0.3;
  inside.values["x1"] = 0.7;
  CHECK(density_at(ensemble, inside) == doctest::Approx(1.0)); // product of 1s

  Configuration outside;
  outside.values["x0"] = 1.3;
  outside.values["x1"] = 0.7;
  CHECK(density_at(ensemble, outside) == 0.0);

  // 2-d factorization oracle on a grid, with non-trivial densities
  TopConfigPool pool;
  Rng rng(17);
  for (int i = 0; i < 64; ++i) {
    Configuration c;
    double u[6];
    for (double& v : u) v = rng.next_double();
    std::sort(u, u + 6);
    c.values["x0"] = 0.1 + 0.8 * u[1];
    c.values["x1"] = 0.1 + 0.8 * u[3];
    pool.configs.push_back(c);
    pool.source_tasks.push_back("t");
    pool.metrics.push_back(1.0);
  }
  const auto fitted = build_ensemble(pool, space);
  for (int a = 1; a < 20; ++a) {
    for (int b = 1; b < 20; ++b) {
      Configuration c;
      c.values["x0"] = a / 20.0;
      c.values["x1"] = b / 20.0;
      const double joint = density_at(fitted, c);
      const double factored = fitted.parameters[0].density_at(a / 20.0) *
                              fitted.parameters[1].density_at(b / 20.0);
      CHECK(joint == doctest::Approx(factored).epsilon(1e-12));
    }
  }
}

TEST_CASE("mixture density equals the weighted component sum") {
  SearchSpace space = unit_space(1);
  TopConfigPool pool;
  Rng rng(23);
  for (int i = 0; i < 100; ++i) {
    double u[6];
    for (double& v : u) v = rng.next_double();
    std::sort(u, u + 6);
    pool.configs.push_back(single("x0", 0.05 + 0.9 * u[2]));
    pool.source_tasks.push_back("t");
    pool.metrics.push_back(1.0);
  }
  const auto ensemble = build_ensemble(pool, space);
  const auto& prior = ensemble.parameters[0];
  Rng probe(29);
  for (int i = 0; i < 200; ++i) {
    const double t = probe.next_double();
    double expected = 0.0;
    for (std::size_t c = 0; c < prior.components.size(); ++c) {
      expected += prior.weights[c] * prior.components[c].pdf(t);
    }
    CHECK(prior.density_at(t) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("learn_lengthscale_box") {
  // degenerate: identical vectors widen around their logs
  const auto degenerate =
      learn_lengthscale_box({{0.3, 0.5}, {0.3, 0.5}}, 0.05, 0.95);
  CHECK(degenerate.log_lower[0] < std::log(0.3));
  CHECK(degenerate.log_upper[0] > std::log(0.3));
  CHECK(degenerate.log_lower[1] < std::log(0.5));
  CHECK(degenerate.log_upper[1] > std::log(0.5));

  // log-lengthscales uniform on [-2, 0]: quantile box ~ [-1.9, -0.1]
  Rng rng(41);
  std::vector<std::vector<double>> vectors;
  for (int i = 0; i < 4000; ++i) {
    vectors.push_back({std::exp(-2.0 + 2.0 * rng.next_double())});
  }
  const auto box = learn_lengthscale_box(vectors, 0.05, 0.95);
  CHECK(std::fabs(box.log_lower[0] - (-1.9)) < 0.05);
  CHECK(std::fabs(box.log_upper[0] - (-0.1)) < 0.05);

  const auto extremes = learn_lengthscale_box(vectors, 0.0, 1.0);
  double lo = 1e9, hi = -1e9;
  for (const auto& v : vectors) {
    lo = std::min(lo, std::log(v[0]));
    hi = std::max(hi, std::log(v[0]));
  }
  CHECK(extremes.log_lower[0] == doctest::Approx(lo).epsilon(1e-12));
  CHECK(extremes.log_upper[0] == doctest::Approx(hi).epsilon(1e-12));

  CHECK_THROWS_AS(learn_lengthscale_box({{0.3}}, 0.05, 0.95), ValidationError);
  CHECK_THROWS_AS(learn_lengthscale_box({{0.3}, {-1.0}}, 0.05, 0.95), ValidationError);
}

TEST_CASE("single-sample pool falls back to the full-domain uniform") {
  SearchSpace space = unit_space(1);
  TopConfigPool pool;
  pool.configs = {single("x0", 0.5)};
  pool.source_tasks = {"t"};
  pool.metrics = {1.0};
  const auto ensemble = build_ensemble(pool, space);
  REQUIRE(ensemble.parameters[0].components.size() == 1);
  const auto& d = ensemble.parameters[0].components[0];
  CHECK(d.family == DensityFamily::QuantileUniform);
  CHECK(d.params[0] == 0.0);
  CHECK(d.params[1] == 1.0);
}
