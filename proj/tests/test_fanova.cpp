#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mulch/dataset.hpp"
#include "mulch/engine.hpp"
#include "mulch/errors.hpp"
#include "mulch/fanova.hpp"
#include "mulch/rng.hpp"
#include "mulch/search_space.hpp"

#include <algorithm>
#include <cmath>

using namespace mulch;

namespace {

SearchSpace unit_space(int d) {
  std::vector<Parameter> params;
  for (int j = 0; j < d; ++j) {
    params.push_back(Parameter{"x" + std::to_string(j), ParamKind::Continuous,
                               0.0, 1.0, {}, Transform::None});
  }
  return SearchSpace(std::move(params));
}

std::vector<EvaluationRecord> records_of(
    const SearchSpace& space, int n, std::uint64_t seed,
    const std::function<double(const Configuration&)>& fn) {
  std::vector<EvaluationRecord> out;
  for (const auto& config : sample(space, n, SampleMode::Quasi, seed)) {
    out.push_back({config, fn(config)});
  }
  return out;
}

} // namespace

TEST_CASE("single-variable function dominates the scores") {
  const auto space = unit_space(3);
  const auto records = records_of(space, 1024, 3, [](const Configuration& c) {
    return c.number("x0");
  });
  const auto report = compute_importances(records, space, {}, 1);
  CHECK(report.scores[0] >= 0.95);
  CHECK(report.scores[1] <= 0.03);
  CHECK(report.scores[2] <= 0.03);
  CHECK(!report.degenerate);
  CHECK(report.residual >= 0.0);
}

TEST_CASE("linear additive function recovers the analytic variance split") {
  // f = x1 + 2 x2: variances 1/12 and 4/12, shares 0.2 / 0.8
  const auto space = unit_space(2);
  Rng noise(5);
  auto records = records_of(space, 1024, 9, [&](const Configuration& c) {
    return c.number("x0") + 2.0 * c.number("x1") + 0.01 * noise.next_gaussian();
  });
  const auto report = compute_importances(records, space, {}, 2);
  CHECK(std::fabs(report.scores[0] - 0.2) < 0.05);
  CHECK(std::fabs(report.scores[1] - 0.8) < 0.05);

  const auto ranked = rank_parameters(report);
  CHECK(ranked[0] == "x1");
  CHECK(ranked[1] == "x0");
}

TEST_CASE("scores sum with the residual to one") {
  const auto space = unit_space(3);
  Rng noise(8);
  const auto records = records_of(space, 256, 11, [&](const Configuration& c) {
    return std::sin(3.0 * c.number("x0")) * c.number("x1") + noise.next_gaussian() * 0.1;
  });
  const auto report = compute_importances(records, space, {}, 5);
  double acc = report.residual;
  for (double s : report.scores) {
    CHECK(s >= 0.0);
    acc += s;
  }
  CHECK(acc == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("rank_parameters ordering and ties") {
  ImportanceReport report;
  report.parameters = {"a", "b", "c"};
  report.scores = {0.5, 0.3, 0.1};
  CHECK(rank_parameters(report) == std::vector<std::string>{"a", "b", "c"});

  report.scores = {0.2, 0.2, 0.2};
  CHECK(rank_parameters(report) == std::vector<std::string>{"a", "b", "c"});

  report.scores = {0.1, 0.5, 0.2};
  CHECK(rank_parameters(report) == std::vector<std::string>{"b", "c", "a"});
}

TEST_CASE("permuting dimensions permutes scores") {
  const auto space = unit_space(3);
  auto fn = [](double a, double b, double c) {
    return std::sin(2.0 * a) + 2.0 * b * b + 0.3 * c;
  };
  const auto records = records_of(space, 512, 21, [&](const Configuration& c) {
    return fn(c.number("x0"), c.number("x1"), c.number("x2"));
  });
  const auto report = compute_importances(records, space, {}, 7);

  // same function with x0 and x2 swapped
  const auto swapped_records =
      records_of(space, 512, 21, [&](const Configuration& c) {
        return fn(c.number("x2"), c.number("x1"), c.number("x0"));
      });
  const auto swapped = compute_importances(swapped_records, space, {}, 7);
  CHECK(report.scores[0] == doctest::Approx(swapped.scores[2]).epsilon(0.08));
  CHECK(report.scores[2] == doctest::Approx(swapped.scores[0]).epsilon(0.08));
}

TEST_CASE("a pure-noise dimension barely shifts the other scores") {
  const auto space2 = unit_space(2);
  Rng noise(33);
  const auto base = records_of(space2, 1024, 13, [&](const Configuration& c) {
    return c.number("x0") + 2.0 * c.number("x1") + 0.01 * noise.next_gaussian();
  });
  const auto report2 = compute_importances(base, space2, {}, 3);

  const auto space3 = unit_space(3);
  std::vector<EvaluationRecord> extended;
  Rng pad(44);
  for (const auto& record : base) {
    EvaluationRecord e = record;
    e.config.values["x2"] = pad.next_double(); // pure noise input
    extended.push_back(std::move(e));
  }
  const auto report3 = compute_importances(extended, space3, {}, 3);
  CHECK(std::fabs(report3.scores[0] - report2.scores[0]) <= 0.05);
  CHECK(std::fabs(report3.scores[1] - report2.scores[1]) <= 0.05);
}

TEST_CASE("scores are invariant to metric rescaling") {
  const auto space = unit_space(2);
  const auto records = records_of(space, 256, 17, [](const Configuration& c) {
    return c.number("x0") * c.number("x0") + 0.5 * c.number("x1");
  });
  // scaling by a power of two is exact in floating point
  std::vector<EvaluationRecord> scaled = records;
  for (auto& record : scaled) record.metric *= 4.0;
  const auto a = compute_importances(records, space, {}, 19);
  const auto b = compute_importances(scaled, space, {}, 19);
  for (std::size_t j = 0; j < a.scores.size(); ++j) {
    CHECK(a.scores[j] == b.scores[j]); // exact
  }

  // a general affine map can flip near-tied split choices in floating
  // point, so the scores only agree up to those tie perturbations
  std::vector<EvaluationRecord> affine = records;
  for (auto& record : affine) record.metric = -3.7 + 2.9 * record.metric;
  const auto c = compute_importances(affine, space, {}, 19);
  for (std::size_t j = 0; j < a.scores.size(); ++j) {
    CHECK(a.scores[j] == doctest::Approx(c.scores[j]).epsilon(5e-3));
  }
}

TEST_CASE("constant metric degenerates cleanly") {
  const auto space = unit_space(2);
  const auto records = records_of(space, 64, 23, [](const Configuration&) {
    return 0.5;
  });
  const auto report = compute_importances(records, space, {}, 29);
  CHECK(report.degenerate);
  CHECK(report.residual == 0.0);
  for (double s : report.scores) CHECK(s == 0.0);
}

TEST_CASE("categorical dimensions participate in splits") {
  SearchSpace space(
      {Parameter{"x", ParamKind::Continuous, 0.0, 1.0, {}, Transform::None},
       Parameter{"m", ParamKind::Categorical, 0, 0, {"a", "b"}, Transform::None}});
  std::vector<EvaluationRecord> records;
  Rng rng(31);
  for (int i = 0; i < 256; ++i) {
    Configuration c;
    c.values["x"] = rng.next_double();
    const bool is_b = rng.next_double() < 0.5;
    c.values["m"] = std::string(is_b ? "b" : "a");
    records.push_back({c, (is_b ? 1.0 : 0.0) + 0.05 * c.number("x")});
  }
  const auto report = compute_importances(records, space, {}, 37);
  CHECK(report.scores[1] > 0.9); // the categorical carries the signal
  CHECK(report.scores[0] < 0.1);
}

TEST_CASE("preconditions") {
  const auto space = unit_space(2);
  const auto few = records_of(space, 16, 3, [](const Configuration& c) {
    return c.number("x0");
  });
  CHECK_THROWS_AS(compute_importances(few, space, {}, 1), ValidationError);
}

TEST_CASE("gbt sweep ranks eta first (directional)") {
  // small quasi-random sweep on a bundled task over the tuned 5-d space
  const auto space = default_space("mulch5");
  const auto task = std::make_shared<Dataset>(resolve_task("synthetic:train-1"));
  const auto objective = make_gbt_objective(task, {}, 555);
  std::vector<EvaluationRecord> records;
  for (const auto& config : sample(space, 192, SampleMode::Quasi, 41)) {
    records.push_back({config, objective(config, 1.0, 555).metric});
  }
  ForestConfig forest;
  forest.n_trees = 32;
  const auto report = compute_importances(records, space, forest, 43);
  CHECK(rank_parameters(report)[0] == "eta");
}
