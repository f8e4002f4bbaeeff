#pragma once

#include "mulch/dataset.hpp"
#include "mulch/gbt.hpp"
#include "mulch/lengthscale_box.hpp"
#include "mulch/mulch_mf.hpp"
#include "mulch/objective.hpp"
#include "mulch/priors.hpp"
#include "mulch/search_space.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mulch {

enum class Strategy { Random, Bo, FslBo, MulchMf };

std::string strategy_name(Strategy strategy);
Strategy strategy_from_name(const std::string& name);

struct ExperimentConfig {
  SearchSpace space;
  Strategy strategy = Strategy::Random;
  double budget = 50.0; // full-fidelity evaluation units
  std::shared_ptr<const PriorEnsemble> priors; // required for fsl-bo
  std::optional<LengthscaleBox> lengthscale_box;
  EarlyStopConfig early_stop;
  std::uint64_t seed = 0;
  double r_low = 0.1;     // mulch-mf only
  int init_samples = 8;   // bo / fsl-bo warm-start size
  int gp_starts = 4;
  int n_candidates = 256;

  void validate() const;
};

struct Observation {
  Configuration config;
  double fidelity = 1.0;
  double metric = 0.0;
  double wall_time = 0.0;
  bool failed = false;
  int iteration = 0;
  std::int64_t timestamp = 0; // logical sequence number
  double budget_after = 0.0;
};

struct ExperimentHistory {
  std::vector<Observation> observations;

  double total_wall_time() const;

  // running max of successful full-fidelity metrics, one entry per
  // observation (NaN until the first full-fidelity result)
  std::vector<double> best_seen_trace() const;
};

// best full-fidelity observation with cumulative budget <= at_budget;
// throws if no full-fidelity observation lies in that prefix
std::pair<Configuration, double> best_seen(const ExperimentHistory& history,
                                           double at_budget);

// warm-start samples drawn from the metalearned priors (default k = 8)
std::vector<Configuration> fsl_warm_start(const PriorEnsemble& priors,
                                          std::size_t k, std::uint64_t seed);

using ObservationSink = std::function<void(const Observation&)>;

ExperimentHistory run_experiment(const ExperimentConfig& config,
                                 const Objective& objective,
                                 const ObservationSink& sink = {});

// deterministic GBT objective over a task; the fidelity subsample is fixed
// per (experiment seed, fidelity) so repeated fidelities are comparable
Objective make_gbt_objective(std::shared_ptr<const Dataset> task,
                             const EarlyStopConfig& early_stop,
                             std::uint64_t experiment_seed);

struct BenchmarkTask {
  std::string name;
  std::shared_ptr<const Dataset> dataset;
};

struct BenchmarkRequest {
  std::vector<BenchmarkTask> tasks;
  std::vector<Strategy> strategies;
  int repeats = 1;
  double budget = 50.0;
  std::uint64_t seed = 0;
  int jobs = 1;
  SearchSpace space;
  std::shared_ptr<const PriorEnsemble> priors;
  std::optional<LengthscaleBox> lengthscale_box;
  EarlyStopConfig early_stop;
  double r_low = 0.1;
};

struct BenchmarkCell {
  std::string task;
  Strategy strategy = Strategy::Random;
  int repeat = 0;
  double final_accuracy = 0.0;
  double total_wall_time = 0.0;
  std::vector<double> best_seen_curve; // at budgets 1..ceil(B)
};

struct BenchmarkRow {
  std::string task;
  Strategy strategy = Strategy::Random;
  double median_accuracy = 0.0;
  double lower_quartile = 0.0;
  double upper_quartile = 0.0;
  double median_wall_time = 0.0;
  double normalized_time = 1.0; // vs random search on the same task
  int repeats = 0;
  std::vector<double> median_curve;
};

struct BenchmarkReport {
  std::vector<BenchmarkCell> cells;
  std::vector<BenchmarkRow> rows;
};

BenchmarkReport benchmark(const BenchmarkRequest& request);

} // namespace mulch
