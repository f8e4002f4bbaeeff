#include "mulch/engine.hpp"

#include "mulch/errors.hpp"
#include "mulch/gp.hpp"
#include "mulch/rng.hpp"
#include "mulch/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

namespace mulch {

std::string strategy_name(Strategy strategy) {
  switch (strategy) {
    case Strategy::Random: return "random";
    case Strategy::Bo: return "bo";
    case Strategy::FslBo: return "fsl-bo";
    case Strategy::MulchMf: return "mulch-mf";
  }
  return "unknown";
}

Strategy strategy_from_name(const std::string& name) {
  if (name == "random") return Strategy::Random;
  if (name == "bo") return Strategy::Bo;
  if (name == "fsl-bo") return Strategy::FslBo;
  if (name == "mulch-mf") return Strategy::MulchMf;
  throw ValidationError("unknown strategy '" + name + "'");
}

void ExperimentConfig::validate() const {
  if (!(budget >= 1.0)) throw ValidationError("experiment budget must be >= 1");
  if (strategy == Strategy::FslBo && !priors) {
    throw ValidationError("fsl-bo requires a prior ensemble");
  }
  if (space.dimension() == 0) throw ValidationError("experiment space is empty");
}

double ExperimentHistory::total_wall_time() const {
  double acc = 0.0;
  for (const auto& obs : observations) acc += obs.wall_time;
  return acc;
}

std::vector<double> ExperimentHistory::best_seen_trace() const {
  std::vector<double> trace;
  trace.reserve(observations.size());
  double best = std::numeric_limits<double>::quiet_NaN();
  for (const auto& obs : observations) {
    if (!obs.failed && obs.fidelity == 1.0 && (std::isnan(best) || obs.metric > best)) {
      best = obs.metric;
    }
    trace.push_back(best);
  }
  return trace;
}

std::pair<Configuration, double> best_seen(const ExperimentHistory& history,
                                           double at_budget) {
  const Observation* best = nullptr;
  for (const auto& obs : history.observations) {
    if (obs.budget_after > at_budget) break;
    if (obs.failed || obs.fidelity != 1.0) continue;
    if (!best || obs.metric > best->metric) best = &obs;
  }
  if (!best) {
    throw ValidationError("best_seen: no full-fidelity observation within budget");
  }
  return {best->config, best->metric};
}

std::vector<Configuration> fsl_warm_start(const PriorEnsemble& priors,
                                          std::size_t k, std::uint64_t seed) {
  if (k < 1) throw ValidationError("fsl_warm_start: k must be >= 1");
  return sample_prior(priors, k, seed);
}

namespace {

struct Recorder {
  ExperimentHistory& history;
  const ObservationSink& sink;
  std::int64_t sequence = 0;

  void push(Observation obs) {
    obs.timestamp = sequence++;
    if (sink) sink(obs);
    history.observations.push_back(std::move(obs));
  }
};

Observation observe(const Objective& objective, const Configuration& config,
                    double fidelity, std::uint64_t seed, int iteration,
                    double budget_after) {
  Observation obs;
  obs.config = config;
  obs.fidelity = fidelity;
  obs.iteration = iteration;
  obs.budget_after = budget_after;
  try {
    const auto outcome = objective(config, fidelity, seed);
    obs.metric = outcome.metric;
    obs.wall_time = outcome.wall_time;
    obs.failed = outcome.failed;
  } catch (const std::exception&) {
    obs.failed = true;
  }
  return obs;
}

void run_random(const ExperimentConfig& config, const Objective& objective,
                Recorder& rec) {
  const auto n = static_cast<std::size_t>(std::floor(config.budget));
  const auto configs = sample(config.space, n, SampleMode::Pseudo,
                              derive_seed(config.seed, 0x726e64ULL));
  for (std::size_t i = 0; i < n; ++i) {
    rec.push(observe(objective, configs[i], 1.0, derive_seed(config.seed, 1, i),
                     static_cast<int>(i), static_cast<double>(i + 1)));
  }
}

// shared loop for bo and fsl-bo: k warm-start samples, then EI with the
// configured lengthscale box; fsl-bo differs only in its prior ensemble
void run_bo(const ExperimentConfig& config, const Objective& objective,
            Recorder& rec, const PriorEnsemble& init_source,
            const LengthscaleBox* box) {
  const auto budget = static_cast<std::size_t>(std::floor(config.budget));
  const auto n_init =
      std::min<std::size_t>(static_cast<std::size_t>(config.init_samples), budget);
  const auto init_configs =
      fsl_warm_start(init_source, n_init, derive_seed(config.seed, 0x696e6974ULL));

  std::size_t evals = 0;
  for (; evals < n_init; ++evals) {
    rec.push(observe(objective, init_configs[evals], 1.0,
                     derive_seed(config.seed, 1, evals), static_cast<int>(evals),
                     static_cast<double>(evals + 1)));
  }

  while (evals < budget) {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    std::vector<Eigen::Index> keep;
    const auto& obs = rec.history.observations;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(obs.size()); ++i) {
      if (!obs[static_cast<std::size_t>(i)].failed) keep.push_back(i);
    }
    Configuration next;
    if (keep.empty()) {
      next = sample_prior(init_source, 1, derive_seed(config.seed, 0xfa11ULL, evals))
                 .front();
    } else {
      X.resize(static_cast<Eigen::Index>(keep.size()),
               static_cast<Eigen::Index>(config.space.dimension()));
      y.resize(static_cast<Eigen::Index>(keep.size()));
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < keep.size(); ++i) {
        const auto& o = obs[static_cast<std::size_t>(keep[i])];
        const auto enc = encode(config.space, o.config);
        for (std::size_t j = 0; j < enc.size(); ++j) {
          X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = enc[j];
        }
        y(static_cast<Eigen::Index>(i)) = o.metric;
        best = std::max(best, o.metric);
      }
      const auto gp = GpModel::fit(X, y, box, config.gp_starts,
                                   derive_seed(config.seed, 0x666974ULL, evals));
      next = suggest(gp, config.space, best,
                     static_cast<std::size_t>(config.n_candidates),
                     derive_seed(config.seed, 0x737567ULL, evals));
    }
    rec.push(observe(objective, next, 1.0, derive_seed(config.seed, 1, evals),
                     static_cast<int>(evals), static_cast<double>(evals + 1)));
    ++evals;
  }
}

void run_mulch(const ExperimentConfig& config, const Objective& objective,
               Recorder& rec) {
  MulchMfConfig mf;
  mf.total_budget = config.budget;
  mf.r_low = config.r_low;
  mf.seed = config.seed;
  mf.gp_starts = config.gp_starts;
  mf.n_candidates = config.n_candidates;

  const LengthscaleBox* box =
      config.lengthscale_box ? &*config.lengthscale_box : nullptr;
  const auto result = run_mulch_mf(mf, config.space, objective,
                                   config.priors.get(), box);

  // budget_after is recomputed from counts, matching the ledger formula
  int lows = 0, highs = 0, iterations = 0;
  auto budget_now = [&](bool mid_iteration) {
    double b = static_cast<double>(std::min(lows, mf.n_init_low)) * mf.r_low +
               static_cast<double>(std::min(highs, mf.n_init_high)) +
               static_cast<double>(iterations) * (mf.r_low + 1.0);
    if (mid_iteration) b += mf.r_low;
    return b;
  };
  auto push = [&](const FidelityObservation& fo, int iter, bool mid) {
    Observation obs;
    obs.config = fo.config;
    obs.fidelity = fo.fidelity;
    obs.metric = fo.metric;
    obs.wall_time = fo.wall_time;
    obs.failed = fo.failed;
    obs.iteration = iter;
    obs.budget_after = budget_now(mid);
    rec.push(std::move(obs));
  };

  const auto n_init = static_cast<std::size_t>(mf.n_init_low + mf.n_init_high);
  std::size_t i = 0;
  for (; i < n_init && i < result.history.size(); ++i) {
    (result.history[i].fidelity == 1.0 ? highs : lows) += 1;
    push(result.history[i], 0, false);
  }
  int iteration = 0;
  while (i < result.history.size()) {
    ++iteration;
    push(result.history[i], iteration, true); // low-fidelity half
    ++i;
    iterations = iteration;
    if (i < result.history.size()) {
      push(result.history[i], iteration, false);
      ++i;
    }
  }
}

} // namespace

ExperimentHistory run_experiment(const ExperimentConfig& config,
                                 const Objective& objective,
                                 const ObservationSink& sink) {
  config.validate();
  ExperimentHistory history;
  Recorder rec{history, sink};

  switch (config.strategy) {
    case Strategy::Random:
      run_random(config, objective, rec);
      break;
    case Strategy::Bo: {
      const auto uniform = uniform_ensemble(config.space);
      const LengthscaleBox* box =
          config.lengthscale_box ? &*config.lengthscale_box : nullptr;
      run_bo(config, objective, rec, uniform, box);
      break;
    }
    case Strategy::FslBo: {
      const LengthscaleBox* box =
          config.lengthscale_box ? &*config.lengthscale_box : nullptr;
      run_bo(config, objective, rec, *config.priors, box);
      break;
    }
    case Strategy::MulchMf:
      run_mulch(config, objective, rec);
      break;
  }
  return history;
}

Objective make_gbt_objective(std::shared_ptr<const Dataset> task,
                             const EarlyStopConfig& early_stop,
                             std::uint64_t experiment_seed) {
  return [task, early_stop, experiment_seed](const Configuration& config,
                                             double fidelity,
                                             std::uint64_t eval_seed) {
    const auto hp = GbtHyperparams::from_config(config);
    // one subsample per (experiment, fidelity): repeated fidelities see the
    // same training subset
    const auto fidelity_bits = static_cast<std::uint64_t>(
        std::llround(fidelity * 1e6));
    const Dataset scoped = subsample_fidelity(
        *task, fidelity, derive_seed(experiment_seed, 0x66696478ULL, fidelity_bits));
    const auto result = train(scoped, hp, early_stop, eval_seed);
    EvalOutcome outcome;
    outcome.metric = result.best_accuracy;
    outcome.wall_time = result.wall_time;
    return outcome;
  };
}

namespace {

double quartile_of(std::vector<double> values, double q) {
  return quantile(std::move(values), q);
}

} // namespace

BenchmarkReport benchmark(const BenchmarkRequest& request) {
  if (request.repeats < 1) throw ValidationError("benchmark: repeats must be >= 1");
  if (request.tasks.empty() || request.strategies.empty()) {
    throw ValidationError("benchmark: tasks and strategies must be non-empty");
  }

  struct CellJob {
    std::size_t task_idx;
    std::size_t strategy_idx;
    int repeat;
  };
  std::vector<CellJob> jobs;
  for (std::size_t t = 0; t < request.tasks.size(); ++t) {
    for (std::size_t s = 0; s < request.strategies.size(); ++s) {
      for (int r = 0; r < request.repeats; ++r) jobs.push_back({t, s, r});
    }
  }

  BenchmarkReport report;
  report.cells.resize(jobs.size());
  const auto budget_points = static_cast<std::size_t>(std::ceil(request.budget));

  auto run_cell = [&](std::size_t job_idx) {
    const auto& job = jobs[job_idx];
    const auto& task = request.tasks[job.task_idx];
    ExperimentConfig config;
    config.space = request.space;
    config.strategy = request.strategies[job.strategy_idx];
    config.budget = request.budget;
    config.priors = request.priors;
    config.lengthscale_box = request.lengthscale_box;
    config.early_stop = request.early_stop;
    config.r_low = request.r_low;
    config.seed = derive_seed(request.seed, job.task_idx * 64 + job.strategy_idx,
                              static_cast<std::uint64_t>(job.repeat));
    if (config.strategy == Strategy::FslBo && !config.priors) {
      throw ValidationError("benchmark: fsl-bo requested without priors");
    }

    const auto objective =
        make_gbt_objective(task.dataset, config.early_stop, config.seed);
    const auto history = run_experiment(config, objective);

    BenchmarkCell cell;
    cell.task = task.name;
    cell.strategy = config.strategy;
    cell.repeat = job.repeat;
    cell.total_wall_time = history.total_wall_time();
    const auto final_best = best_seen(history, history.observations.empty()
                                                   ? request.budget
                                                   : history.observations.back().budget_after);
    cell.final_accuracy = final_best.second;
    cell.best_seen_curve.resize(budget_points,
                                std::numeric_limits<double>::quiet_NaN());
    for (std::size_t b = 1; b <= budget_points; ++b) {
      try {
        cell.best_seen_curve[b - 1] =
            best_seen(history, static_cast<double>(b)).second;
      } catch (const ValidationError&) {
        // no full-fidelity observation yet at this budget
      }
    }
    report.cells[job_idx] = std::move(cell);
  };

  const int jobs_n = std::max(1, request.jobs);
  if (jobs_n == 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) run_cell(i);
  } else {
    std::atomic<std::size_t> cursor{0};
    std::vector<std::thread> workers;
    std::exception_ptr error;
    std::mutex error_mutex;
    for (int w = 0; w < jobs_n; ++w) {
      workers.emplace_back([&] {
        for (;;) {
          const std::size_t i = cursor.fetch_add(1);
          if (i >= jobs.size()) return;
          try {
            run_cell(i);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
    for (auto& worker : workers) worker.join();
    if (error) std::rethrow_exception(error);
  }

  // aggregate per (task, strategy); time normalized by random search's
  // median on the same task when present
  for (std::size_t t = 0; t < request.tasks.size(); ++t) {
    double random_median_time = 0.0;
    bool have_random = false;
    for (std::size_t s = 0; s < request.strategies.size(); ++s) {
      if (request.strategies[s] != Strategy::Random) continue;
      std::vector<double> times;
      for (const auto& cell : report.cells) {
        if (cell.task == request.tasks[t].name && cell.strategy == Strategy::Random) {
          times.push_back(cell.total_wall_time);
        }
      }
      if (!times.empty()) {
        random_median_time = quartile_of(times, 0.5);
        have_random = true;
      }
    }
    for (std::size_t s = 0; s < request.strategies.size(); ++s) {
      std::vector<double> accs, times;
      std::vector<const BenchmarkCell*> cells;
      for (const auto& cell : report.cells) {
        if (cell.task == request.tasks[t].name &&
            cell.strategy == request.strategies[s]) {
          accs.push_back(cell.final_accuracy);
          times.push_back(cell.total_wall_time);
          cells.push_back(&cell);
        }
      }
      BenchmarkRow row;
      row.task = request.tasks[t].name;
      row.strategy = request.strategies[s];
      row.repeats = static_cast<int>(accs.size());
      row.median_accuracy = quartile_of(accs, 0.5);
      row.lower_quartile = quartile_of(accs, 0.25);
      row.upper_quartile = quartile_of(accs, 0.75);
      row.median_wall_time = quartile_of(times, 0.5);
      row.normalized_time = have_random && random_median_time > 0.0
                                ? row.median_wall_time / random_median_time
                                : std::numeric_limits<double>::quiet_NaN();
      row.median_curve.resize(budget_points);
      for (std::size_t b = 0; b < budget_points; ++b) {
        std::vector<double> column;
        for (const auto* cell : cells) {
          if (!std::isnan(cell->best_seen_curve[b])) {
            column.push_back(cell->best_seen_curve[b]);
          }
        }
        row.median_curve[b] = column.empty()
                                  ? std::numeric_limits<double>::quiet_NaN()
                                  : quartile_of(column, 0.5);
      }
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

} // namespace mulch
