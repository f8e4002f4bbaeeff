// mulch: model-aware, cost-aware hyperparameter tuning for gradient boosted
// trees. Subcommands: tune, benchmark, fanova, fidelity-scores, learn-priors,
// serve, report.

#include "mulch/dataset.hpp"
#include "mulch/engine.hpp"
#include "mulch/errors.hpp"
#include "mulch/fanova.hpp"
#include "mulch/fidelity.hpp"
#include "mulch/gbt.hpp"
#include "mulch/gp.hpp"
#include "mulch/priors.hpp"
#include "mulch/rng.hpp"
#include "mulch/serialization.hpp"
#include "mulch/service.hpp"
#include "mulch/service_http.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using mulch::Json;

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// --config JSON provides defaults; explicitly passed flags win
Json load_config_file(const std::string& path) {
  if (path.empty()) return Json::object();
  std::ifstream in(path);
  if (!in) throw mulch::ValidationError("cannot open config file '" + path + "'");
  Json j;
  in >> j;
  return j;
}

template <typename T>
void apply_config(const Json& config, const CLI::Option* option,
                  const std::string& key, T* value) {
  if (option->count() > 0) return;
  if (config.contains(key)) *value = config.at(key).get<T>();
}

bool glob_component_matches(const std::string& name, const std::string& pattern) {
  const auto star = pattern.find('*');
  if (star == std::string::npos) return name == pattern;
  const std::string prefix = pattern.substr(0, star);
  const std::string suffix = pattern.substr(star + 1);
  return name.size() >= prefix.size() + suffix.size() &&
         name.rfind(prefix, 0) == 0 &&
         name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void glob_walk(const fs::path& base, const std::vector<std::string>& parts,
               std::size_t idx, std::vector<std::string>* out) {
  if (idx == parts.size()) {
    if (fs::is_regular_file(base)) out->push_back(base.string());
    return;
  }
  const auto& part = parts[idx];
  if (part.find('*') == std::string::npos) {
    glob_walk(base / part, parts, idx + 1, out);
    return;
  }
  if (!fs::is_directory(base)) return;
  for (const auto& entry : fs::directory_iterator(base)) {
    if (glob_component_matches(entry.path().filename().string(), part)) {
      glob_walk(entry.path(), parts, idx + 1, out);
    }
  }
}

// '*' may appear in any path component; a bare directory collects its
// .jsonl files recursively
std::vector<std::string> expand_glob(const std::string& pattern) {
  std::vector<std::string> out;
  if (pattern.find('*') == std::string::npos) {
    if (fs::is_directory(pattern)) {
      for (const auto& entry : fs::recursive_directory_iterator(pattern)) {
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
          out.push_back(entry.path().string());
        }
      }
      std::sort(out.begin(), out.end());
      return out;
    }
    return {pattern};
  }
  const fs::path p(pattern);
  std::vector<std::string> parts;
  for (const auto& part : p.relative_path()) parts.push_back(part.string());
  const fs::path base = p.is_absolute() ? p.root_path() : fs::path(".");
  glob_walk(base, parts, 0, &out);
  std::sort(out.begin(), out.end());
  return out;
}

struct TuneOptions {
  std::string task = "synthetic:moons";
  std::string space = "mulch5";
  std::string strategy = "fsl-bo";
  double budget = 50.0;
  std::uint64_t seed = 0;
  std::string priors_path;
  double r_low = 0.1;
  int patience = 10;
  bool early_stop = false;
  std::string out = "mulch-runs";
  std::string config_path;
  std::string label_column = "label";
};

int cmd_tune(const TuneOptions& opt) {
  const auto space = mulch::load_space_arg(opt.space);
  mulch::ExperimentConfig config;
  config.space = space;
  config.strategy = mulch::strategy_from_name(opt.strategy);
  config.budget = opt.budget;
  config.seed = opt.seed;
  config.r_low = opt.r_low;
  config.early_stop.enabled = opt.early_stop;
  config.early_stop.patience = opt.patience;

  if (!opt.priors_path.empty()) {
    auto priors = mulch::load_priors(opt.priors_path);
    config.priors = std::make_shared<mulch::PriorEnsemble>(std::move(priors.ensemble));
    if (priors.lengthscale_box) config.lengthscale_box = priors.lengthscale_box;
  }

  auto task = std::make_shared<mulch::Dataset>(
      mulch::resolve_task(opt.task, opt.seed, opt.label_column));
  const auto objective =
      mulch::make_gbt_objective(task, config.early_stop, config.seed);

  const fs::path out_dir(opt.out);
  fs::create_directories(out_dir);
  std::ofstream history_out(out_dir / "history.jsonl");
  if (!history_out) {
    throw mulch::ValidationError("cannot write to '" + out_dir.string() + "'");
  }
  const auto history = mulch::run_experiment(
      config, objective,
      [&](const mulch::Observation& obs) { // persisted incrementally
        mulch::append_observation_jsonl(history_out, obs);
        history_out.flush();
      });

  const auto [best_config, best_metric] =
      mulch::best_seen(history, history.observations.back().budget_after);
  Json summary{{"task", opt.task},
               {"strategy", opt.strategy},
               {"budget", opt.budget},
               {"seed", opt.seed},
               {"evaluations", history.observations.size()},
               {"best", {{"config", mulch::config_to_json(best_config)},
                         {"metric", best_metric}}},
               {"total_wall_time", history.total_wall_time()}};
  std::ofstream summary_out(out_dir / "summary.json");
  summary_out << summary.dump(2) << "\n";

  std::cout << "best accuracy " << best_metric << " after "
            << history.observations.size() << " evaluations; history in "
            << (out_dir / "history.jsonl").string() << "\n";
  return 0;
}

struct BenchmarkOptions {
  std::vector<std::string> tasks;
  std::vector<std::string> strategies;
  std::string space = "mulch5";
  int repeats = 3;
  double budget = 50.0;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string priors_path;
  double r_low = 0.1;
  int patience = 10;
  bool early_stop = false;
  std::string out = "mulch-benchmark";
  std::string config_path;
};

int cmd_benchmark(const BenchmarkOptions& opt) {
  mulch::BenchmarkRequest request;
  request.space = mulch::load_space_arg(opt.space);
  request.repeats = opt.repeats;
  request.budget = opt.budget;
  request.seed = opt.seed;
  request.jobs = opt.jobs;
  request.r_low = opt.r_low;
  request.early_stop.enabled = opt.early_stop;
  request.early_stop.patience = opt.patience;

  for (const auto& name : opt.tasks) {
    request.tasks.push_back(
        {name, std::make_shared<mulch::Dataset>(mulch::resolve_task(name, opt.seed))});
  }
  for (const auto& name : opt.strategies) {
    request.strategies.push_back(mulch::strategy_from_name(name));
  }
  if (!opt.priors_path.empty()) {
    auto priors = mulch::load_priors(opt.priors_path);
    request.priors =
        std::make_shared<mulch::PriorEnsemble>(std::move(priors.ensemble));
    if (priors.lengthscale_box) request.lengthscale_box = priors.lengthscale_box;
  }

  const auto report = mulch::benchmark(request);

  const fs::path out_dir(opt.out);
  fs::create_directories(out_dir);

  std::ofstream csv(out_dir / "report.csv");
  csv << "task,strategy,median_accuracy,lower_quartile,upper_quartile,"
         "median_wall_time,normalized_time,repeats\n";
  for (const auto& row : report.rows) {
    csv << row.task << "," << mulch::strategy_name(row.strategy) << ","
        << format_double(row.median_accuracy) << ","
        << format_double(row.lower_quartile) << ","
        << format_double(row.upper_quartile) << ","
        << format_double(row.median_wall_time) << ","
        << format_double(row.normalized_time) << "," << row.repeats << "\n";
  }

  Json j;
  j["rows"] = Json::array();
  for (const auto& row : report.rows) {
    Json item{{"task", row.task},
              {"strategy", mulch::strategy_name(row.strategy)},
              {"median_accuracy", row.median_accuracy},
              {"lower_quartile", row.lower_quartile},
              {"upper_quartile", row.upper_quartile},
              {"median_wall_time", row.median_wall_time},
              {"repeats", row.repeats}};
    if (std::isfinite(row.normalized_time)) {
      item["normalized_time"] = row.normalized_time;
    }
    Json curve = Json::array();
    for (double v : row.median_curve) {
      if (std::isnan(v)) {
        curve.push_back(nullptr);
      } else {
        curve.push_back(v);
      }
    }
    item["median_best_seen"] = std::move(curve);
    j["rows"].push_back(std::move(item));
  }
  std::ofstream json_out(out_dir / "report.json");
  json_out << j.dump(2) << "\n";

  std::cout << "benchmark report written to " << out_dir.string() << "\n";
  return 0;
}

struct FanovaOptions {
  std::string evals_path;
  std::string space = "mulch5";
  std::string out = "importances.json";
  int trees = 64;
  std::uint64_t seed = 0;
};

int cmd_fanova(const FanovaOptions& opt) {
  const auto space = mulch::load_space_arg(opt.space);
  std::ifstream in(opt.evals_path);
  if (!in) throw mulch::ValidationError("cannot open '" + opt.evals_path + "'");

  std::string line;
  if (!std::getline(in, line)) throw mulch::ValidationError("evals file is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  int metric_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "metric") metric_col = static_cast<int>(i);
  }
  if (metric_col < 0) {
    throw mulch::ValidationError("evals file needs a 'metric' column");
  }

  std::vector<mulch::EvaluationRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != header.size()) {
      throw mulch::ValidationError("evals row has wrong cell count");
    }
    mulch::EvaluationRecord record;
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (static_cast<int>(i) == metric_col) {
        record.metric = std::stod(cells[i]);
      } else {
        const auto& p = space.parameter(header[i]);
        if (p.kind == mulch::ParamKind::Categorical) {
          record.config.values[p.name] = cells[i];
        } else {
          record.config.values[p.name] = std::stod(cells[i]);
        }
      }
    }
    records.push_back(std::move(record));
  }

  mulch::ForestConfig forest;
  forest.n_trees = opt.trees;
  const auto report = mulch::compute_importances(records, space, forest, opt.seed);
  std::ofstream out(opt.out);
  out << mulch::importance_report_to_json(report).dump(2) << "\n";
  std::cout << "importances written to " << opt.out << "\n";
  return 0;
}

struct FidelityScoreOptions {
  std::string sweep_path;
  std::string out = "scores.csv";
};

int cmd_fidelity_scores(const FidelityScoreOptions& opt) {
  std::ifstream in(opt.sweep_path);
  if (!in) throw mulch::ValidationError("cannot open '" + opt.sweep_path + "'");
  std::string line;
  if (!std::getline(in, line)) throw mulch::ValidationError("sweep file is empty");
  // columns: config-id, fidelity, metric
  std::map<double, std::map<std::string, double>> by_fidelity;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, fidelity, metric;
    if (!std::getline(ss, id, ',') || !std::getline(ss, fidelity, ',') ||
        !std::getline(ss, metric, ',')) {
      throw mulch::ValidationError("sweep row needs config-id,fidelity,metric");
    }
    by_fidelity[std::stod(fidelity)][id] = std::stod(metric);
  }
  if (by_fidelity.find(1.0) == by_fidelity.end()) {
    throw mulch::ValidationError("sweep is missing fidelity 1.0 rows");
  }

  // align all lists on the full-fidelity id set, in sorted id order
  std::vector<std::string> ids;
  for (const auto& [id, metric] : by_fidelity.at(1.0)) ids.push_back(id);

  mulch::FidelitySweep sweep;
  for (const auto& [fidelity, metrics] : by_fidelity) {
    std::vector<double> column;
    for (const auto& id : ids) {
      auto it = metrics.find(id);
      if (it == metrics.end()) {
        throw mulch::ValidationError("config '" + id + "' missing at fidelity " +
                                     format_double(fidelity));
      }
      column.push_back(it->second);
    }
    sweep.fidelities.push_back(fidelity);
    sweep.metrics.push_back(std::move(column));
  }

  const auto rows = mulch::score_table(sweep);
  std::ofstream out(opt.out);
  out << "fidelity,correlation,precision,recall\n";
  for (const auto& row : rows) {
    out << format_double(row.fidelity) << "," << format_double(row.correlation)
        << "," << format_double(row.precision) << "," << format_double(row.recall)
        << "\n";
  }
  std::cout << "scores written to " << opt.out << "\n";
  return 0;
}

struct LearnPriorsOptions {
  std::string histories_glob;
  std::string space = "mulch5";
  std::string out = "priors.json";
  int top_count = 0;      // 0: use top_fraction
  double top_fraction = 0.1;
  double q_lo = 0.05;
  double q_hi = 0.95;
  std::uint64_t seed = 0;
};

int cmd_learn_priors(const LearnPriorsOptions& opt) {
  const auto space = mulch::load_space_arg(opt.space);
  const auto files = expand_glob(opt.histories_glob);
  if (files.empty()) {
    throw mulch::ValidationError("no history files match '" + opt.histories_glob + "'");
  }

  std::vector<mulch::TaskHistory> histories;
  for (const auto& file : files) {
    mulch::TaskHistory history;
    history.task = fs::path(file).parent_path().filename().string() + "/" +
                   fs::path(file).filename().string();
    for (const auto& obs : mulch::read_history_jsonl(file)) {
      if (obs.failed || obs.fidelity != 1.0) continue;
      history.configs.push_back(obs.config);
      history.metrics.push_back(obs.metric);
    }
    if (history.configs.empty()) continue;
    histories.push_back(std::move(history));
  }
  if (histories.empty()) {
    throw mulch::ValidationError("history files contain no usable observations");
  }

  std::size_t per_task = static_cast<std::size_t>(opt.top_count);
  if (per_task == 0) {
    std::size_t shortest = histories.front().configs.size();
    for (const auto& h : histories) shortest = std::min(shortest, h.configs.size());
    per_task = std::max<std::size_t>(
        1, static_cast<std::size_t>(opt.top_fraction * static_cast<double>(shortest)));
  }

  const auto pool = mulch::aggregate_top_configs(histories, per_task);
  mulch::QuantilePairs pairs;
  for (const auto& p : space.parameters()) pairs[p.name] = {opt.q_lo, opt.q_hi};

  mulch::PriorsFile priors;
  priors.ensemble = mulch::build_ensemble(pool, space, pairs);

  // lengthscale box: quantiles of the per-task best-fit GP lengthscales
  std::vector<std::vector<double>> lengthscales;
  for (const auto& history : histories) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(history.configs.size()),
                      static_cast<Eigen::Index>(space.dimension()));
    Eigen::VectorXd y(static_cast<Eigen::Index>(history.configs.size()));
    for (std::size_t i = 0; i < history.configs.size(); ++i) {
      const auto enc = mulch::encode(space, history.configs[i]);
      for (std::size_t j = 0; j < enc.size(); ++j) {
        X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = enc[j];
      }
      y(static_cast<Eigen::Index>(i)) = history.metrics[i];
    }
    const auto gp = mulch::GpModel::fit(X, y, nullptr, 4,
                                        mulch::derive_seed(opt.seed, 0x6c73ULL));
    std::vector<double> ls(gp.kernel().lengthscales.data(),
                           gp.kernel().lengthscales.data() +
                               gp.kernel().lengthscales.size());
    lengthscales.push_back(std::move(ls));
  }
  if (lengthscales.size() >= 2) {
    priors.lengthscale_box =
        mulch::learn_lengthscale_box(lengthscales, opt.q_lo, opt.q_hi);
  }

  mulch::save_priors(priors, opt.out);
  std::cout << "priors learned from " << histories.size() << " histories ("
            << pool.size() << " pooled configs) -> " << opt.out << "\n";
  return 0;
}

struct ServeOptions {
  int port = 8080;
  std::string data_dir;
  std::string priors_path;
};

int cmd_serve(const ServeOptions& opt) {
  mulch::ServiceConfig config;
  config.data_dir = opt.data_dir;
  if (config.data_dir.empty()) {
    const char* env = std::getenv("MULCH_DATA_DIR");
    config.data_dir = env ? env : "mulch-data";
  }
  if (!opt.priors_path.empty()) {
    auto priors = mulch::load_priors(opt.priors_path);
    config.priors =
        std::make_shared<mulch::PriorEnsemble>(std::move(priors.ensemble));
    if (priors.lengthscale_box) config.lengthscale_box = priors.lengthscale_box;
  }
  mulch::SuggestionService service(config);
  return mulch::serve_http(service, "0.0.0.0", opt.port);
}

struct ReportOptions {
  std::string runs_dir;
  std::string out = "curves.csv";
};

int cmd_report(const ReportOptions& opt) {
  std::vector<std::string> files = expand_glob(opt.runs_dir);
  if (files.size() == 1 && !fs::is_directory(opt.runs_dir) &&
      fs::path(files[0]).extension() != ".jsonl") {
    throw mulch::ValidationError("--runs expects a directory or history files");
  }
  std::vector<std::pair<std::string, std::vector<mulch::Observation>>> runs;
  for (const auto& file : files) {
    if (fs::path(file).extension() != ".jsonl") continue;
    auto observations = mulch::read_history_jsonl(file);
    if (observations.empty()) continue;
    std::string name = fs::path(file).parent_path().filename().string();
    if (name.empty()) name = fs::path(file).stem().string();
    runs.emplace_back(name, std::move(observations));
  }
  if (runs.empty()) {
    throw mulch::ValidationError("no history files under '" + opt.runs_dir + "'");
  }

  double max_budget = 0.0;
  for (const auto& [name, observations] : runs) {
    max_budget = std::max(max_budget, observations.back().budget_after);
  }
  const auto points = static_cast<std::size_t>(std::ceil(max_budget));

  std::ofstream out(opt.out);
  out << "budget";
  for (const auto& [name, observations] : runs) out << "," << name;
  out << "\n";
  for (std::size_t b = 1; b <= points; ++b) {
    out << b;
    for (const auto& [name, observations] : runs) {
      mulch::ExperimentHistory history;
      history.observations = observations;
      out << ",";
      try {
        out << format_double(
            mulch::best_seen(history, static_cast<double>(b)).second);
      } catch (const mulch::ValidationError&) {
        // no full-fidelity observation yet at this budget
      }
    }
    out << "\n";
  }
  std::cout << "curves written to " << opt.out << "\n";
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"model-aware, cost-aware hyperparameter tuning for GBTs"};
  app.require_subcommand(1);

  TuneOptions tune;
  auto* tune_cmd = app.add_subcommand("tune", "run one tuning experiment");
  auto* tune_task = tune_cmd->add_option("--task", tune.task, "synthetic:<name> or CSV path");
  auto* tune_space = tune_cmd->add_option("--space", tune.space, "space preset or JSON file");
  auto* tune_strategy =
      tune_cmd->add_option("--strategy", tune.strategy, "random|bo|fsl-bo|mulch-mf");
  auto* tune_budget = tune_cmd->add_option("--budget", tune.budget);
  auto* tune_seed = tune_cmd->add_option("--seed", tune.seed);
  auto* tune_priors = tune_cmd->add_option("--priors", tune.priors_path, "priors.json");
  auto* tune_rlow = tune_cmd->add_option("--r-low", tune.r_low, "mulch-mf low fidelity");
  auto* tune_patience = tune_cmd->add_option("--patience", tune.patience);
  auto* tune_es = tune_cmd->add_flag("--early-stop", tune.early_stop);
  auto* tune_out = tune_cmd->add_option("--out", tune.out, "output directory");
  tune_cmd->add_option("--label", tune.label_column, "CSV label column");
  tune_cmd->add_option("--config", tune.config_path, "JSON config file");

  BenchmarkOptions bench;
  auto* bench_cmd = app.add_subcommand("benchmark", "compare strategies over tasks");
  auto* bench_tasks = bench_cmd->add_option("--task", bench.tasks, "task (repeatable)");
  auto* bench_strategies =
      bench_cmd->add_option("--strategy", bench.strategies, "strategy (repeatable)");
  auto* bench_space = bench_cmd->add_option("--space", bench.space);
  auto* bench_repeats = bench_cmd->add_option("--repeats", bench.repeats);
  auto* bench_budget = bench_cmd->add_option("--budget", bench.budget);
  auto* bench_seed = bench_cmd->add_option("--seed", bench.seed);
  bench_cmd->add_option("--jobs", bench.jobs, "parallel cells");
  auto* bench_priors = bench_cmd->add_option("--priors", bench.priors_path);
  auto* bench_rlow = bench_cmd->add_option("--r-low", bench.r_low);
  auto* bench_patience = bench_cmd->add_option("--patience", bench.patience);
  auto* bench_es = bench_cmd->add_flag("--early-stop", bench.early_stop);
  auto* bench_out = bench_cmd->add_option("--out", bench.out);
  bench_cmd->add_option("--config", bench.config_path);

  FanovaOptions fanova;
  auto* fanova_cmd = app.add_subcommand("fanova", "parameter importance scores");
  fanova_cmd->add_option("--evals", fanova.evals_path, "evals.csv")->required();
  fanova_cmd->add_option("--space", fanova.space);
  fanova_cmd->add_option("--out", fanova.out);
  fanova_cmd->add_option("--trees", fanova.trees);
  fanova_cmd->add_option("--seed", fanova.seed);

  FidelityScoreOptions fscores;
  auto* fscores_cmd =
      app.add_subcommand("fidelity-scores", "correlation/precision/recall table");
  fscores_cmd->add_option("--sweep", fscores.sweep_path, "sweep.csv")->required();
  fscores_cmd->add_option("--out", fscores.out);

  LearnPriorsOptions learn;
  auto* learn_cmd = app.add_subcommand("learn-priors", "metalearn prior densities");
  learn_cmd->add_option("--histories", learn.histories_glob, "glob or directory")
      ->required();
  learn_cmd->add_option("--space", learn.space);
  learn_cmd->add_option("--out", learn.out);
  learn_cmd->add_option("--top-count", learn.top_count, "top configs per task");
  learn_cmd->add_option("--top-fraction", learn.top_fraction);
  learn_cmd->add_option("--q-lo", learn.q_lo);
  learn_cmd->add_option("--q-hi", learn.q_hi);
  learn_cmd->add_option("--seed", learn.seed);

  ServeOptions serve;
  auto* serve_cmd = app.add_subcommand("serve", "run the suggestion service");
  serve_cmd->add_option("--port", serve.port);
  serve_cmd->add_option("--data-dir", serve.data_dir, "default $MULCH_DATA_DIR");
  serve_cmd->add_option("--priors", serve.priors_path);

  ReportOptions report;
  auto* report_cmd = app.add_subcommand("report", "best-seen curves from runs");
  report_cmd->add_option("--runs", report.runs_dir, "run directory")->required();
  report_cmd->add_option("--out", report.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (tune_cmd->parsed()) {
      const auto file_config = load_config_file(tune.config_path);
      apply_config(file_config, tune_task, "task", &tune.task);
      apply_config(file_config, tune_space, "space", &tune.space);
      apply_config(file_config, tune_strategy, "strategy", &tune.strategy);
      apply_config(file_config, tune_budget, "budget", &tune.budget);
      apply_config(file_config, tune_seed, "seed", &tune.seed);
      apply_config(file_config, tune_priors, "priors", &tune.priors_path);
      apply_config(file_config, tune_rlow, "r_low", &tune.r_low);
      apply_config(file_config, tune_patience, "patience", &tune.patience);
      apply_config(file_config, tune_es, "early_stop", &tune.early_stop);
      apply_config(file_config, tune_out, "out", &tune.out);
      return cmd_tune(tune);
    }
    if (bench_cmd->parsed()) {
      const auto file_config = load_config_file(bench.config_path);
      apply_config(file_config, bench_tasks, "tasks", &bench.tasks);
      apply_config(file_config, bench_strategies, "strategies", &bench.strategies);
      apply_config(file_config, bench_space, "space", &bench.space);
      apply_config(file_config, bench_repeats, "repeats", &bench.repeats);
      apply_config(file_config, bench_budget, "budget", &bench.budget);
      apply_config(file_config, bench_seed, "seed", &bench.seed);
      apply_config(file_config, bench_priors, "priors", &bench.priors_path);
      apply_config(file_config, bench_rlow, "r_low", &bench.r_low);
      apply_config(file_config, bench_patience, "patience", &bench.patience);
      apply_config(file_config, bench_es, "early_stop", &bench.early_stop);
      apply_config(file_config, bench_out, "out", &bench.out);
      if (bench.tasks.empty() || bench.strategies.empty()) {
        std::cerr << "error: benchmark needs at least one --task and one --strategy\n";
        return 2;
      }
      return cmd_benchmark(bench);
    }
    if (fanova_cmd->parsed()) return cmd_fanova(fanova);
    if (fscores_cmd->parsed()) return cmd_fidelity_scores(fscores);
    if (learn_cmd->parsed()) return cmd_learn_priors(learn);
    if (serve_cmd->parsed()) return cmd_serve(serve);
    if (report_cmd->parsed()) return cmd_report(report);
  } catch (const mulch::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
