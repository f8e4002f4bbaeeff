#pragma once

#include "mulch/engine.hpp"
#include "mulch/errors.hpp"
#include "mulch/gp.hpp"
#include "mulch/priors.hpp"
#include "mulch/search_space.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace mulch {

class NotFoundError : public Error {
public:
  using Error::Error;
};

class ConflictError : public Error {
public:
  using Error::Error;
};

struct ServiceConfig {
  std::filesystem::path data_dir;
  std::shared_ptr<const PriorEnsemble> priors; // fallback source; null = uniform
  std::optional<LengthscaleBox> lengthscale_box;
  bool inline_async = false; // run refit jobs synchronously (deterministic test mode)
  int prepopulate = 8;
  int fresh_per_refit = 4;
  int gp_starts = 4;
  int n_candidates = 256;
};

struct ExperimentDefinition {
  SearchSpace space;
  double budget = 50.0;
  std::uint64_t seed = 0;
};

struct SuggestionRecord {
  std::string id;
  Configuration config;
  double acquisition = 0.0;
  int model_version = 0;
  std::string state = "open"; // open | served | closed
};

struct ExperimentPatch {
  // per-parameter new bounds in stored (transformed) scale
  std::map<std::string, std::pair<double, double>> bounds;
  std::optional<double> budget;
};

// seed streams shared with the offline equivalence oracle
namespace service_streams {
constexpr std::uint64_t kPrepopulate = 0x707265ULL;
constexpr std::uint64_t kFallback = 0x66616c6cULL;
constexpr std::uint64_t kFit = 0x736669ULL;
constexpr std::uint64_t kSuggest = 0x737375ULL;
} // namespace service_streams

// Decoupled suggestion serving: synchronous requests are answered from a
// precomputed store (re-ranked under the latest model snapshot, never
// refitted); observation reports enqueue an asynchronous refit +
// regeneration job. State is persisted as an append-only log per experiment
// plus a store snapshot, and replaying the log reconstructs the experiment.
class SuggestionService {
public:
  explicit SuggestionService(ServiceConfig config);
  ~SuggestionService();

  SuggestionService(const SuggestionService&) = delete;
  SuggestionService& operator=(const SuggestionService&) = delete;

  std::string create_experiment(const ExperimentDefinition& definition);
  SuggestionRecord request_suggestion(const std::string& experiment_id);
  void report_observation(const std::string& experiment_id,
                          const std::string& suggestion_id, double metric);
  void update_experiment(const std::string& experiment_id,
                         const ExperimentPatch& patch);
  std::pair<Configuration, double> get_best(const std::string& experiment_id) const;

  // introspection
  std::vector<std::string> experiment_ids() const;
  std::vector<SuggestionRecord> store_records(const std::string& experiment_id) const;
  std::shared_ptr<const GpModel> model_snapshot(const std::string& experiment_id) const;
  int model_version(const std::string& experiment_id) const;
  std::size_t open_count(const std::string& experiment_id) const;
  std::size_t observation_count(const std::string& experiment_id) const;
  double budget(const std::string& experiment_id) const;
  SearchSpace space(const std::string& experiment_id) const;

  // GP fits observed while a request was being served; stays 0 by contract
  int request_path_refits() const { return request_path_refits_.load(); }

  // blocks until the async queue drains and no job is running
  void wait_idle();

private:
  struct ObservationEntry {
    std::string suggestion_id;
    Configuration config;
    double metric = 0.0;
  };

  struct Experiment {
    mutable std::mutex mutex;
    std::string id;
    SearchSpace space;
    double budget = 0.0;
    std::uint64_t seed = 0;
    std::vector<ObservationEntry> observations;
    std::vector<SuggestionRecord> store;
    std::shared_ptr<const GpModel> model; // immutable snapshot
    int model_version = 0;
    int suggestion_counter = 0;
    std::uint64_t fallback_counter = 0;
    std::filesystem::path dir;
    std::ofstream log;
  };

  Experiment& find(const std::string& id) const;
  std::string allocate_id();
  void persist_store(Experiment& exp); // caller holds exp.mutex
  void append_log(Experiment& exp, const std::string& line);
  SuggestionRecord make_fallback(Experiment& exp); // caller holds exp.mutex
  void enqueue_refit(const std::string& id);
  void refit_job(const std::string& id);
  void worker_loop();
  void recover();

  GpModel fit_guarded(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                      const LengthscaleBox* box, int starts,
                      std::uint64_t seed) const;

  ServiceConfig config_;
  mutable std::mutex registry_mutex_;
  std::map<std::string, std::unique_ptr<Experiment>> experiments_;

  mutable std::atomic<int> request_path_refits_{0};

  std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::condition_variable idle_cv_;
  std::deque<std::string> queue_;
  std::set<std::string> queued_;
  std::set<std::string> running_;
  bool stop_ = false;
  std::thread worker_;
};

} // namespace mulch
