#include "mulch/service.hpp"

#include "mulch/rng.hpp"
#include "mulch/serialization.hpp"
#include "mulch/sobol.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mulch {

namespace {

thread_local bool tl_in_request = false;

struct RequestScope {
  explicit RequestScope(bool* flag) : flag_(flag) { *flag_ = true; }
  ~RequestScope() { *flag_ = false; }
  bool* flag_;
};

Json record_to_json(const SuggestionRecord& record) {
  return Json{{"id", record.id},
              {"config", config_to_json(record.config)},
              {"acquisition", record.acquisition},
              {"model_version", record.model_version},
              {"state", record.state}};
}

SuggestionRecord record_from_json(const Json& j) {
  SuggestionRecord record;
  record.id = j.at("id").get<std::string>();
  record.config = config_from_json(j.at("config"));
  record.acquisition = j.at("acquisition").get<double>();
  record.model_version = j.at("model_version").get<int>();
  record.state = j.at("state").get<std::string>();
  return record;
}

} // namespace

SuggestionService::SuggestionService(ServiceConfig config)
    : config_(std::move(config)) {
  if (config_.data_dir.empty()) {
    throw ValidationError("service: data_dir must be set");
  }
  std::filesystem::create_directories(config_.data_dir);
  recover();
  worker_ = std::thread([this] { worker_loop(); });
}

SuggestionService::~SuggestionService() {
  {
    std::lock_guard<std::mutex> lock(queue_mutex_);
    stop_ = true;
  }
  queue_cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

GpModel SuggestionService::fit_guarded(const Eigen::MatrixXd& X,
                                       const Eigen::VectorXd& y,
                                       const LengthscaleBox* box, int starts,
                                       std::uint64_t seed) const {
  if (tl_in_request) request_path_refits_.fetch_add(1);
  return GpModel::fit(X, y, box, starts, seed);
}

SuggestionService::Experiment& SuggestionService::find(const std::string& id) const {
  std::lock_guard<std::mutex> lock(registry_mutex_);
  auto it = experiments_.find(id);
  if (it == experiments_.end()) {
    throw NotFoundError("unknown experiment '" + id + "'");
  }
  return *it->second;
}

std::string SuggestionService::allocate_id() {
  int max_seen = 0;
  for (const auto& [id, exp] : experiments_) {
    if (id.rfind("exp-", 0) == 0) {
      max_seen = std::max(max_seen, std::atoi(id.c_str() + 4));
    }
  }
  return "exp-" + std::to_string(max_seen + 1);
}

void SuggestionService::append_log(Experiment& exp, const std::string& line) {
  exp.log << line << "\n";
  exp.log.flush();
}

void SuggestionService::persist_store(Experiment& exp) {
  Json j;
  j["model_version"] = exp.model_version;
  Json records = Json::array();
  for (const auto& record : exp.store) records.push_back(record_to_json(record));
  j["suggestions"] = std::move(records);
  std::ofstream out(exp.dir / "store.json");
  out << j.dump() << "\n";
}

std::string SuggestionService::create_experiment(const ExperimentDefinition& definition) {
  if (!(definition.budget >= 1.0)) {
    throw ValidationError("experiment budget must be >= 1");
  }
  if (definition.space.dimension() == 0) {
    throw ValidationError("experiment space is empty");
  }

  std::lock_guard<std::mutex> registry(registry_mutex_);
  auto exp = std::make_unique<Experiment>();
  exp->id = allocate_id();
  exp->space = definition.space;
  exp->budget = definition.budget;
  exp->seed = definition.seed;
  exp->dir = config_.data_dir / exp->id;
  std::filesystem::create_directories(exp->dir);
  exp->log.open(exp->dir / "log.jsonl", std::ios::app);

  Json created{{"type", "created"},
               {"space", space_to_json(definition.space)},
               {"budget", definition.budget},
               {"seed", definition.seed}};
  append_log(*exp, created.dump());

  // pre-populate the store with fallback prior samples at version 0
  const PriorEnsemble uniform =
      config_.priors ? PriorEnsemble{} : uniform_ensemble(exp->space);
  const PriorEnsemble& source = config_.priors ? *config_.priors : uniform;
  const auto configs = sample_prior(
      source, static_cast<std::size_t>(config_.prepopulate),
      derive_seed(exp->seed, service_streams::kPrepopulate));
  for (const auto& config : configs) {
    SuggestionRecord record;
    record.id = "sug-" + std::to_string(++exp->suggestion_counter);
    record.config = config;
    record.model_version = 0;
    record.state = "open";
    exp->store.push_back(std::move(record));
  }
  persist_store(*exp);

  const std::string id = exp->id;
  experiments_[id] = std::move(exp);
  return id;
}

SuggestionRecord SuggestionService::make_fallback(Experiment& exp) {
  const PriorEnsemble uniform =
      config_.priors ? PriorEnsemble{} : uniform_ensemble(exp.space);
  const PriorEnsemble& source = config_.priors ? *config_.priors : uniform;
  for (int attempt = 0; attempt < 200; ++attempt) {
    auto config = sample_prior(source, 1,
                               derive_seed(exp.seed, service_streams::kFallback,
                                           exp.fallback_counter++))
                      .front();
    try {
      exp.space.validate(config);
    } catch (const ValidationError&) {
      continue; // bounds may have been narrowed since the priors were built
    }
    SuggestionRecord record;
    record.id = "sug-" + std::to_string(++exp.suggestion_counter);
    record.config = std::move(config);
    record.model_version = exp.model_version;
    record.state = "open";
    exp.store.push_back(record);
    return record;
  }
  // narrowed bounds rejected every prior draw; sample the box directly
  auto config = sample(exp.space, 1, SampleMode::Pseudo,
                       derive_seed(exp.seed, service_streams::kFallback,
                                   exp.fallback_counter++))
                    .front();
  SuggestionRecord record;
  record.id = "sug-" + std::to_string(++exp.suggestion_counter);
  record.config = std::move(config);
  record.model_version = exp.model_version;
  record.state = "open";
  exp.store.push_back(record);
  return record;
}

SuggestionRecord SuggestionService::request_suggestion(const std::string& experiment_id) {
  RequestScope scope(&tl_in_request);
  Experiment& exp = find(experiment_id);
  std::lock_guard<std::mutex> lock(exp.mutex);

  if (static_cast<double>(exp.observations.size()) >= exp.budget) {
    throw ConflictError("experiment budget exhausted");
  }

  // re-rank open records under the current snapshot (skipped at version 0)
  if (exp.model && exp.model_version > 0) {
    double best_metric = -std::numeric_limits<double>::infinity();
    for (const auto& obs : exp.observations) {
      best_metric = std::max(best_metric, obs.metric);
    }
    for (auto& record : exp.store) {
      if (record.state != "open") continue;
      const auto enc = encode(exp.space, record.config);
      const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(
          enc.data(), static_cast<Eigen::Index>(enc.size()));
      record.acquisition = exp.model->expected_improvement(x, best_metric);
      record.model_version = exp.model_version;
    }
  }

  SuggestionRecord* chosen = nullptr;
  for (auto& record : exp.store) {
    if (record.state != "open") continue;
    if (!chosen || record.acquisition > chosen->acquisition) chosen = &record;
  }
  if (!chosen) {
    make_fallback(exp);
    chosen = &exp.store.back();
  }
  chosen->state = "served";
  persist_store(exp);
  return *chosen;
}

void SuggestionService::report_observation(const std::string& experiment_id,
                                           const std::string& suggestion_id,
                                           double metric) {
  Experiment& exp = find(experiment_id);
  {
    std::lock_guard<std::mutex> lock(exp.mutex);
    auto it = std::find_if(exp.store.begin(), exp.store.end(),
                           [&](const SuggestionRecord& r) { return r.id == suggestion_id; });
    if (it == exp.store.end()) {
      throw NotFoundError("unknown suggestion '" + suggestion_id + "'");
    }
    if (it->state == "closed") {
      throw ConflictError("suggestion '" + suggestion_id + "' already reported");
    }
    if (it->state != "served") {
      throw ConflictError("suggestion '" + suggestion_id + "' was never served");
    }
    it->state = "closed";
    exp.observations.push_back({suggestion_id, it->config, metric});

    Json line{{"type", "observation"},
              {"suggestion_id", suggestion_id},
              {"config", config_to_json(it->config)},
              {"metric", metric},
              {"seq", exp.observations.size()}};
    append_log(exp, line.dump());
    persist_store(exp);
  }
  enqueue_refit(experiment_id); // acknowledgment returns before the job runs
}

void SuggestionService::update_experiment(const std::string& experiment_id,
                                          const ExperimentPatch& patch) {
  Experiment& exp = find(experiment_id);
  std::lock_guard<std::mutex> lock(exp.mutex);

  if (patch.budget) {
    if (*patch.budget < static_cast<double>(exp.observations.size())) {
      throw ValidationError("new budget is below the consumed budget");
    }
  }

  SearchSpace new_space = exp.space;
  if (!patch.bounds.empty()) {
    std::vector<Parameter> params = exp.space.parameters();
    for (auto& p : params) {
      auto it = patch.bounds.find(p.name);
      if (it == patch.bounds.end()) continue;
      if (p.kind == ParamKind::Categorical) {
        throw ValidationError("cannot patch bounds of categorical parameter '" +
                              p.name + "'");
      }
      p.lower = it->second.first;
      p.upper = it->second.second;
      p.validate();
    }
    for (const auto& [name, bounds] : patch.bounds) {
      if (!exp.space.contains(name)) {
        throw ValidationError("patch references unknown parameter '" + name + "'");
      }
    }
    new_space = SearchSpace(std::move(params));
  }

  if (patch.budget) exp.budget = *patch.budget;
  exp.space = new_space;

  // close open suggestions that fell outside the new bounds
  for (auto& record : exp.store) {
    if (record.state != "open") continue;
    try {
      exp.space.validate(record.config);
    } catch (const ValidationError&) {
      record.state = "closed";
    }
  }

  Json line{{"type", "patch"}, {"space", space_to_json(exp.space)}, {"budget", exp.budget}};
  append_log(exp, line.dump());
  persist_store(exp);
}

std::pair<Configuration, double> SuggestionService::get_best(
    const std::string& experiment_id) const {
  Experiment& exp = find(experiment_id);
  std::lock_guard<std::mutex> lock(exp.mutex);
  if (exp.observations.empty()) {
    throw ConflictError("no observations reported yet");
  }
  const ObservationEntry* best = &exp.observations.front();
  for (const auto& obs : exp.observations) {
    if (obs.metric > best->metric) best = &obs;
  }
  return {best->config, best->metric};
}

std::vector<std::string> SuggestionService::experiment_ids() const {
  std::lock_guard<std::mutex> lock(registry_mutex_);
  std::vector<std::string> ids;
  for (const auto& [id, exp] : experiments_) ids.push_back(id);
  return ids;
}

std::vector<SuggestionRecord> SuggestionService::store_records(
    const std::string& experiment_id) const {
  Experiment& exp = find(experiment_id);
  std::lock_guard<std::mutex> lock(exp.mutex);
  return exp.store;
}

std::shared_ptr<const GpModel> SuggestionService::model_snapshot(
    const std::string& experiment_id) const {
  Experiment& exp = find(experiment_id);
  std::lock_guard<std::mutex> lock(exp.mutex);
  return exp.model;
}

int SuggestionService::model_version(const std::string& experiment_id) const {
  Experiment& exp = find(experiment_id);
  std::lock_guard<std::mutex> lock(exp.mutex);
  return exp.model_version;
}

std::size_t SuggestionService::open_count(const std::string& experiment_id) const {
  Experiment& exp = find(experiment_id);
  std::lock_guard<std::mutex> lock(exp.mutex);
  std::size_t count = 0;
  for (const auto& record : exp.store) count += record.state == "open" ? 1 : 0;
  return count;
}

std::size_t SuggestionService::observation_count(const std::string& experiment_id) const {
  Experiment& exp = find(experiment_id);
  std::lock_guard<std::mutex> lock(exp.mutex);
  return exp.observations.size();
}

double SuggestionService::budget(const std::string& experiment_id) const {
  Experiment& exp = find(experiment_id);
  std::lock_guard<std::mutex> lock(exp.mutex);
  return exp.budget;
}

SearchSpace SuggestionService::space(const std::string& experiment_id) const {
  Experiment& exp = find(experiment_id);
  std::lock_guard<std::mutex> lock(exp.mutex);
  return exp.space;
}

void SuggestionService::enqueue_refit(const std::string& id) {
  if (config_.inline_async) {
    refit_job(id);
    return;
  }
  {
    std::lock_guard<std::mutex> lock(queue_mutex_);
    if (queued_.insert(id).second) queue_.push_back(id); // coalesce
  }
  queue_cv_.notify_one();
}

void SuggestionService::worker_loop() {
  for (;;) {
    std::string id;
    {
      std::unique_lock<std::mutex> lock(queue_mutex_);
      queue_cv_.wait(lock, [&] { return stop_ || !queue_.empty(); });
      if (stop_ && queue_.empty()) return;
      id = queue_.front();
      queue_.pop_front();
      queued_.erase(id);
      running_.insert(id);
    }
    try {
      refit_job(id);
    } catch (const std::exception&) {
      // a failed refit leaves the previous snapshot in place
    }
    {
      std::lock_guard<std::mutex> lock(queue_mutex_);
      running_.erase(id);
    }
    idle_cv_.notify_all();
  }
}

void SuggestionService::wait_idle() {
  std::unique_lock<std::mutex> lock(queue_mutex_);
  idle_cv_.wait(lock, [&] { return queue_.empty() && running_.empty(); });
}

void SuggestionService::refit_job(const std::string& id) {
  Experiment& exp = find(id);

  SearchSpace space;
  std::vector<ObservationEntry> observations;
  std::uint64_t seed = 0;
  {
    std::lock_guard<std::mutex> lock(exp.mutex);
    if (exp.observations.empty()) return;
    space = exp.space;
    observations = exp.observations;
    seed = exp.seed;
  }
  const int version_target = static_cast<int>(observations.size());

  Eigen::MatrixXd X(static_cast<Eigen::Index>(observations.size()),
                    static_cast<Eigen::Index>(space.dimension()));
  Eigen::VectorXd y(static_cast<Eigen::Index>(observations.size()));
  double best_metric = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < observations.size(); ++i) {
    const auto enc = encode(space, observations[i].config);
    for (std::size_t j = 0; j < enc.size(); ++j) {
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = enc[j];
    }
    y(static_cast<Eigen::Index>(i)) = observations[i].metric;
    best_metric = std::max(best_metric, observations[i].metric);
  }

  const LengthscaleBox* box =
      config_.lengthscale_box ? &*config_.lengthscale_box : nullptr;
  auto model = std::make_shared<GpModel>(
      fit_guarded(X, y, box, config_.gp_starts,
                  derive_seed(seed, service_streams::kFit,
                              static_cast<std::uint64_t>(version_target))));

  // fresh suggestions: the refined EI argmax plus the next-best candidates
  const auto suggest_seed = derive_seed(seed, service_streams::kSuggest,
                                        static_cast<std::uint64_t>(version_target));
  std::vector<Configuration> fresh;
  fresh.push_back(suggest(*model, space, best_metric,
                          static_cast<std::size_t>(config_.n_candidates),
                          suggest_seed));
  if (config_.fresh_per_refit > 1) {
    SobolSequence sobol(space.dimension(), suggest_seed);
    std::vector<std::pair<double, Configuration>> scored;
    std::vector<double> u(space.dimension());
    for (int i = 0; i < config_.n_candidates; ++i) {
      sobol.next_into(u.data());
      const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(
          u.data(), static_cast<Eigen::Index>(u.size()));
      scored.emplace_back(model->expected_improvement(x, best_metric),
                          decode(space, u));
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (const auto& [ei, config] : scored) {
      if (static_cast<int>(fresh.size()) >= config_.fresh_per_refit) break;
      if (std::find(fresh.begin(), fresh.end(), config) == fresh.end()) {
        fresh.push_back(config);
      }
    }
  }

  std::lock_guard<std::mutex> lock(exp.mutex);
  if (version_target <= exp.model_version) return; // a newer job already landed
  exp.model = std::move(model);
  exp.model_version = version_target;
  {
    Json snapshot{{"version", exp.model_version}, {"gp", gp_to_json(*exp.model)}};
    std::ofstream out(exp.dir / "model.json");
    out << snapshot.dump() << "\n";
  }
  // retire stale unscored entries; scored opens stay and get re-ranked
  for (auto& record : exp.store) {
    if (record.state == "open" && record.model_version == 0) record.state = "closed";
  }
  double best_now = -std::numeric_limits<double>::infinity();
  for (const auto& obs : exp.observations) best_now = std::max(best_now, obs.metric);
  for (const auto& config : fresh) {
    SuggestionRecord record;
    record.id = "sug-" + std::to_string(++exp.suggestion_counter);
    record.config = config;
    record.model_version = exp.model_version;
    const auto enc = encode(exp.space, config);
    const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(
        enc.data(), static_cast<Eigen::Index>(enc.size()));
    record.acquisition = exp.model->expected_improvement(x, best_now);
    record.state = "open";
    exp.store.push_back(std::move(record));
  }
  persist_store(exp);
}

void SuggestionService::recover() {
  if (!std::filesystem::exists(config_.data_dir)) return;
  for (const auto& entry : std::filesystem::directory_iterator(config_.data_dir)) {
    if (!entry.is_directory()) continue;
    const auto log_path = entry.path() / "log.jsonl";
    if (!std::filesystem::exists(log_path)) continue;

    auto exp = std::make_unique<Experiment>();
    exp->id = entry.path().filename().string();
    exp->dir = entry.path();

    std::ifstream in(log_path);
    std::string line;
    bool created = false;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const Json j = Json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "created") {
        exp->space = space_from_json(j.at("space"));
        exp->budget = j.at("budget").get<double>();
        exp->seed = j.at("seed").get<std::uint64_t>();
        created = true;
      } else if (type == "observation") {
        exp->observations.push_back({j.at("suggestion_id").get<std::string>(),
                                     config_from_json(j.at("config")),
                                     j.at("metric").get<double>()});
      } else if (type == "patch") {
        exp->space = space_from_json(j.at("space"));
        exp->budget = j.at("budget").get<double>();
      }
    }
    if (!created) continue;

    const auto store_path = entry.path() / "store.json";
    if (std::filesystem::exists(store_path)) {
      std::ifstream store_in(store_path);
      Json j;
      store_in >> j;
      for (const auto& record : j.at("suggestions")) {
        exp->store.push_back(record_from_json(record));
        const auto& id = exp->store.back().id;
        if (id.rfind("sug-", 0) == 0) {
          exp->suggestion_counter =
              std::max(exp->suggestion_counter, std::atoi(id.c_str() + 4));
        }
      }
    }
    exp->model_version = static_cast<int>(exp->observations.size());
    exp->log.open(log_path, std::ios::app);
    const std::string id = exp->id;
    experiments_[id] = std::move(exp);
  }

  // restore model snapshots: load the persisted one when it matches the
  // replayed version, otherwise refit from the observation log
  for (const auto& [id, exp] : experiments_) {
    if (exp->observations.empty()) continue;
    const auto model_path = exp->dir / "model.json";
    bool restored = false;
    if (std::filesystem::exists(model_path)) {
      try {
        std::ifstream in(model_path);
        Json snapshot;
        in >> snapshot;
        if (snapshot.at("version").get<int>() == exp->model_version) {
          exp->model = std::make_shared<GpModel>(gp_from_json(snapshot.at("gp")));
          restored = true;
        }
      } catch (const std::exception&) {
        // fall through to a refit
      }
    }
    if (!restored) {
      const int version = exp->model_version;
      exp->model_version = version - 1; // let the job land at the true version
      if (config_.inline_async) {
        refit_job(id);
      } else {
        std::lock_guard<std::mutex> lock(queue_mutex_);
        if (queued_.insert(id).second) queue_.push_back(id);
      }
    }
  }
}

} // namespace mulch
