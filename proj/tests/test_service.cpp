#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mulch/errors.hpp"
#include "mulch/gp.hpp"
#include "mulch/rng.hpp"
#include "mulch/search_space.hpp"
#include "mulch/serialization.hpp"
#include "mulch/service.hpp"
#include "mulch/service_http.hpp"
#include "mulch/sobol.hpp"

#include <httplib.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <set>
#include <thread>

using namespace mulch;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("mulch-svc-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

SearchSpace line_space() {
  return SearchSpace(
      {Parameter{"x", ParamKind::Continuous, 0.0, 1.0, {}, Transform::None}});
}

double objective_1d(const Configuration& config) {
  const double x = config.number("x");
  return -(x - 0.7) * (x - 0.7); // quadratic with optimum at 0.7
}

ServiceConfig inline_config(const fs::path& dir) {
  ServiceConfig config;
  config.data_dir = dir;
  config.inline_async = true;
  config.gp_starts = 2;
  config.n_candidates = 32;
  return config;
}

} // namespace

TEST_CASE("create_experiment pre-populates the store") {
  TempDir dir("create");
  SuggestionService service(inline_config(dir.path));
  ExperimentDefinition def;
  def.space = line_space();
  def.budget = 20;
  def.seed = 5;
  const auto id = service.create_experiment(def);
  CHECK(service.open_count(id) == 8);
  CHECK(service.model_version(id) == 0);

  // distinct ids, isolated stores
  const auto id2 = service.create_experiment(def);
  CHECK(id != id2);
  service.request_suggestion(id);
  CHECK(service.open_count(id) == 7);
  CHECK(service.open_count(id2) == 8);

  ExperimentDefinition invalid;
  invalid.space = line_space();
  invalid.budget = 0;
  CHECK_THROWS_AS(service.create_experiment(invalid), ValidationError);
}

TEST_CASE("request serves pre-populated records then falls back") {
  TempDir dir("fallback");
  SuggestionService service(inline_config(dir.path));
  ExperimentDefinition def;
  def.space = line_space();
  def.budget = 50;
  def.seed = 9;
  const auto id = service.create_experiment(def);

  std::set<std::string> served;
  for (int i = 0; i < 8; ++i) {
    const auto record = service.request_suggestion(id);
    CHECK(record.model_version == 0);
    CHECK(served.insert(record.id).second);
  }
  CHECK(service.open_count(id) == 0);
  // 9th request before any observation: synchronous fallback generation
  const auto fallback = service.request_suggestion(id);
  CHECK(served.insert(fallback.id).second);
  def.space.validate(fallback.config);
  CHECK(service.request_path_refits() == 0);
}

TEST_CASE("report closes, refits, and re-ranking matches the offline oracle") {
  TempDir dir("rerank");
  SuggestionService service(inline_config(dir.path));
  ExperimentDefinition def;
  def.space = line_space();
  def.budget = 50;
  def.seed = 41;
  const auto id = service.create_experiment(def);

  for (int cycle = 0; cycle < 4; ++cycle) {
    const auto record = service.request_suggestion(id);
    service.report_observation(id, record.id, objective_1d(record.config));
  }
  CHECK(service.model_version(id) == 4);

  // offline re-scoring oracle: the next served record must be the EI argmax
  // over open records under the current snapshot
  const auto store = service.store_records(id);
  const auto model = service.model_snapshot(id);
  REQUIRE(model != nullptr);
  double best_metric = -1e300;
  {
    double best = -1e300;
    for (const auto& record : store) {
      if (record.state == "closed") {
        best = std::max(best, objective_1d(record.config));
      }
    }
    best_metric = best;
  }
  std::string expected_id;
  double expected_ei = -1.0;
  for (const auto& record : store) {
    if (record.state != "open") continue;
    const auto enc = encode(def.space, record.config);
    const Eigen::VectorXd x =
        Eigen::Map<const Eigen::VectorXd>(enc.data(), 1);
    const double ei = model->expected_improvement(x, best_metric);
    if (ei > expected_ei) {
      expected_ei = ei;
      expected_id = record.id;
    }
  }
  const auto served = service.request_suggestion(id);
  CHECK(served.id == expected_id);

  // duplicate reports are rejected
  service.report_observation(id, served.id, objective_1d(served.config));
  CHECK_THROWS_AS(service.report_observation(id, served.id, 0.0), ConflictError);
  // never-served suggestions cannot be reported
  const auto open_store = service.store_records(id);
  for (const auto& record : open_store) {
    if (record.state == "open") {
      CHECK_THROWS_AS(service.report_observation(id, record.id, 0.0), ConflictError);
      break;
    }
  }
  CHECK_THROWS_AS(service.report_observation(id, "sug-9999", 0.0), NotFoundError);
}

TEST_CASE("ten service cycles replay an in-process BO oracle exactly") {
  TempDir dir("oracle");
  SuggestionService service(inline_config(dir.path));
  ExperimentDefinition def;
  def.space = line_space();
  def.budget = 50;
  def.seed = 1234;
  const auto id = service.create_experiment(def);

  // the oracle mirrors the service pipeline from gp-core primitives: a
  // version-0 store of prior samples, EI re-ranking, refit + top-k
  // regeneration with the shared seed streams
  const auto space = line_space();
  const auto uniform = uniform_ensemble(space);
  struct OracleRecord {
    Configuration config;
    double acquisition = 0.0;
    int version = 0;
    bool open = true;
  };
  std::vector<OracleRecord> oracle_store;
  for (const auto& config :
       sample_prior(uniform, 8, derive_seed(def.seed, service_streams::kPrepopulate))) {
    oracle_store.push_back({config, 0.0, 0, true});
  }
  std::vector<std::pair<Configuration, double>> oracle_observations;
  std::shared_ptr<GpModel> oracle_model;

  for (int cycle = 0; cycle < 10; ++cycle) {
    // oracle: re-rank and pick
    if (oracle_model) {
      double best = -1e300;
      for (const auto& [c, m] : oracle_observations) best = std::max(best, m);
      for (auto& record : oracle_store) {
        if (!record.open) continue;
        const auto enc = encode(space, record.config);
        record.acquisition = oracle_model->expected_improvement(
            Eigen::Map<const Eigen::VectorXd>(enc.data(), 1), best);
      }
    }
    OracleRecord* pick = nullptr;
    for (auto& record : oracle_store) {
      if (record.open && (!pick || record.acquisition > pick->acquisition)) {
        pick = &record;
      }
    }
    REQUIRE(pick != nullptr);
    pick->open = false;
    const double metric = objective_1d(pick->config);
    oracle_observations.emplace_back(pick->config, metric);

    // oracle refit + regeneration, mirroring the async job
    const auto version = static_cast<int>(oracle_observations.size());
    Eigen::MatrixXd X(version, 1);
    Eigen::VectorXd y(version);
    double best = -1e300;
    for (int i = 0; i < version; ++i) {
      X(i, 0) = encode(space, oracle_observations[i].first)[0];
      y(i) = oracle_observations[i].second;
      best = std::max(best, y(i));
    }
    oracle_model = std::make_shared<GpModel>(
        GpModel::fit(X, y, nullptr, 2,
                     derive_seed(def.seed, service_streams::kFit,
                                 static_cast<std::uint64_t>(version))));
    const auto suggest_seed = derive_seed(def.seed, service_streams::kSuggest,
                                          static_cast<std::uint64_t>(version));
    std::vector<Configuration> fresh;
    fresh.push_back(suggest(*oracle_model, space, best, 32, suggest_seed));
    SobolSequence sobol(1, suggest_seed);
    std::vector<std::pair<double, Configuration>> scored;
    std::vector<double> u(1);
    for (int i = 0; i < 32; ++i) {
      sobol.next_into(u.data());
      scored.emplace_back(oracle_model->expected_improvement(
                              Eigen::Map<const Eigen::VectorXd>(u.data(), 1), best),
                          decode(space, u));
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (const auto& [ei, config] : scored) {
      if (fresh.size() >= 4) break;
      bool duplicate = false;
      for (const auto& existing : fresh) duplicate |= existing == config;
      if (!duplicate) fresh.push_back(config);
    }
    for (auto& record : oracle_store) {
      if (record.open && record.version == 0) record.open = false;
    }
    for (const auto& config : fresh) {
      oracle_store.push_back({config, 0.0, version, true});
    }

    // the service must serve the exact oracle pick this cycle
    const auto record = service.request_suggestion(id);
    CHECK(record.config == oracle_observations.back().first);
    service.report_observation(id, record.id, metric);
  }

  // best-seen agreement
  const auto [best_config, best_metric] = service.get_best(id);
  double oracle_best = -1e300;
  for (const auto& [c, m] : oracle_observations) oracle_best = std::max(oracle_best, m);
  CHECK(best_metric == oracle_best);
}

TEST_CASE("update_experiment narrows bounds and validates budgets") {
  TempDir dir("patch");
  SuggestionService service(inline_config(dir.path));
  ExperimentDefinition def;
  def.space = default_space("mulch5");
  def.budget = 30;
  def.seed = 3;
  const auto id = service.create_experiment(def);

  const auto before = service.store_records(id);
  std::size_t would_close = 0;
  for (const auto& record : before) {
    const double exponent = std::log10(record.config.number("eta"));
    if (exponent < -3.0 || exponent > -1.0) ++would_close;
  }
  REQUIRE(would_close > 0); // uniform prepopulation spans the full range

  ExperimentPatch patch;
  patch.bounds["eta"] = {-3.0, -1.0};
  service.update_experiment(id, patch);
  for (const auto& record : service.store_records(id)) {
    if (record.state != "open") continue;
    const double exponent = std::log10(record.config.number("eta"));
    CHECK(exponent >= -3.0 - 1e-9);
    CHECK(exponent <= -1.0 + 1e-9);
  }
  CHECK(service.open_count(id) == 8 - would_close);

  // widening closes nothing further
  ExperimentPatch widen;
  widen.bounds["eta"] = {-4.0, 0.0};
  const auto opens = service.open_count(id);
  service.update_experiment(id, widen);
  CHECK(service.open_count(id) == opens);

  // budget below consumed is rejected
  const auto record = service.request_suggestion(id);
  service.report_observation(id, record.id, 0.5);
  ExperimentPatch bad;
  bad.budget = 0.0;
  CHECK_THROWS_AS(service.update_experiment(id, bad), ValidationError);

  ExperimentPatch unknown;
  unknown.bounds["nope"] = {0.0, 1.0};
  CHECK_THROWS_AS(service.update_experiment(id, unknown), ValidationError);
}

TEST_CASE("get_best matches a scan oracle") {
  TempDir dir("best");
  SuggestionService service(inline_config(dir.path));
  ExperimentDefinition def;
  def.space = line_space();
  def.budget = 40;
  def.seed = 77;
  const auto id = service.create_experiment(def);
  CHECK_THROWS_AS(service.get_best(id), ConflictError);

  double best = -1e300;
  for (int i = 0; i < 6; ++i) {
    const auto record = service.request_suggestion(id);
    const double metric = objective_1d(record.config);
    best = std::max(best, metric);
    service.report_observation(id, record.id, metric);
  }
  CHECK(service.get_best(id).second == best);
}

TEST_CASE("budget exhaustion blocks further requests") {
  TempDir dir("budget");
  SuggestionService service(inline_config(dir.path));
  ExperimentDefinition def;
  def.space = line_space();
  def.budget = 2;
  def.seed = 8;
  const auto id = service.create_experiment(def);
  for (int i = 0; i < 2; ++i) {
    const auto record = service.request_suggestion(id);
    service.report_observation(id, record.id, 0.1 * i);
  }
  CHECK_THROWS_AS(service.request_suggestion(id), ConflictError);
  CHECK_THROWS_AS(service.request_suggestion("exp-999"), NotFoundError);
}

TEST_CASE("concurrent requesters never share a record") {
  TempDir dir("stress");
  ServiceConfig config;
  config.data_dir = dir.path;
  config.inline_async = false; // real async worker
  config.gp_starts = 2;
  config.n_candidates = 16;
  SuggestionService service(config);

  ExperimentDefinition def;
  def.space = line_space();
  def.budget = 1000;
  def.seed = 11;
  const auto id = service.create_experiment(def);

  std::vector<std::thread> threads;
  std::vector<std::string> served(16 * 6);
  std::atomic<int> cursor{0};
  for (int t = 0; t < 16; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 6; ++i) {
        const auto record = service.request_suggestion(id);
        served[static_cast<std::size_t>(cursor.fetch_add(1))] = record.id;
      }
    });
  }
  for (auto& thread : threads) thread.join();

  std::set<std::string> unique(served.begin(), served.end());
  CHECK(unique.size() == served.size()); // linearizable open -> served
  CHECK(service.request_path_refits() == 0);
  service.wait_idle();
}

TEST_CASE("replaying the log reconstructs the experiment") {
  TempDir dir("recover");
  std::string id;
  double best = -1e300;
  {
    SuggestionService service(inline_config(dir.path));
    ExperimentDefinition def;
    def.space = line_space();
    def.budget = 30;
    def.seed = 21;
    id = service.create_experiment(def);
    for (int i = 0; i < 5; ++i) {
      const auto record = service.request_suggestion(id);
      const double metric = objective_1d(record.config);
      best = std::max(best, metric);
      service.report_observation(id, record.id, metric);
    }
  } // service shuts down

  SuggestionService recovered(inline_config(dir.path));
  const auto ids = recovered.experiment_ids();
  REQUIRE(ids == std::vector<std::string>{id});
  CHECK(recovered.model_version(id) == 5);
  CHECK(recovered.observation_count(id) == 5);
  CHECK(recovered.get_best(id).second == best);
  CHECK(recovered.model_snapshot(id) != nullptr);

  // the recovered service keeps serving
  const auto record = recovered.request_suggestion(id);
  recovered.report_observation(id, record.id, objective_1d(record.config));
  CHECK(recovered.model_version(id) == 6);
}

TEST_CASE("http endpoints cover the wire contract") {
  TempDir dir("http");
  SuggestionService service(inline_config(dir.path));
  auto server = make_http_server(service);
  const int port = server->bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread runner([&] { server->listen_after_bind(); });
  server->wait_until_ready();

  httplib::Client client("127.0.0.1", port);

  // create
  Json create_body{{"space", "mulch5"}, {"budget", 20}, {"seed", 3}};
  auto created = client.Post("/experiments", create_body.dump(), "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  const auto id = Json::parse(created->body).at("id").get<std::string>();

  // suggestion
  auto suggestion = client.Get(("/experiments/" + id + "/suggestions").c_str());
  REQUIRE(suggestion);
  CHECK(suggestion->status == 200);
  const auto record = Json::parse(suggestion->body);
  CHECK(record.at("state") == "served");

  // observation
  Json report{{"suggestion_id", record.at("id")}, {"metric", 0.91}};
  auto ack = client.Post(("/experiments/" + id + "/observations").c_str(),
                         report.dump(), "application/json");
  REQUIRE(ack);
  CHECK(ack->status == 202);

  // duplicate -> 409 with a JSON error body
  auto dup = client.Post(("/experiments/" + id + "/observations").c_str(),
                         report.dump(), "application/json");
  REQUIRE(dup);
  CHECK(dup->status == 409);
  CHECK(Json::parse(dup->body).contains("code"));

  // patch
  Json patch{{"bounds", {{"eta", {{"lower", -3.0}, {"upper", -1.0}}}}}};
  auto patched = client.Patch(("/experiments/" + id).c_str(), patch.dump(),
                              "application/json");
  REQUIRE(patched);
  CHECK(patched->status == 200);

  // best
  auto best = client.Get(("/experiments/" + id + "/best").c_str());
  REQUIRE(best);
  CHECK(best->status == 200);
  CHECK(Json::parse(best->body).at("metric").get<double>() == 0.91);

  // unknown experiment -> 404
  auto missing = client.Get("/experiments/exp-404/best");
  REQUIRE(missing);
  CHECK(missing->status == 404);

  server->stop();
  runner.join();
}
