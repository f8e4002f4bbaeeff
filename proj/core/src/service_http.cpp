#include "mulch/service_http.hpp"

#include "mulch/serialization.hpp"

#include <httplib.h>

#include <iostream>

namespace mulch {

namespace {

void reply_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& code,
                 const std::string& message) {
  reply_json(res, status, Json{{"code", code}, {"message", message}});
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const NotFoundError& e) {
    reply_error(res, 404, "not_found", e.what());
  } catch (const ConflictError& e) {
    reply_error(res, 409, "conflict", e.what());
  } catch (const ValidationError& e) {
    reply_error(res, 400, "invalid_request", e.what());
  } catch (const Json::exception& e) {
    reply_error(res, 400, "bad_json", e.what());
  } catch (const std::exception& e) {
    reply_error(res, 500, "internal", e.what());
  }
}

Json record_json(const SuggestionRecord& record) {
  return Json{{"id", record.id},
              {"config", config_to_json(record.config)},
              {"acquisition", record.acquisition},
              {"model_version", record.model_version},
              {"state", record.state}};
}

} // namespace

std::unique_ptr<httplib::Server> make_http_server(SuggestionService& service) {
  auto server = std::make_unique<httplib::Server>();

  server->Post("/experiments", [&service](const httplib::Request& req,
                                          httplib::Response& res) {
    guarded(res, [&] {
      const Json body = Json::parse(req.body);
      ExperimentDefinition definition;
      if (body.contains("space") && body["space"].is_object()) {
        definition.space = space_from_json(body["space"]);
      } else if (body.contains("space") && body["space"].is_string()) {
        definition.space = default_space(body["space"].get<std::string>());
      } else {
        definition.space = default_space("mulch5");
      }
      if (body.contains("budget")) definition.budget = body["budget"].get<double>();
      if (body.contains("seed")) definition.seed = body["seed"].get<std::uint64_t>();
      const auto id = service.create_experiment(definition);
      reply_json(res, 201, Json{{"id", id}});
    });
  });

  server->Get(R"(/experiments/([^/]+)/suggestions)",
              [&service](const httplib::Request& req, httplib::Response& res) {
                guarded(res, [&] {
                  const auto record = service.request_suggestion(req.matches[1]);
                  reply_json(res, 200, record_json(record));
                });
              });

  server->Post(R"(/experiments/([^/]+)/observations)",
               [&service](const httplib::Request& req, httplib::Response& res) {
                 guarded(res, [&] {
                   const Json body = Json::parse(req.body);
                   service.report_observation(
                       req.matches[1], body.at("suggestion_id").get<std::string>(),
                       body.at("metric").get<double>());
                   reply_json(res, 202, Json{{"status", "accepted"}});
                 });
               });

  server->Patch(R"(/experiments/([^/]+))",
                [&service](const httplib::Request& req, httplib::Response& res) {
                  guarded(res, [&] {
                    const Json body = Json::parse(req.body);
                    ExperimentPatch patch;
                    if (body.contains("bounds")) {
                      for (const auto& [name, b] : body["bounds"].items()) {
                        patch.bounds[name] = {b.at("lower").get<double>(),
                                              b.at("upper").get<double>()};
                      }
                    }
                    if (body.contains("budget")) {
                      patch.budget = body["budget"].get<double>();
                    }
                    service.update_experiment(req.matches[1], patch);
                    reply_json(res, 200, Json{{"status", "ok"}});
                  });
                });

  server->Get(R"(/experiments/([^/]+)/best)",
              [&service](const httplib::Request& req, httplib::Response& res) {
                guarded(res, [&] {
                  const auto [config, metric] = service.get_best(req.matches[1]);
                  reply_json(res, 200,
                             Json{{"config", config_to_json(config)},
                                  {"metric", metric}});
                });
              });

  return server;
}

int serve_http(SuggestionService& service, const std::string& host, int port) {
  auto server = make_http_server(service);
  std::cerr << "serving on " << host << ":" << port << "\n";
  return server->listen(host, port) ? 0 : 1;
}

} // namespace mulch
