#pragma once

#include "mulch/service.hpp"

#include <memory>
#include <string>

namespace httplib {
class Server;
}

namespace mulch {

// wires the HTTP/JSON API onto a server instance:
//   POST  /experiments                      -> {"id": ...}
//   GET   /experiments/{id}/suggestions     -> SuggestionRecord
//   POST  /experiments/{id}/observations    {suggestion_id, metric}
//   PATCH /experiments/{id}                 {bounds?, budget?}
//   GET   /experiments/{id}/best            -> {config, metric}
// contract violations map to 4xx with a JSON {code, message} body
std::unique_ptr<httplib::Server> make_http_server(SuggestionService& service);

// blocks serving until the process exits
int serve_http(SuggestionService& service, const std::string& host, int port);

} // namespace mulch
