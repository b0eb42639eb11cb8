#include "toolhub/service.hpp"

#include <httplib.h>

#include <stdexcept>

namespace toolhub::service {

namespace {

using httplib::Request;
using httplib::Response;

void send_json(Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump() + "\n", "application/json");
}

void send_error(Response& res, int status, std::string code, std::string message,
                const std::vector<Violation>& violations = {}) {
  Json body{{"status", status}, {"code", std::move(code)}, {"message", std::move(message)}};
  if (!violations.empty()) body["violations"] = to_json(violations);
  send_json(res, status, body);
}

// Parses the body as a JSON object, answering 400 otherwise.
std::optional<Json> json_body(const Request& req, Response& res) {
  Json doc = Json::parse(req.body.empty() ? std::string("{}") : req.body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    send_error(res, 400, "bad_request", "request body must be a JSON object");
    return std::nullopt;
  }
  return doc;
}

Json tool_card(const schema::ToolDescriptor& d) {
  return {{"name", d.name},
          {"version", d.version},
          {"description", d.description},
          {"category", schema::to_string(d.category)},
          {"tags", d.tags},
          {"accuracy_summary", d.accuracy_summary ? to_json(*d.accuracy_summary) : Json(nullptr)}};
}

int review_status(community::ReviewError::Kind kind) {
  switch (kind) {
    case community::ReviewError::Kind::not_found:
      return 404;
    case community::ReviewError::Kind::conflict:
      return 409;
    case community::ReviewError::Kind::invalid:
      break;
  }
  return 400;
}

std::string_view review_code(community::ReviewError::Kind kind) {
  switch (kind) {
    case community::ReviewError::Kind::not_found:
      return "not_found";
    case community::ReviewError::Kind::conflict:
      return "conflict";
    case community::ReviewError::Kind::invalid:
      break;
  }
  return "invalid";
}

}  // namespace

Service::Service(workspace::Workspace& workspace, ServiceConfig config)
    : ws_(workspace), config_(std::move(config)), server_(std::make_unique<httplib::Server>()) {
  routes();
}

Service::~Service() { stop(); }

void Service::start(const std::string& host, int port) {
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
  } else {
    port_ = server_->bind_to_port(host, port) ? port : -1;
  }
  if (port_ <= 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void Service::run(const std::string& host, int port) {
  if (!server_->bind_to_port(host, port)) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  port_ = port;
  server_->listen_after_bind();
}

void Service::stop() {
  // Handlers run to completion before listen returns, so in-flight traces are flushed.
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

void Service::routes() {
  auto& s = *server_;
  auto authorized = [this](const Request& req, Response& res) {
    if (!config_.auth_token) return true;
    if (req.get_header_value("Authorization") == "Bearer " + *config_.auth_token) return true;
    send_error(res, 401, "unauthorized", "missing or invalid bearer token");
    return false;
  };

  s.set_exception_handler([](const Request&, Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const StoreError& e) {
      send_error(res, 500, "state_corrupt", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  });
  s.set_error_handler([](const Request&, Response& res) {
    if (res.body.empty()) send_error(res, res.status, res.status == 404 ? "not_found" : "error", "no such endpoint");
  });

  // --- tools ---------------------------------------------------------------

  s.Get("/v1/tools", [this](const Request&, Response& res) {
    Json cards = Json::array();
    for (const auto& d : ws_.registry().descriptors()) cards.push_back(tool_card(d));
    send_json(res, 200, cards);
  });

  s.Get(R"(/v1/tools/([^/]+))", [this](const Request& req, Response& res) {
    auto d = ws_.registry().descriptor(req.matches[1]);
    if (!d) return send_error(res, 404, "not_found", "unknown tool '" + std::string(req.matches[1]) + "'");
    Json card = to_json(*d);
    card["accuracy_summary"] = d->accuracy_summary ? to_json(*d->accuracy_summary) : Json(nullptr);
    send_json(res, 200, card);
  });

  s.Post(R"(/v1/tools/([^/]+)/invoke)", [this](const Request& req, Response& res) {
    const std::string name = req.matches[1];
    if (!ws_.registry().contains(name)) return send_error(res, 404, "not_found", "unknown tool '" + name + "'");
    auto args = json_body(req, res);
    if (!args) return;
    // Tool failures are results, not transport errors: 200 with ok=false.
    auto outcome = ws_.registry().invoke(name, *args);
    Json body = runtime::to_json(outcome);
    body["ok"] = std::holds_alternative<runtime::Observation>(outcome);
    send_json(res, 200, body);
  });

  s.Get(R"(/v1/tools/([^/]+)/reliability)", [this](const Request& req, Response& res) {
    auto entry = ws_.tool_report(req.matches[1]);
    if (!entry) return send_error(res, 404, "not_found", "unknown tool '" + std::string(req.matches[1]) + "'");
    send_json(res, 200, *entry);
  });

  s.Post("/v1/tools", [this](const Request& req, Response& res) {
    auto body = json_body(req, res);
    if (!body) return;
    auto sub = ws_.hub().submit(community::SubmissionKind::tool_manifest, *body, body->value("submitter", "anonymous"));
    if (!sub) return send_error(res, 400, "validation", "tool submission rejected", sub.error());
    send_json(res, 201, community::to_json(*sub));
  });

  // --- community -------------------------------------------------------------

  s.Post("/v1/tests", [this](const Request& req, Response& res) {
    auto body = json_body(req, res);
    if (!body) return;
    auto sub = ws_.hub().submit(community::SubmissionKind::test_case, *body, body->value("submitter", "anonymous"));
    if (!sub) return send_error(res, 400, "validation", "test case rejected", sub.error());
    send_json(res, 201, community::to_json(*sub));
  });

  s.Post("/v1/feedback", [this](const Request& req, Response& res) {
    auto body = json_body(req, res);
    if (!body) return;
    auto sub = ws_.hub().submit(community::SubmissionKind::feedback, *body, body->value("submitter", "anonymous"));
    if (!sub) return send_error(res, 400, "validation", "feedback rejected", sub.error());
    send_json(res, 201, community::to_json(*sub));
  });

  s.Get("/v1/submissions", [this](const Request& req, Response& res) {
    std::optional<verification::CaseStatus> status;
    if (req.has_param("status")) {
      status = verification::parse_case_status(req.get_param_value("status"));
      if (!status) return send_error(res, 400, "bad_request", "status must be pending, accepted or rejected");
    }
    Json out = Json::array();
    for (const auto& sub : ws_.hub().submissions(status)) out.push_back(community::to_json(sub));
    send_json(res, 200, out);
  });

  s.Get(R"(/v1/submissions/([^/]+))", [this](const Request& req, Response& res) {
    auto sub = ws_.hub().find(req.matches[1]);
    if (!sub) return send_error(res, 404, "not_found", "no submission '" + std::string(req.matches[1]) + "'");
    send_json(res, 200, community::to_json(*sub));
  });

  s.Post(R"(/v1/submissions/([^/]+)/review)", [this, authorized](const Request& req, Response& res) {
    if (!authorized(req, res)) return;
    auto body = json_body(req, res);
    if (!body) return;
    const std::string decision = body->value("decision", "");
    if (decision != "accept" && decision != "reject") {
      return send_error(res, 400, "validation", "decision must be accept or reject",
                        {{"decision", "must be accept or reject"}});
    }
    auto out = ws_.hub().review(req.matches[1],
                                decision == "accept" ? community::Decision::accept : community::Decision::reject,
                                body->value("reviewer", ""), body->value("reason", ""));
    if (!out) {
      return send_error(res, review_status(out.error().kind), std::string(review_code(out.error().kind)),
                        out.error().message, out.error().violations);
    }
    send_json(res, 200, community::to_json(*out));
  });

  s.Post(R"(/v1/submissions/([^/]+)/promote)", [this](const Request& req, Response& res) {
    auto draft = ws_.hub().promote_feedback_to_case(req.matches[1]);
    if (!draft) {
      return send_error(res, review_status(draft.error().kind), std::string(review_code(draft.error().kind)),
                        draft.error().message);
    }
    send_json(res, 200, *draft);
  });

  // --- evaluation --------------------------------------------------------------

  s.Post("/v1/eval/rounds", [this, authorized](const Request& req, Response& res) {
    if (!authorized(req, res)) return;
    auto body = json_body(req, res);
    if (!body) return;
    const int parallelism = body->value("parallelism", 4);
    if (parallelism < 1) return send_error(res, 400, "validation", "parallelism must be positive");
    try {
      auto outcome = ws_.run_round(parallelism);
      send_json(res, 201, reliability::to_json(outcome.round));
    } catch (const reliability::NoAcceptedCasesError& e) {
      send_error(res, 409, "no_accepted_cases", e.what());
    }
  });

  s.Get(R"(/v1/eval/rounds/(\d+))", [this](const Request& req, Response& res) {
    const auto id = std::stoll(req.matches[1]);
    auto round = ws_.store().load_round(id);
    if (!round) return send_error(res, 404, "not_found", "no round " + std::string(req.matches[1]));
    Json body = reliability::to_json(*round);
    Json checks = Json::object();
    for (const auto& [tool, results] : ws_.store().load_checks(id)) {
      Json arr = Json::array();
      for (const auto& r : results) arr.push_back(verification::to_json(r));
      checks[tool] = arr;
    }
    body["checks"] = checks;
    send_json(res, 200, body);
  });

  s.Get("/v1/reports/latest", [this](const Request&, Response& res) { send_json(res, 200, ws_.report()); });

  // --- agents ----------------------------------------------------------------

  s.Post("/v1/agent/runs", [this](const Request& req, Response& res) {
    auto body = json_body(req, res);
    if (!body) return;
    workspace::AgentRunSpec spec;
    std::vector<Violation> shape;
    spec.query = body->value("query", "");
    spec.policy_config = body->value("policy_config", Json::object());
    if (auto it = body->find("tool_names"); it != body->end() && !it->is_null()) {
      if (!it->is_array()) {
        shape.push_back({"tool_names", "must be a list of tool names"});
      } else {
        for (const auto& n : *it) {
          if (n.is_string()) {
            spec.tool_names.push_back(n.get<std::string>());
          } else {
            shape.push_back({"tool_names", "must be a list of tool names"});
          }
        }
      }
    }
    if (auto it = body->find("selection"); it != body->end() && !it->is_null()) {
      const Json k = it->value("k", Json());
      if (!k.is_number_integer() || k.get<long long>() < 1) {
        shape.push_back({"selection.k", "must be a positive integer"});
      } else {
        spec.select_k = k.get<std::size_t>();
      }
      spec.select_mode = it->value("mode", "lexical");
    }
    if (auto it = body->find("mock_script"); it != body->end() && !it->is_null()) spec.mock_script = *it;
    if (!shape.empty()) return send_error(res, 400, "validation", "invalid agent run request", shape);

    auto out = ws_.run_agent(spec);
    if (!out) return send_error(res, 400, "validation", "invalid agent run request", out.error());
    if (out->run.backend_failure) {
      Json body_out{{"status", 502},
                    {"code", "backend_unavailable"},
                    {"message", *out->run.backend_failure},
                    {"run_id", out->run.run_id},
                    {"trace_url", out->trace_url}};
      return send_json(res, 502, body_out);
    }
    send_json(res, 200, workspace::to_json(*out));
  });

  s.Get(R"(/v1/agent/runs/([^/]+))", [this](const Request& req, Response& res) {
    auto run = ws_.store().load_run(req.matches[1]);
    if (!run) return send_error(res, 404, "not_found", "no run '" + std::string(req.matches[1]) + "'");
    send_json(res, 200, *run);
  });

  s.Get(R"(/v1/traces/([^/]+))", [this](const Request& req, Response& res) {
    auto jsonl = ws_.store().load_trace_jsonl(req.matches[1]);
    if (!jsonl) return send_error(res, 404, "not_found", "no trace '" + std::string(req.matches[1]) + "'");
    res.status = 200;
    res.set_content(*jsonl, "application/x-ndjson");
  });

  s.Get(R"(/v1/traces/([^/]+)/blobs/([0-9a-f]+))", [this](const Request& req, Response& res) {
    auto blob = ws_.store().load_blob(req.matches[2]);
    if (!blob) return send_error(res, 404, "not_found", "no blob '" + std::string(req.matches[2]) + "'");
    res.status = 200;
    res.set_content(*blob, "application/octet-stream");
  });
}

}  // namespace toolhub::service
