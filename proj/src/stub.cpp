#include "toolhub/stub.hpp"

#include <httplib.h>

namespace toolhub::stub {

Expected<std::vector<Route>, std::vector<Violation>> parse_routes(const Json& doc) {
  using R = Expected<std::vector<Route>, std::vector<Violation>>;
  if (!doc.is_array()) return R::failure({{"", "routes must be an array"}});
  std::vector<Route> routes;
  std::vector<Violation> vs;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const Json& r = doc[i];
    const std::string at = "[" + std::to_string(i) + "]";
    if (!r.is_object() || !r.contains("path") || !r["path"].is_string()) {
      vs.push_back({at + ".path", "missing required field"});
      continue;
    }
    Route route;
    route.path = r["path"].get<std::string>();
    route.method = r.value("method", "GET");
    route.status = r.value("status", 200);
    route.delay_ms = r.value("delay_ms", 0);
    if (auto m = r.find("match"); m != r.end()) {
      if (m->is_string()) {
        route.match.push_back(m->get<std::string>());
      } else if (m->is_array()) {
        for (const auto& s : *m) route.match.push_back(s.get<std::string>());
      } else {
        vs.push_back({at + ".match", "must be a string or list of strings"});
      }
    }
    if (auto b = r.find("body"); b != r.end()) {
      if (b->is_string()) {
        route.body = b->get<std::string>();
      } else {
        route.body = b->dump();
        route.content_type = "application/json";
      }
    }
    route.content_type = r.value("content_type", route.content_type);
    routes.push_back(std::move(route));
  }
  if (!vs.empty()) return R::failure(std::move(vs));
  return routes;
}

StubServer::StubServer(std::vector<Route> routes) : routes_(std::move(routes)) {}

StubServer::~StubServer() { stop(); }

void StubServer::start() {
  if (server_) return;
  server_ = std::make_unique<httplib::Server>();
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    std::string query;
    for (const auto& [k, v] : req.params) query += k + "=" + v + "&";
    auto route = find(req.method, req.path, query + "\n" + req.body);
    if (!route) {
      res.status = 404;
      res.set_content(R"({"error":"no stub route"})", "application/json");
      return;
    }
    if (route->delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(route->delay_ms));
    res.status = route->status;
    res.set_content(route->body, route->content_type);
  };
  server_->Get(".*", handler);
  server_->Post(".*", handler);
  server_->Put(".*", handler);
  server_->Delete(".*", handler);
  port_ = server_->bind_to_any_port("127.0.0.1");
  if (port_ <= 0) {
    server_.reset();
    throw std::runtime_error("stub server could not bind a port");
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void StubServer::stop() {
  if (!server_) return;
  server_->stop();
  if (thread_.joinable()) thread_.join();
  server_.reset();
}

std::string StubServer::base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

void StubServer::set_routes(std::vector<Route> routes) {
  std::lock_guard lock(mu_);
  routes_ = std::move(routes);
}

void StubServer::add_route(Route route) {
  std::lock_guard lock(mu_);
  routes_.push_back(std::move(route));
}

std::size_t StubServer::hits() const {
  std::lock_guard lock(mu_);
  return hits_;
}

std::optional<Route> StubServer::find(const std::string& method, const std::string& path,
                                      const std::string& haystack) const {
  std::lock_guard lock(mu_);
  ++hits_;
  for (const auto& r : routes_) {
    if (r.method != method || r.path != path) continue;
    bool ok = true;
    for (const auto& m : r.match) ok = ok && haystack.find(m) != std::string::npos;
    if (ok) return r;
  }
  return std::nullopt;
}

}  // namespace toolhub::stub
