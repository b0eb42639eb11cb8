#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "toolhub/common.hpp"

namespace httplib {
class Server;
}

namespace toolhub::stub {

// A canned response. A route answers a request when method and path are equal
// and every `match` substring occurs in the query string or body.
struct Route {
  std::string method = "GET";
  std::string path;
  std::vector<std::string> match;
  int status = 200;
  std::string body;
  std::string content_type = "text/plain";
  int delay_ms = 0;
};

/// routes.json: array of {method, path, match (string or list), status, body
/// (string, or any JSON value served as application/json), delay_ms}.
Expected<std::vector<Route>, std::vector<Violation>> parse_routes(const Json& doc);

/// Configurable HTTP server standing in for external tool endpoints. Routes
/// may be replaced while serving; unmatched requests get 404.
class StubServer {
 public:
  explicit StubServer(std::vector<Route> routes = {});
  ~StubServer();
  StubServer(const StubServer&) = delete;
  StubServer& operator=(const StubServer&) = delete;

  /// Binds 127.0.0.1 on an ephemeral port and serves on a background thread.
  void start();
  void stop();

  int port() const { return port_; }
  std::string base_url() const;

  void set_routes(std::vector<Route> routes);
  void add_route(Route route);
  std::size_t hits() const;

 private:
  std::optional<Route> find(const std::string& method, const std::string& path, const std::string& haystack) const;

  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
  mutable std::mutex mu_;
  std::vector<Route> routes_;
  mutable std::size_t hits_ = 0;
};

}  // namespace toolhub::stub
