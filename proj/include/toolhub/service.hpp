#pragma once

#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "toolhub/workspace.hpp"

namespace httplib {
class Server;
}

namespace toolhub::service {

struct ServiceConfig {
  /// When set, review and round-trigger endpoints require "Authorization: Bearer <token>".
  std::optional<std::string> auth_token;
};

/// REST front end over a workspace. Every non-2xx body is
/// {status, code, message, violations?}.
class Service {
 public:
  Service(workspace::Workspace& workspace, ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Serves on a background thread; port 0 picks an ephemeral port.
  /// Throws std::runtime_error when the port cannot be bound.
  void start(const std::string& host = "127.0.0.1", int port = 0);
  /// Serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();
  int port() const { return port_; }

 private:
  void routes();

  workspace::Workspace& ws_;
  ServiceConfig config_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace toolhub::service
