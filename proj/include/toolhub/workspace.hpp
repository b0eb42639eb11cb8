#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "toolhub/agents.hpp"
#include "toolhub/community.hpp"
#include "toolhub/reliability.hpp"
#include "toolhub/runtime.hpp"
#include "toolhub/store.hpp"
#include "toolhub/stub.hpp"

namespace toolhub::workspace {

namespace fs = std::filesystem;

/// Seed state shipped with the build, overridable with TOOLHUB_SEED_DIR.
fs::path default_seed_dir();

struct WorkspaceOptions {
  fs::path state_dir;
  fs::path seed_dir = default_seed_dir();
  /// Copy the seed into an uninitialized state dir on open.
  bool auto_init = true;
};

struct AgentRunSpec {
  std::string query;
  Json policy_config = Json::object();
  std::vector<std::string> tool_names;  // empty: every registered tool
  std::optional<std::size_t> select_k;
  std::string select_mode = "lexical";
  /// Scripted backend for this run only; replaces policy_config.backend_id.
  std::optional<Json> mock_script;
};

struct AgentRunOutcome {
  agents::AgentRun run;
  std::string trace_url;
};

Json to_json(const AgentRunOutcome& o);

/// One opened state directory: store, registry, stub endpoints and community
/// hub wired together. The CLI and the service share it, so both produce the
/// same reports for the same state.
class Workspace {
 public:
  explicit Workspace(WorkspaceOptions options);
  ~Workspace();
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;

  store::FileStore& store() { return *store_; }
  runtime::ToolRegistry& registry() { return *registry_; }
  community::CommunityHub& hub() { return *hub_; }
  /// Base URL of the local stub endpoint server, when the state declares routes.
  std::optional<std::string> stub_url() const;

  verification::CheckContext check_context() const;

  /// Throws reliability::NoAcceptedCasesError when nothing is accepted.
  reliability::RoundOutcome run_round(int parallelism = 4);

  std::map<std::string, reliability::ReliabilityProfile> profiles() const;
  Json report() const;
  /// Report entry for one tool; nullopt when the tool is not registered.
  std::optional<Json> tool_report(const std::string& name) const;

  /// Rejects malformed requests up front (unknown policy kind, unknown tools,
  /// bad selection). Accepted requests always persist a run and its trace,
  /// including failed runs.
  Expected<AgentRunOutcome, std::vector<Violation>> run_agent(const AgentRunSpec& spec);

 private:
  void configure_backends();

  std::unique_ptr<store::FileStore> store_;
  std::unique_ptr<runtime::ToolRegistry> registry_;
  std::unique_ptr<community::CommunityHub> hub_;
  std::unique_ptr<stub::StubServer> stub_;
  std::atomic<std::int64_t> next_run_{1};
};

}  // namespace toolhub::workspace
