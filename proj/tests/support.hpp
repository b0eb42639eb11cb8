#pragma once

// Shared fixtures for the unit tests and the acceptance binary.

#include <atomic>
#include <cstdlib>
#include <map>
#include <mutex>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "toolhub/agents.hpp"
#include "toolhub/llm.hpp"
#include "toolhub/reliability.hpp"
#include "toolhub/runtime.hpp"
#include "toolhub/schema.hpp"
#include "toolhub/stub.hpp"

namespace testsupport {

using toolhub::Json;
namespace fs = std::filesystem;

inline fs::path source_dir() { return TOOLHUB_SOURCE_DIR; }
inline fs::path seed_dir() { return source_dir() / "seed"; }
inline fs::path fixtures_dir() { return source_dir() / "fixtures"; }

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "toolhub-test-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

inline Json param(const std::string& name, const std::string& type, bool required = true) {
  return {{"name", name}, {"type", type}, {"required", required}, {"description", name}};
}

inline Json manifest(const std::string& name, const std::string& category, Json arguments,
                     const std::string& output_kind = "text", std::vector<std::string> tags = {}) {
  return {{"name", name},
          {"version", "1.0.0"},
          {"description", "Test tool " + name},
          {"category", category},
          {"arguments", std::move(arguments)},
          {"output", {{"kind", output_kind}, {"description", "result"}}},
          {"tags", tags}};
}

inline toolhub::schema::ToolDescriptor descriptor(const Json& m) {
  auto d = toolhub::schema::validate_manifest(m);
  if (!d) throw std::invalid_argument("fixture manifest invalid: " + d.error().front().field);
  return d.value();
}

/// Registry holding the built-in program tools under their own names.
inline std::unique_ptr<toolhub::runtime::ToolRegistry> program_registry() {
  using toolhub::runtime::ProgramBinding;
  auto reg = std::make_unique<toolhub::runtime::ToolRegistry>();
  auto add = [&](const Json& m) {
    auto d = descriptor(m);
    const std::string fn = d.name;
    if (!reg->register_tool(std::move(d), ProgramBinding{fn})) throw std::logic_error("register failed");
  };
  add(manifest("calculator", "program", Json::array({param("expression", "string")}), "text",
               {"math", "arithmetic"}));
  Json units = Json::array({param("value", "number"), param("from", "string"), param("to", "string")});
  add(manifest("unit_converter", "program", units, "number", {"units", "conversion"}));
  Json date = Json::array({param("base", "string"), param("add_days", "integer")});
  add(manifest("date_calculator", "program", date, "text", {"date", "calendar"}));
  Json str = Json::array({param("text", "string"), param("operation", "string")});
  add(manifest("string_transformer", "program", str, "text", {"text", "string"}));
  add(manifest("maze_solver", "program", Json::array({param("maze", "string-list")}), "json-object",
               {"maze", "path", "solve"}));
  return reg;
}

inline std::shared_ptr<toolhub::llm::ScriptedBackend> script(const Json& replies) {
  return toolhub::llm::ScriptedBackend::from_json(replies);
}

inline Json tool_call(const std::string& name, Json args) {
  return {{"tool_call", {{"name", name}, {"arguments", std::move(args)}}}};
}

/// Runs one episode against `registry` with `replies` as the "default" backend.
inline toolhub::agents::RunResult run_scripted(toolhub::runtime::ToolRegistry& registry, const Json& replies,
                                               toolhub::agents::PolicyConfig policy, const std::string& query,
                                               std::vector<std::string> toolbox,
                                               const std::string& run_id = "run-test") {
  registry.backends()->add("scripted", script(replies));
  policy.backend_id = "scripted";
  toolhub::agents::RunRequest req;
  req.run_id = run_id;
  req.trace_id = "trace-" + run_id;
  req.query = query;
  req.toolbox = std::move(toolbox);
  req.policy = policy;
  return toolhub::agents::run_agent(registry, req);
}

inline toolhub::agents::PolicyConfig policy(toolhub::agents::PolicyKind kind, int max_steps = 10) {
  toolhub::agents::PolicyConfig p;
  p.kind = kind;
  p.max_steps = max_steps;
  return p;
}

/// In-memory round store; commits are all-or-nothing by construction.
class MemoryRoundStore final : public toolhub::reliability::RoundStore {
 public:
  std::map<std::string, std::vector<toolhub::verification::TestCase>> cases;
  std::vector<toolhub::reliability::EvaluationRound> rounds;

  std::map<std::string, std::vector<toolhub::verification::TestCase>> load_all_cases() const override {
    return cases;
  }
  std::vector<toolhub::reliability::EvaluationRound> load_rounds() const override { return rounds; }
  void commit_round(const toolhub::reliability::EvaluationRound& round,
                    const std::map<std::string, std::vector<toolhub::verification::CheckResult>>&,
                    const std::map<std::string, toolhub::reliability::ReliabilityProfile>&) override {
    rounds.push_back(round);
  }
  std::mutex& round_mutex() override { return mu_; }

 private:
  std::mutex mu_;
};

/// Registry with one program tool "drifting" whose correctness is controlled
/// from outside: case i (argument {"i": i}) answers "ok" iff i < *correct.
inline std::unique_ptr<toolhub::runtime::ToolRegistry> drifting_registry(std::shared_ptr<std::atomic<int>> correct) {
  auto programs = toolhub::runtime::builtin_programs();
  programs.add("drifting", [correct](const Json& args) -> Json {
    return args.at("i").get<int>() < correct->load() ? "ok" : "wrong";
  });
  auto reg = std::make_unique<toolhub::runtime::ToolRegistry>(std::move(programs));
  auto d = descriptor(manifest("drifting", "program", Json::array({param("i", "integer")})));
  if (!reg->register_tool(std::move(d), toolhub::runtime::ProgramBinding{"drifting"})) {
    throw std::logic_error("register failed");
  }
  return reg;
}

inline std::vector<toolhub::verification::TestCase> drifting_suite(int n) {
  std::vector<toolhub::verification::TestCase> out;
  for (int i = 0; i < n; ++i) {
    toolhub::verification::TestCase c;
    c.id = "d-" + std::to_string(i);
    c.tool_name = "drifting";
    c.input_args = {{"i", i}};
    c.expectation = toolhub::verification::ExactMatch{"ok"};
    c.status = toolhub::verification::CaseStatus::accepted;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace testsupport
