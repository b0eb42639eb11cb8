#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "toolhub/llm.hpp"
#include "toolhub/runtime.hpp"
#include "toolhub/trace.hpp"

namespace toolhub::agents {

enum class PolicyKind { prompting_zero_shot, prompting_cot, react, planner_executor, multi_agent };
enum class VerifierMode { backend, rule };
enum class RunStatus { completed, step_budget_exhausted, failed };

std::string_view to_string(PolicyKind k);
std::optional<PolicyKind> parse_policy_kind(std::string_view s);
std::string_view to_string(RunStatus s);
std::optional<RunStatus> parse_run_status(std::string_view s);

struct PolicyConfig {
  PolicyKind kind = PolicyKind::react;
  int max_steps = 10;
  std::string backend_id = "default";
  bool reliability_routing = false;
  int per_subproblem_steps = 5;
  VerifierMode verifier = VerifierMode::backend;
  llm::Decoding decoding;
  /// Replaces named template assets for this run only.
  std::map<std::string, std::string> templates;
};

Json to_json(const PolicyConfig& c);
/// Unknown `kind` or non-positive budgets are violations.
Expected<PolicyConfig, std::vector<Violation>> parse_policy_config(const Json& doc);

/// Named prompt templates with {placeholder} substitution.
class TemplateSet {
 public:
  /// Loads every *.txt in `dir`, keyed by file stem.
  static TemplateSet load(const std::filesystem::path& dir);
  /// TOOLHUB_ASSET_DIR/prompts if set, else the assets shipped with the build.
  static const TemplateSet& defaults();

  void set(std::string name, std::string text) { templates_[std::move(name)] = std::move(text); }
  /// Throws std::out_of_range naming a missing template.
  const std::string& get(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, std::string> templates_;
};

struct MemoryEntry {
  std::string sub_problem;
  std::string tool_name;
  std::string result;
  bool verified = true;
  bool operator==(const MemoryEntry&) const = default;
};

/// Per-run store of verifier-approved intermediate results.
class SharedMemory {
 public:
  /// Throws std::logic_error for an unverified entry.
  void write(MemoryEntry entry);
  const std::vector<MemoryEntry>& entries() const { return entries_; }
  std::string summary() const;

 private:
  std::vector<MemoryEntry> entries_;
};

struct AgentRun {
  std::string run_id;
  std::string query;
  std::vector<std::string> toolbox;
  PolicyConfig policy;
  std::string answer;
  std::string trace_ref;
  RunStatus status = RunStatus::completed;
  std::vector<MemoryEntry> memory;  // multi_agent only
  std::string memory_summary;
  /// Set when the run failed because a backend call failed.
  std::optional<std::string> backend_failure;
  int invocations = 0;
};

Json to_json(const AgentRun& r);

struct RunResult {
  AgentRun run;
  trace::ExecutionTrace trace;
};

/// "FINAL ANSWER:" sentinel (last occurrence, rest of that line), else the
/// whole trimmed content.
std::string extract_final_answer(const std::string& content);

// --- Tool selection ----------------------------------------------------------

enum class SelectionMode { lexical, llm_ranked };
std::optional<SelectionMode> parse_selection_mode(std::string_view s);
std::string_view to_string(SelectionMode m);

inline constexpr double kRoutingEpsilon = 0.05;

/// Token-overlap score between a query and a tool's name, description and tags.
double lexical_score(const std::string& query, const schema::ToolDescriptor& tool);

/// Greedy top-k from raw relevance scores. Scores are normalized by the
/// maximum, so scaling them changes nothing. With routing on, tools within
/// kRoutingEpsilon of a group leader are reordered evaluated-first, then by
/// accuracy. Remaining ties break by name.
std::vector<std::string> rank_tools(const std::vector<schema::ToolDescriptor>& tools,
                                    const std::map<std::string, double>& raw_scores, std::size_t k,
                                    bool reliability_routing);

struct SelectionRequest {
  std::string query;
  std::size_t k = 3;
  SelectionMode mode = SelectionMode::lexical;
  bool reliability_routing = false;
  std::string backend_id = "default";
  std::vector<std::string> candidates;  // empty: every registered tool
};

/// Fails when k is 0 or exceeds the registry size. llm_ranked falls back to
/// lexical on any backend failure and records a warning in `trace`.
Expected<std::vector<std::string>, std::string> select_tools(const runtime::ToolRegistry& registry,
                                                             const SelectionRequest& request,
                                                             trace::ExecutionTrace* trace = nullptr,
                                                             const TemplateSet& templates = TemplateSet::defaults());

// --- Runs --------------------------------------------------------------------

struct RunRequest {
  std::string run_id;
  std::string trace_id;
  std::string query;
  std::vector<std::string> toolbox;
  PolicyConfig policy;
  /// When set, select_tools picks the toolbox first (among `toolbox` if
  /// non-empty) and the choice is recorded in the trace.
  std::optional<SelectionRequest> selection;
};

/// Executes one run. The trace is finalized on return, including failed runs.
RunResult run_agent(runtime::ToolRegistry& registry, const RunRequest& request,
                    const TemplateSet& templates = TemplateSet::defaults());

}  // namespace toolhub::agents
