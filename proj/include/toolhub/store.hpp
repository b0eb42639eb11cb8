#pragma once

#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "toolhub/reliability.hpp"
#include "toolhub/runtime.hpp"
#include "toolhub/schema.hpp"
#include "toolhub/trace.hpp"

namespace toolhub::store {

namespace fs = std::filesystem;

struct StoredTool {
  schema::ToolDescriptor descriptor;
  runtime::ToolBinding binding;
};

/// Directory-backed state.
///
///   tools/<name>.json          manifest
///   bindings/<name>.json       binding
///   tests/<tool>.json          array of cases
///   backends.json              backend declarations
///   stub/routes.json           stub tool-server routes (optional)
///   state/rounds.jsonl         append-only round log; the commit point
///   state/checks/<round>.json  per-round check results
///   state/profiles/<tool>.json materialized, rebuildable from the log
///   state/submissions/<id>.json
///   state/audit.jsonl          review decisions
///   state/traces/<id>.jsonl    plus state/traces/blobs/<digest>
///   state/runs/<id>.json
class FileStore final : public reliability::RoundStore {
 public:
  explicit FileStore(fs::path root);

  /// Copies the seed layout into `root` and creates the state directories.
  /// Existing files are left alone unless `overwrite`.
  static void initialize(const fs::path& root, const fs::path& seed_dir, bool overwrite = false);
  static bool is_initialized(const fs::path& root);

  const fs::path& root() const { return root_; }

  // Tools. Throws StoreError naming the file for an invalid manifest or binding.
  std::vector<StoredTool> load_tools() const;
  void save_tool(const schema::ToolDescriptor& descriptor, const runtime::ToolBinding& binding);

  // Cases.
  std::vector<verification::TestCase> load_cases(const std::string& tool) const;
  std::map<std::string, std::vector<verification::TestCase>> load_all_cases() const override;
  void save_cases(const std::string& tool, const std::vector<verification::TestCase>& cases);

  // Rounds. A trailing line without LF is an interrupted append and ignored.
  std::vector<reliability::EvaluationRound> load_rounds() const override;
  std::optional<reliability::EvaluationRound> load_round(std::int64_t round_id) const;
  std::map<std::string, std::vector<verification::CheckResult>> load_checks(std::int64_t round_id) const;
  void commit_round(const reliability::EvaluationRound& round,
                    const std::map<std::string, std::vector<verification::CheckResult>>& checks,
                    const std::map<std::string, reliability::ReliabilityProfile>& profiles) override;
  std::mutex& round_mutex() override { return round_mu_; }

  /// Called with a step name ("checks", "commit", "profiles") before each
  /// write of a round commit; throwing from it simulates a crash there.
  void set_fault_hook(std::function<void(std::string_view)> hook) { fault_hook_ = std::move(hook); }

  // Submissions and audit trail.
  std::vector<Json> load_submissions() const;
  std::optional<Json> load_submission(const std::string& id) const;
  void save_submission(const std::string& id, const Json& doc);
  std::string next_submission_id() const;
  void append_audit(const Json& record);
  std::vector<Json> load_audit() const;

  // Traces and runs.
  void save_trace(const trace::ExecutionTrace& trace);
  std::optional<std::string> load_trace_jsonl(const std::string& trace_id) const;
  bool has_trace(const std::string& trace_id) const;
  std::optional<std::string> load_blob(const std::string& digest) const;
  void save_run(const std::string& run_id, const Json& doc);
  std::optional<Json> load_run(const std::string& run_id) const;
  /// Next unused sequence number for run/trace ids.
  std::int64_t next_run_number() const;

  /// Backend declarations (backends.json), empty object when absent.
  Json load_backends() const;
  /// Stub routes document, if the layout ships one.
  std::optional<Json> load_stub_routes() const;

  /// Serializes multi-file mutations from concurrent requests.
  std::mutex& mutation_mutex() { return mutation_mu_; }

 private:
  fs::path state_dir() const { return root_ / "state"; }
  void fault(std::string_view step) const;
  static void append_line(const fs::path& path, const std::string& line);
  static std::vector<Json> read_jsonl(const fs::path& path);

  fs::path root_;
  std::mutex round_mu_;
  std::mutex mutation_mu_;
  std::function<void(std::string_view)> fault_hook_;
};

/// sha256 over every file's relative path and content, in path order.
std::string hash_tree(const fs::path& root);

}  // namespace toolhub::store
