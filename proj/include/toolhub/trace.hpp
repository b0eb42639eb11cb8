#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "toolhub/common.hpp"
#include "toolhub/runtime.hpp"

namespace toolhub::trace {

enum class EventKind {
  policy_step,
  tool_validation,
  tool_invocation,
  tool_result,
  tool_error,
  backend_call,
  memory_write,
  verifier_decision,
  warning,
  final_answer,
};

enum class Attribution { policy_error, tool_error };

std::string_view to_string(EventKind k);
std::optional<EventKind> parse_event_kind(std::string_view s);
std::string_view to_string(Attribution a);
std::optional<Attribution> parse_attribution(std::string_view s);

/// Failure classes that are the policy's fault (tool-use) rather than the tool's.
inline constexpr std::string_view kUnknownToolClass = "unknown_tool";
Attribution attribute_failure_class(std::string_view failure_class);

struct TraceEvent {
  std::int64_t seq = 0;
  std::string timestamp;
  EventKind kind = EventKind::policy_step;
  Json payload = Json::object();
  std::optional<Attribution> attribution;

  /// Ignores timestamps.
  bool operator==(const TraceEvent& other) const;
};

class TraceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TraceFormatError : public std::runtime_error {
 public:
  TraceFormatError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Payload strings above this size are replaced by a digest and kept as a sidecar blob.
inline constexpr std::size_t kInlinePayloadLimit = 4096;

/// Append-only structured event log for one agent run. Appends are serialized;
/// finalize() is a one-way barrier after which the trace is immutable.
class ExecutionTrace {
 public:
  ExecutionTrace(std::string trace_id, std::string run_id, std::string created_at = now_iso8601());

  ExecutionTrace(const ExecutionTrace& other);
  ExecutionTrace& operator=(const ExecutionTrace& other);

  /// Returns the assigned seq. Throws TraceError after finalize().
  std::int64_t append(EventKind kind, Json payload, std::optional<Attribution> attribution = std::nullopt);
  std::int64_t append(TraceEvent event);
  void finalize();

  const std::string& trace_id() const { return trace_id_; }
  const std::string& run_id() const { return run_id_; }
  const std::string& created_at() const { return created_at_; }
  bool finalized() const;
  std::vector<TraceEvent> events() const;
  std::size_t size() const;
  /// digest -> content for payload strings moved out of line.
  std::map<std::string, std::string> blobs() const;

  std::size_t count(EventKind kind) const;

  /// Equality up to timestamps.
  bool operator==(const ExecutionTrace& other) const;

 private:
  Json externalize(Json payload);

  mutable std::mutex mu_;
  std::string trace_id_;
  std::string run_id_;
  std::string created_at_;
  bool finalized_ = false;
  std::vector<TraceEvent> events_;
  std::map<std::string, std::string> blobs_;
};

struct ToolFailureCounts {
  int policy_errors = 0;
  int tool_errors = 0;
  bool operator==(const ToolFailureCounts&) const = default;
};

struct FailureSummary {
  int n_policy_errors = 0;
  int n_tool_errors = 0;
  std::map<std::string, ToolFailureCounts> per_tool;

  bool operator==(const FailureSummary&) const = default;
};

/// Counts derived purely from event attributions. Requires a finalized trace.
FailureSummary attribute_failures(const ExecutionTrace& trace);
Json to_json(const FailureSummary& s);

Json to_json(const TraceEvent& e);
TraceEvent event_from_json(const Json& j);

/// First line is a header {"type":"header","trace_id","run_id","created_at"};
/// one event object per following line. LF-terminated.
std::string serialize_jsonl(const ExecutionTrace& trace);
/// Throws TraceFormatError naming the 1-based offending line.
ExecutionTrace deserialize_jsonl(std::string_view doc);

}  // namespace toolhub::trace
