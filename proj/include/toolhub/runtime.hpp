#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "toolhub/common.hpp"
#include "toolhub/llm.hpp"
#include "toolhub/schema.hpp"

namespace toolhub::runtime {

// --- Bindings ----------------------------------------------------------------

/// A named built-in deterministic function from the program catalog.
struct ProgramBinding {
  std::string function;
};

/// HTTP endpoint. `url` may contain `${ENV_VAR}` and `{argument}` placeholders;
/// header values may contain `${ENV_VAR}` placeholders.
struct ApiBinding {
  std::string url;
  std::string method = "POST";
  std::map<std::string, std::string> headers;
  int timeout_ms = 30000;
  int max_retries = 2;
};

/// Prompt template with `{argument}` placeholders rendered through an LLM backend.
struct PromptBinding {
  std::string prompt_template;
  std::string backend_id = "default";
  llm::Decoding decoding;
};

using ToolBinding = std::variant<ProgramBinding, ApiBinding, PromptBinding>;

schema::Category category_of(const ToolBinding& binding);
Json to_json(const ToolBinding& binding);
Expected<ToolBinding, std::vector<Violation>> parse_binding(const Json& doc);

// --- Outcomes ----------------------------------------------------------------

enum class ErrorClass { validation, execution, timeout, rate_limited, unavailable, contract_violation };

std::string_view to_string(ErrorClass c);
std::optional<ErrorClass> parse_error_class(std::string_view s);
bool is_retryable(ErrorClass c);

struct Observation {
  std::string tool_name;
  Json arguments;
  schema::OutputKind output_kind = schema::OutputKind::text;
  Json output_value;  // string for text/file-reference, number, or object
  double latency_ms = 0.0;
  int attempt_count = 0;

  /// Textual rendering used by checks and by policies as an observation message.
  std::string text() const;
};

struct ToolError {
  ErrorClass error_class = ErrorClass::execution;
  std::string message;
  std::string tool_name;
  int attempt_count = 0;
  std::vector<Violation> violations;  // populated for validation errors
};

using Outcome = std::variant<Observation, ToolError>;

Json to_json(const Observation& o);
Json to_json(const ToolError& e);
Json to_json(const Outcome& o);
Observation observation_from_json(const Json& j);
ToolError tool_error_from_json(const Json& j);

std::string output_text(const Json& value);

/// Coerces raw binding output to the descriptor's output kind.
Expected<Json, std::string> check_output_contract(const schema::ToolDescriptor& descriptor, const Json& raw_output);

// --- Program catalog ---------------------------------------------------------

/// Thrown by program functions to report an execution failure.
class ExecutionFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using ProgramFunction = std::function<Json(const Json& args)>;

class ProgramCatalog {
 public:
  void add(std::string name, ProgramFunction fn);
  const ProgramFunction* find(const std::string& name) const;

 private:
  std::map<std::string, ProgramFunction> functions_;
};

/// calculator, unit_converter, date_calculator, string_transformer, maze_solver.
ProgramCatalog builtin_programs();

// --- Registry ----------------------------------------------------------------

struct Budget {
  std::optional<int> timeout_ms;   // per attempt; defaults to the binding's or 30 000 ms
  std::optional<int> max_retries;  // defaults to the binding's or 2
};

struct RetryPolicy {
  int base_ms = 250;
  double factor = 2.0;
  double jitter = 0.2;  // +/- fraction applied to every delay
};

class UnknownToolError : public std::out_of_range {
 public:
  explicit UnknownToolError(const std::string& name) : std::out_of_range("unknown tool '" + name + "'"), name_(name) {}
  const std::string& tool_name() const { return name_; }

 private:
  std::string name_;
};

struct RegistryError {
  enum class Kind { duplicate_name, binding_mismatch, unknown_program } kind;
  std::string message;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Tool registry and execution manager. Lookups and invocations may run
/// concurrently; registration takes the writer lock.
class ToolRegistry {
 public:
  explicit ToolRegistry(ProgramCatalog programs = builtin_programs(),
                        std::shared_ptr<llm::BackendRegistry> backends = std::make_shared<llm::BackendRegistry>());

  Expected<std::monostate, RegistryError> register_tool(schema::ToolDescriptor descriptor, ToolBinding binding);

  bool contains(const std::string& name) const;
  std::size_t size() const;
  std::optional<schema::ToolDescriptor> descriptor(const std::string& name) const;
  std::optional<ToolBinding> binding(const std::string& name) const;
  /// Sorted by name.
  std::vector<schema::ToolDescriptor> descriptors() const;
  std::vector<std::string> names() const;

  void set_accuracy_summary(const std::string& name, std::optional<schema::AccuracySummary> summary);

  /// Throws UnknownToolError when `tool_name` is not registered.
  Outcome invoke(const std::string& tool_name, const Json& args, const Budget& budget = {}) const;

  void set_retry_policy(RetryPolicy policy) { retry_ = policy; }
  const RetryPolicy& retry_policy() const { return retry_; }
  /// Environment used for `${VAR}` placeholders; falls back to the process environment.
  void set_env(std::map<std::string, std::string> overrides);
  std::optional<std::string> env(const std::string& name) const;

  ProgramCatalog& programs() { return programs_; }
  const std::shared_ptr<llm::BackendRegistry>& backends() const { return backends_; }

  /// Number of binding executions started (validation failures never count).
  std::uint64_t execution_count() const { return executions_.load(); }

 private:
  struct Entry {
    schema::ToolDescriptor descriptor;
    ToolBinding binding;
  };

  struct Attempt {
    std::optional<Json> raw;
    ErrorClass error_class = ErrorClass::execution;
    std::string message;
  };

  Attempt run_binding(const Entry& entry, const Json& args, int timeout_ms) const;
  Attempt run_program(const ProgramBinding& b, const Json& args) const;
  Attempt run_api(const ApiBinding& b, const Json& args, int timeout_ms) const;
  Attempt run_prompt(const PromptBinding& b, const Json& args) const;

  mutable std::shared_mutex mu_;
  std::map<std::string, Entry> entries_;
  ProgramCatalog programs_;
  std::shared_ptr<llm::BackendRegistry> backends_;
  RetryPolicy retry_;
  std::map<std::string, std::string> env_overrides_;
  mutable std::atomic<std::uint64_t> executions_{0};
};

}  // namespace toolhub::runtime
