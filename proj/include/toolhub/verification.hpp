#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "toolhub/common.hpp"
#include "toolhub/llm.hpp"
#include "toolhub/runtime.hpp"

namespace toolhub::verification {

// --- Expectations ------------------------------------------------------------

struct ExactMatch {
  std::string value;
  bool operator==(const ExactMatch&) const = default;
};

/// Passes when |out - expected| <= abs_tol OR |out - expected| <= rel_tol * |expected|.
struct NumericTolerance {
  double expected = 0.0;
  std::optional<double> abs_tol;
  std::optional<double> rel_tol;
  bool operator==(const NumericTolerance&) const = default;
};

/// ECMAScript regex that must match the whole textual output.
struct PatternMatch {
  std::string regex;
  bool operator==(const PatternMatch&) const = default;
};

struct PropertyCheck {
  std::string predicate;
  Json params = Json::object();
  bool operator==(const PropertyCheck&) const = default;
};

struct SemanticMatch {
  std::string reference;
  std::string judge = "default";
  bool operator==(const SemanticMatch&) const = default;
};

using Expectation = std::variant<ExactMatch, NumericTolerance, PatternMatch, PropertyCheck, SemanticMatch>;

/// The selectable evaluation metrics, in display order.
inline constexpr std::string_view kExpectationKinds[] = {"exact", "numeric_tolerance", "pattern", "property",
                                                         "semantic"};

std::string_view kind_name(const Expectation& e);
Json to_json(const Expectation& e);

// --- Property predicates -----------------------------------------------------

struct CheckOutcome {
  bool pass = false;
  std::string detail;
};

struct Predicate {
  std::vector<std::string> required_params;
  std::function<CheckOutcome(const std::string& output_text, const Json& params)> evaluate;
};

/// Fixed, named catalog of declarative predicates.
class PredicateCatalog {
 public:
  void add(std::string name, Predicate predicate);
  const Predicate* find(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, Predicate> predicates_;
};

/// is_valid_json, is_number, non_empty, length_between, number_between,
/// contains_all, contains_any, one_of, json_has_fields.
const PredicateCatalog& builtin_predicates();

/// Parses and validates an `expect` document (regex compiles, predicate and
/// its parameters known, numeric bound configured).
Expected<Expectation, std::vector<Violation>> parse_expectation(const Json& doc,
                                                                const PredicateCatalog& predicates = builtin_predicates());

// --- Test cases --------------------------------------------------------------

enum class Origin { curated, community };
enum class CaseStatus { pending, accepted, rejected };

std::string_view to_string(Origin o);
std::string_view to_string(CaseStatus s);
std::optional<CaseStatus> parse_case_status(std::string_view s);

struct TestCase {
  std::string id;
  std::string tool_name;
  Json input_args = Json::object();
  Expectation expectation;
  Origin origin = Origin::curated;
  CaseStatus status = CaseStatus::pending;
  std::optional<std::string> contributor;
  std::string created_at;
  std::optional<std::string> notes;

  bool operator==(const TestCase&) const = default;
};

/// Case object as stored in tests/<tool>.json (the tool name is implied by the file).
Json to_json(const TestCase& c);
Expected<TestCase, std::vector<Violation>> parse_test_case(const Json& doc, const std::string& tool_name);

// --- Checking ----------------------------------------------------------------

enum class Verdict { pass, fail, error };
std::string_view to_string(Verdict v);
std::optional<Verdict> parse_verdict(std::string_view s);

struct CheckResult {
  std::string case_id;
  Verdict verdict = Verdict::error;
  std::string detail;
  runtime::Outcome tool_outcome;
  std::string checked_at;
};

Json to_json(const CheckResult& r);
CheckResult check_result_from_json(const Json& j);

/// Collaborators needed by semantic and property checks.
struct CheckContext {
  const PredicateCatalog* predicates = &builtin_predicates();
  const llm::BackendRegistry* judges = nullptr;
  /// Judge prompt with {reference} and {candidate} placeholders.
  std::string judge_template;
};

CheckOutcome check(const Expectation& expectation, const runtime::Observation& output, const CheckContext& ctx = {});

/// Invokes the case's tool with its inputs under the default budget, then checks.
CheckResult run_case(const runtime::ToolRegistry& registry, const TestCase& test_case, const CheckContext& ctx = {},
                     const runtime::Budget& budget = {});

struct SuiteSummary {
  int n_pass = 0;
  int n_fail = 0;
  int n_error = 0;
  std::optional<double> accuracy;      // n_pass / (n_pass + n_fail); absent when no observation
  std::optional<double> availability;  // (n_pass + n_fail) / total; absent for an empty suite

  int total() const { return n_pass + n_fail + n_error; }
  bool operator==(const SuiteSummary&) const = default;
};

Json to_json(const SuiteSummary& s);
SuiteSummary suite_summary_from_json(const Json& j);
SuiteSummary summarize(std::span<const CheckResult> results);

struct SuiteRun {
  std::vector<CheckResult> results;  // same order as the input cases
  SuiteSummary summary;
};

SuiteRun run_suite(const runtime::ToolRegistry& registry, std::span<const TestCase> suite, int parallelism,
                   const CheckContext& ctx = {}, const runtime::Budget& budget = {});

}  // namespace toolhub::verification
