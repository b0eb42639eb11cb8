#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "toolhub/runtime.hpp"
#include "toolhub/verification.hpp"

namespace toolhub::reliability {

using verification::CheckResult;
using verification::SuiteSummary;
using verification::TestCase;

inline constexpr double kDefaultRegressionThreshold = 0.1;

struct ToolRoundSummary {
  SuiteSummary summary;
  std::string suite_version;  // hash of this tool's accepted cases
  bool operator==(const ToolRoundSummary&) const = default;
};

struct EvaluationRound {
  std::int64_t round_id = 0;
  std::string started_at;
  std::string finished_at;
  std::string suite_version;  // hash of the whole accepted case set
  std::map<std::string, ToolRoundSummary> per_tool;
};

Json to_json(const EvaluationRound& r);
EvaluationRound round_from_json(const Json& j);

struct HistoryEntry {
  std::int64_t round_id = 0;
  std::optional<double> accuracy;
  std::optional<double> availability;
  int n_cases = 0;
  bool operator==(const HistoryEntry&) const = default;
};

struct RegressionEvent {
  std::int64_t from_round = 0;
  std::int64_t to_round = 0;
  double accuracy_drop = 0.0;
  double threshold = 0.0;
  bool operator==(const RegressionEvent&) const = default;
};

struct ReliabilityProfile {
  std::string tool_name;
  std::optional<double> current_accuracy;
  std::optional<double> current_availability;
  std::vector<HistoryEntry> history;  // ascending round_id
  std::vector<RegressionEvent> regressions;
  bool operator==(const ReliabilityProfile&) const = default;
};

Json to_json(const HistoryEntry& h);
Json to_json(const RegressionEvent& e);
Json to_json(const ReliabilityProfile& p);

/// Pure. Compares consecutive entries that both have an accuracy; entries
/// without one are skipped, so [0.9, absent, 0.5] compares 0.9 with 0.5.
std::vector<RegressionEvent> detect_regression(std::span<const HistoryEntry> history,
                                               double threshold = kDefaultRegressionThreshold);

/// Replays the round log. A tool gains a history entry for every round in
/// which it had at least one accepted case.
std::map<std::string, ReliabilityProfile> build_profiles(std::span<const EvaluationRound> rounds,
                                                         double threshold = kDefaultRegressionThreshold);

/// Content hash over accepted cases only, independent of input order.
std::string suite_version(std::span<const TestCase> cases);

/// Deterministic report over the registry's tools: no timestamps, sorted keys.
Json generate_report(const std::vector<schema::ToolDescriptor>& tools,
                     const std::map<std::string, ReliabilityProfile>& profiles,
                     const std::optional<EvaluationRound>& latest);

/// Persistence boundary for evaluation rounds.
class RoundStore {
 public:
  virtual ~RoundStore() = default;
  /// Every stored case of every tool, any status.
  virtual std::map<std::string, std::vector<TestCase>> load_all_cases() const = 0;
  virtual std::vector<EvaluationRound> load_rounds() const = 0;
  /// Must be all-or-nothing: after a throw, load_rounds() is unchanged.
  virtual void commit_round(const EvaluationRound& round,
                            const std::map<std::string, std::vector<CheckResult>>& checks,
                            const std::map<std::string, ReliabilityProfile>& profiles) = 0;
  /// Held for the duration of a round.
  virtual std::mutex& round_mutex() = 0;
};

class NoAcceptedCasesError : public std::runtime_error {
 public:
  NoAcceptedCasesError() : std::runtime_error("no accepted test cases in the store") {}
};

struct RoundOptions {
  int parallelism = 4;
  double threshold = kDefaultRegressionThreshold;
  verification::CheckContext check_context;
  runtime::Budget budget;
};

struct RoundOutcome {
  EvaluationRound round;
  std::map<std::string, std::vector<CheckResult>> checks;
  std::map<std::string, ReliabilityProfile> profiles;
};

/// Runs every tool's accepted suite, commits the round, then refreshes the
/// registry's accuracy summaries. Nothing is persisted or refreshed if the
/// commit throws.
RoundOutcome run_round(runtime::ToolRegistry& registry, RoundStore& store, const RoundOptions& options = {});

/// Sets (or clears, when accuracy is absent) each registered tool's summary.
void refresh_accuracy_summaries(runtime::ToolRegistry& registry,
                                const std::map<std::string, ReliabilityProfile>& profiles,
                                const std::string& evaluated_at);

}  // namespace toolhub::reliability
