#pragma once

#include <optional>
#include <string>
#include <vector>

#include "toolhub/runtime.hpp"
#include "toolhub/store.hpp"
#include "toolhub/verification.hpp"

namespace toolhub::community {

using verification::CaseStatus;

enum class SubmissionKind { test_case, tool_manifest, feedback };
enum class FeedbackScope { tool_output, agent_response };
enum class Rating { positive, negative };
enum class Decision { accept, reject };

std::string_view to_string(SubmissionKind k);
std::optional<SubmissionKind> parse_submission_kind(std::string_view s);
std::string_view to_string(FeedbackScope s);
std::string_view to_string(Rating r);

struct FeedbackRecord {
  FeedbackScope scope = FeedbackScope::tool_output;
  std::string target_id;  // trace id, or check id "<round>:<tool>:<case>"
  Rating rating = Rating::negative;
  std::optional<std::string> comment;
};

Json to_json(const FeedbackRecord& f);

struct Review {
  std::string reviewer;
  std::string decided_at;
  std::string reason;
};

struct Submission {
  std::string id;
  SubmissionKind kind = SubmissionKind::test_case;
  // test_case: {tool, input, expect, id?, notes?}
  // tool_manifest: {manifest, binding, tests?}
  // feedback: {scope, target_id, rating, comment?}
  Json payload;
  std::string submitter;
  std::string submitted_at;
  CaseStatus status = CaseStatus::pending;
  std::optional<Review> review;
};

Json to_json(const Submission& s);
Submission submission_from_json(const Json& j);

std::string check_id(std::int64_t round_id, const std::string& tool, const std::string& case_id);

struct ReviewError {
  enum class Kind { not_found, conflict, invalid } kind = Kind::invalid;
  std::string message;
  std::vector<Violation> violations;
};

/// Contribution workflow over a file store. Submits and reviews are
/// serialized; the first review of a submission wins and later ones conflict.
class CommunityHub {
 public:
  CommunityHub(store::FileStore& store, runtime::ToolRegistry& registry);

  /// Pre-validates the payload; rejected payloads never enter the queue.
  Expected<Submission, std::vector<Violation>> submit(SubmissionKind kind, const Json& payload,
                                                      const std::string& submitter);

  Expected<Submission, ReviewError> review(const std::string& submission_id, Decision decision,
                                           const std::string& reviewer, const std::string& reason);

  std::vector<Submission> submissions(std::optional<CaseStatus> status = std::nullopt) const;
  std::optional<Submission> find(const std::string& submission_id) const;

  /// Draft test_case payload pre-filled from the feedback's target (the
  /// failing call's tool and inputs). The expectation is left for the
  /// contributor to tighten.
  Expected<Json, ReviewError> promote_feedback_to_case(const std::string& submission_id) const;

 private:
  std::vector<Violation> check_test_case(const Json& payload) const;
  std::vector<Violation> check_manifest(const Json& payload) const;
  std::vector<Violation> check_feedback(const Json& payload) const;
  bool check_exists(const std::string& id) const;

  store::FileStore& store_;
  runtime::ToolRegistry& registry_;
};

}  // namespace toolhub::community
