#include "toolhub/community.hpp"

#include <algorithm>

namespace toolhub::community {

namespace {

constexpr std::pair<SubmissionKind, std::string_view> kKinds[] = {
    {SubmissionKind::test_case, "test_case"},
    {SubmissionKind::tool_manifest, "tool_manifest"},
    {SubmissionKind::feedback, "feedback"},
};

std::vector<Violation> prefixed(std::string_view prefix, const std::vector<Violation>& vs) {
  std::vector<Violation> out;
  for (const auto& v : vs) out.push_back({std::string(prefix) + (v.field.empty() ? "" : "." + v.field), v.reason});
  return out;
}

ReviewError review_error(ReviewError::Kind kind, std::string message, std::vector<Violation> vs = {}) {
  return ReviewError{kind, std::move(message), std::move(vs)};
}

}  // namespace

std::string_view to_string(SubmissionKind k) {
  for (const auto& [kind, name] : kKinds) {
    if (kind == k) return name;
  }
  return "test_case";
}

std::optional<SubmissionKind> parse_submission_kind(std::string_view s) {
  for (const auto& [kind, name] : kKinds) {
    if (name == s) return kind;
  }
  return std::nullopt;
}

std::string_view to_string(FeedbackScope s) { return s == FeedbackScope::tool_output ? "tool_output" : "agent_response"; }
std::string_view to_string(Rating r) { return r == Rating::positive ? "positive" : "negative"; }

Json to_json(const FeedbackRecord& f) {
  Json j{{"scope", to_string(f.scope)}, {"target_id", f.target_id}, {"rating", to_string(f.rating)}};
  if (f.comment) j["comment"] = *f.comment;
  return j;
}

Json to_json(const Submission& s) {
  Json j{{"id", s.id},
         {"kind", to_string(s.kind)},
         {"payload", s.payload},
         {"submitter", s.submitter},
         {"submitted_at", s.submitted_at},
         {"status", verification::to_string(s.status)}};
  j["review"] = s.review ? Json{{"reviewer", s.review->reviewer},
                                {"decided_at", s.review->decided_at},
                                {"reason", s.review->reason}}
                         : Json(nullptr);
  return j;
}

Submission submission_from_json(const Json& j) {
  Submission s;
  s.id = j.at("id").get<std::string>();
  s.kind = parse_submission_kind(j.at("kind").get<std::string>()).value_or(SubmissionKind::test_case);
  s.payload = j.at("payload");
  s.submitter = j.value("submitter", "");
  s.submitted_at = j.value("submitted_at", "");
  s.status = verification::parse_case_status(j.value("status", "pending")).value_or(CaseStatus::pending);
  if (auto it = j.find("review"); it != j.end() && it->is_object()) {
    s.review = Review{it->value("reviewer", ""), it->value("decided_at", ""), it->value("reason", "")};
  }
  return s;
}

std::string check_id(std::int64_t round_id, const std::string& tool, const std::string& case_id) {
  return std::to_string(round_id) + ":" + tool + ":" + case_id;
}

CommunityHub::CommunityHub(store::FileStore& store, runtime::ToolRegistry& registry)
    : store_(store), registry_(registry) {}

// --- Pre-validation ----------------------------------------------------------

std::vector<Violation> CommunityHub::check_test_case(const Json& payload) const {
  std::vector<Violation> vs;
  if (!payload.is_object()) return {{"", "payload must be an object"}};
  auto tool_it = payload.find("tool");
  if (tool_it == payload.end() || !tool_it->is_string()) return {{"tool", "missing required field"}};
  const std::string tool = tool_it->get<std::string>();
  auto descriptor = registry_.descriptor(tool);
  if (!descriptor) return {{"tool", "unknown tool '" + tool + "'"}};

  Json doc = payload;
  doc.erase("tool");
  if (!doc.contains("id")) doc["id"] = "draft";
  doc["origin"] = "community";
  doc["status"] = "pending";
  auto parsed = verification::parse_test_case(doc, tool);
  if (!parsed) return parsed.error();
  const auto arg_vs = schema::validate_arguments(*descriptor, parsed->input_args);
  vs = prefixed("input", arg_vs);
  if (payload.contains("id")) {
    for (const auto& c : store_.load_cases(tool)) {
      if (c.id == parsed->id) vs.push_back({"id", "duplicate case id '" + c.id + "'"});
    }
  }
  return vs;
}

std::vector<Violation> CommunityHub::check_manifest(const Json& payload) const {
  if (!payload.is_object()) return {{"", "payload must be an object"}};
  std::vector<Violation> vs;
  auto m = payload.find("manifest");
  auto b = payload.find("binding");
  if (m == payload.end()) vs.push_back({"manifest", "missing required field"});
  if (b == payload.end()) vs.push_back({"binding", "missing required field"});
  if (!vs.empty()) return vs;

  auto descriptor = schema::validate_manifest(*m);
  if (!descriptor) {
    auto mv = prefixed("manifest", descriptor.error());
    vs.insert(vs.end(), mv.begin(), mv.end());
  }
  auto binding = runtime::parse_binding(*b);
  if (!binding) {
    auto bv = prefixed("binding", binding.error());
    vs.insert(vs.end(), bv.begin(), bv.end());
  }
  if (!vs.empty()) return vs;

  if (registry_.contains(descriptor->name)) vs.push_back({"manifest.name", "tool '" + descriptor->name + "' exists"});
  if (runtime::category_of(*binding) != descriptor->category) {
    vs.push_back({"binding.kind", "binding kind does not match category " +
                                      std::string(schema::to_string(descriptor->category))});
  }
  if (const auto* p = std::get_if<runtime::ProgramBinding>(&*binding); p && !registry_.programs().find(p->function)) {
    vs.push_back({"binding.function", "no built-in program named '" + p->function + "'"});
  }
  if (auto t = payload.find("tests"); t != payload.end()) {
    if (!t->is_array()) {
      vs.push_back({"tests", "must be an array of cases"});
    } else {
      for (std::size_t i = 0; i < t->size(); ++i) {
        const std::string at = "tests[" + std::to_string(i) + "]";
        auto c = verification::parse_test_case((*t)[i], descriptor->name);
        if (!c) {
          auto cv = prefixed(at, c.error());
          vs.insert(vs.end(), cv.begin(), cv.end());
          continue;
        }
        auto av = prefixed(at + ".input", schema::validate_arguments(*descriptor, c->input_args));
        vs.insert(vs.end(), av.begin(), av.end());
      }
    }
  }
  return vs;
}

bool CommunityHub::check_exists(const std::string& id) const {
  const auto first = id.find(':');
  const auto second = first == std::string::npos ? std::string::npos : id.find(':', first + 1);
  if (second == std::string::npos) return false;
  const auto round = parse_number(id.substr(0, first));
  if (!round) return false;
  const std::string tool = id.substr(first + 1, second - first - 1);
  const std::string case_id = id.substr(second + 1);
  const auto checks = store_.load_checks(static_cast<std::int64_t>(*round));
  auto it = checks.find(tool);
  if (it == checks.end()) return false;
  return std::any_of(it->second.begin(), it->second.end(),
                     [&](const verification::CheckResult& r) { return r.case_id == case_id; });
}

std::vector<Violation> CommunityHub::check_feedback(const Json& payload) const {
  if (!payload.is_object()) return {{"", "payload must be an object"}};
  std::vector<Violation> vs;
  const std::string scope = payload.value("scope", "");
  if (scope != "tool_output" && scope != "agent_response") {
    vs.push_back({"scope", "must be tool_output or agent_response"});
  }
  const std::string rating = payload.value("rating", "");
  if (rating != "positive" && rating != "negative") vs.push_back({"rating", "must be positive or negative"});
  if (auto c = payload.find("comment"); c != payload.end() && !c->is_string()) {
    vs.push_back({"comment", "must be a string"});
  }
  auto t = payload.find("target_id");
  if (t == payload.end() || !t->is_string()) {
    vs.push_back({"target_id", "missing required field"});
  } else {
    const std::string target = t->get<std::string>();
    if (!store_.has_trace(target) && !check_exists(target)) {
      vs.push_back({"target_id", "no trace or check result with id '" + target + "'"});
    }
  }
  return vs;
}

// --- Workflow ----------------------------------------------------------------

Expected<Submission, std::vector<Violation>> CommunityHub::submit(SubmissionKind kind, const Json& payload,
                                                                  const std::string& submitter) {
  using R = Expected<Submission, std::vector<Violation>>;
  std::lock_guard lock(store_.mutation_mutex());
  std::vector<Violation> vs;
  switch (kind) {
    case SubmissionKind::test_case:
      vs = check_test_case(payload);
      break;
    case SubmissionKind::tool_manifest:
      vs = check_manifest(payload);
      break;
    case SubmissionKind::feedback:
      vs = check_feedback(payload);
      break;
  }
  if (!vs.empty()) return R::failure(std::move(vs));

  Submission s;
  s.id = store_.next_submission_id();
  s.kind = kind;
  s.payload = payload;
  s.submitter = submitter.empty() ? "anonymous" : submitter;
  s.submitted_at = now_iso8601();
  store_.save_submission(s.id, to_json(s));
  return s;
}

Expected<Submission, ReviewError> CommunityHub::review(const std::string& submission_id, Decision decision,
                                                       const std::string& reviewer, const std::string& reason) {
  using R = Expected<Submission, ReviewError>;
  using K = ReviewError::Kind;
  std::lock_guard lock(store_.mutation_mutex());
  auto doc = store_.load_submission(submission_id);
  if (!doc) return R::failure(review_error(K::not_found, "no submission '" + submission_id + "'"));
  Submission s = submission_from_json(*doc);
  if (s.status != CaseStatus::pending) {
    return R::failure(review_error(K::conflict, "submission " + s.id + " was already " +
                                                    std::string(verification::to_string(s.status))));
  }
  if (reviewer.empty()) return R::failure(review_error(K::invalid, "reviewer is required"));
  const bool accept = decision == Decision::accept;

  // Acceptance re-validates: the target tool may have changed since submission.
  if (accept) {
    std::vector<Violation> vs = s.kind == SubmissionKind::test_case       ? check_test_case(s.payload)
                                : s.kind == SubmissionKind::tool_manifest ? check_manifest(s.payload)
                                                                          : std::vector<Violation>{};
    if (!vs.empty()) return R::failure(review_error(K::invalid, "payload no longer validates", std::move(vs)));
  }

  const std::string decided_at = now_iso8601();
  if (s.kind == SubmissionKind::test_case) {
    const std::string tool = s.payload.at("tool").get<std::string>();
    Json doc_case = s.payload;
    doc_case.erase("tool");
    if (!doc_case.contains("id")) doc_case["id"] = tool + "-" + s.id;
    doc_case["origin"] = "community";
    doc_case["status"] = accept ? "accepted" : "rejected";
    doc_case["contributor"] = s.submitter;
    doc_case["created_at"] = s.submitted_at;
    if (!accept) {
      const std::string prior = doc_case.value("notes", "");
      doc_case["notes"] = "rejected: " + reason + (prior.empty() ? "" : " | " + prior);
    }
    auto parsed = verification::parse_test_case(doc_case, tool);
    if (!parsed) return R::failure(review_error(K::invalid, "case does not parse", parsed.error()));
    auto cases = store_.load_cases(tool);
    if (std::any_of(cases.begin(), cases.end(), [&](const auto& c) { return c.id == parsed->id; })) {
      return R::failure(review_error(K::conflict, "case id '" + parsed->id + "' already stored"));
    }
    cases.push_back(std::move(parsed.value()));
    store_.save_cases(tool, cases);
  } else if (s.kind == SubmissionKind::tool_manifest && accept) {
    auto descriptor = schema::validate_manifest(s.payload.at("manifest"));
    auto binding = runtime::parse_binding(s.payload.at("binding"));
    auto registered = registry_.register_tool(*descriptor, *binding);
    if (!registered) return R::failure(review_error(K::invalid, registered.error().message));
    store_.save_tool(*descriptor, *binding);
    if (auto t = s.payload.find("tests"); t != s.payload.end() && !t->empty()) {
      auto cases = store_.load_cases(descriptor->name);
      for (const auto& raw : *t) {
        Json doc_case = raw;
        doc_case["origin"] = "community";
        doc_case["status"] = "accepted";
        doc_case["contributor"] = s.submitter;
        doc_case["created_at"] = s.submitted_at;
        cases.push_back(verification::parse_test_case(doc_case, descriptor->name).value());
      }
      store_.save_cases(descriptor->name, cases);
    }
  }

  s.status = accept ? CaseStatus::accepted : CaseStatus::rejected;
  s.review = Review{reviewer, decided_at, reason};
  store_.save_submission(s.id, to_json(s));
  store_.append_audit(Json{{"submission_id", s.id},
                           {"kind", to_string(s.kind)},
                           {"decision", accept ? "accept" : "reject"},
                           {"reviewer", reviewer},
                           {"reason", reason},
                           {"decided_at", decided_at}});
  return s;
}

std::vector<Submission> CommunityHub::submissions(std::optional<CaseStatus> status) const {
  std::vector<Submission> out;
  for (const auto& doc : store_.load_submissions()) {
    Submission s = submission_from_json(doc);
    if (!status || s.status == *status) out.push_back(std::move(s));
  }
  return out;
}

std::optional<Submission> CommunityHub::find(const std::string& submission_id) const {
  auto doc = store_.load_submission(submission_id);
  if (!doc) return std::nullopt;
  return submission_from_json(*doc);
}

Expected<Json, ReviewError> CommunityHub::promote_feedback_to_case(const std::string& submission_id) const {
  using R = Expected<Json, ReviewError>;
  using K = ReviewError::Kind;
  auto s = find(submission_id);
  if (!s) return R::failure(review_error(K::not_found, "no submission '" + submission_id + "'"));
  if (s->kind != SubmissionKind::feedback) return R::failure(review_error(K::invalid, "not a feedback submission"));
  const std::string target = s->payload.value("target_id", "");
  const std::string comment = s->payload.value("comment", "");

  std::string tool;
  Json input;
  std::string observed;
  if (auto jsonl = store_.load_trace_jsonl(target)) {
    // The last failing call if any, else the last call.
    const auto events = trace::deserialize_jsonl(*jsonl).events();
    std::map<std::string, Json> calls;
    std::string chosen;
    bool chosen_failed = false;
    for (const auto& e : events) {
      const std::string call = e.payload.value("call_id", "");
      if (e.kind == trace::EventKind::tool_invocation) {
        calls[call] = e.payload;
        if (!chosen_failed) chosen = call;
      } else if (e.kind == trace::EventKind::tool_error && calls.count(call)) {
        chosen = call;
        chosen_failed = true;
        observed = "error " + e.payload.value("class", "") + ": " + e.payload.value("message", "");
      } else if (e.kind == trace::EventKind::tool_result && call == chosen && !chosen_failed) {
        observed = runtime::output_text(e.payload.value("output", Json("")));
      }
    }
    if (chosen.empty()) return R::failure(review_error(K::invalid, "trace " + target + " has no tool invocation"));
    tool = calls[chosen].value("tool", "");
    input = calls[chosen].value("args", Json::object());
  } else {
    const auto first = target.find(':');
    const auto second = target.find(':', first + 1);
    tool = target.substr(first + 1, second - first - 1);
    const std::string case_id = target.substr(second + 1);
    for (const auto& c : store_.load_cases(tool)) {
      if (c.id == case_id) input = c.input_args;
    }
    const auto round = static_cast<std::int64_t>(parse_number(target.substr(0, first)).value_or(0));
    const auto checks = store_.load_checks(round);
    const auto it = checks.find(tool);
    for (const auto& r : it == checks.end() ? std::vector<verification::CheckResult>{} : it->second) {
      if (r.case_id == case_id) observed = std::string(verification::to_string(r.verdict)) + ": " + r.detail;
    }
  }
  std::string notes = "promoted from feedback " + s->id;
  if (!comment.empty()) notes += ": " + comment;
  if (!observed.empty()) notes += " | observed " + observed.substr(0, 200);
  return Json{{"tool", tool},
              {"input", input},
              {"expect", {{"kind", "property"}, {"predicate", "non_empty"}, {"params", Json::object()}}},
              {"notes", notes}};
}

}  // namespace toolhub::community
