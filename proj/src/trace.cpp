#include "toolhub/trace.hpp"

#include <array>
#include <sstream>

namespace toolhub::trace {

namespace {

constexpr std::array<std::pair<EventKind, std::string_view>, 10> kKinds{{
    {EventKind::policy_step, "policy_step"},
    {EventKind::tool_validation, "tool_validation"},
    {EventKind::tool_invocation, "tool_invocation"},
    {EventKind::tool_result, "tool_result"},
    {EventKind::tool_error, "tool_error"},
    {EventKind::backend_call, "backend_call"},
    {EventKind::memory_write, "memory_write"},
    {EventKind::verifier_decision, "verifier_decision"},
    {EventKind::warning, "warning"},
    {EventKind::final_answer, "final_answer"},
}};

}  // namespace

std::string_view to_string(EventKind k) {
  for (const auto& [e, s] : kKinds) {
    if (e == k) return s;
  }
  return "warning";
}

std::optional<EventKind> parse_event_kind(std::string_view s) {
  for (const auto& [e, name] : kKinds) {
    if (name == s) return e;
  }
  return std::nullopt;
}

std::string_view to_string(Attribution a) { return a == Attribution::policy_error ? "policy_error" : "tool_error"; }

std::optional<Attribution> parse_attribution(std::string_view s) {
  if (s == "policy_error") return Attribution::policy_error;
  if (s == "tool_error") return Attribution::tool_error;
  return std::nullopt;
}

Attribution attribute_failure_class(std::string_view failure_class) {
  if (failure_class == runtime::to_string(runtime::ErrorClass::validation) || failure_class == kUnknownToolClass) {
    return Attribution::policy_error;
  }
  if (runtime::parse_error_class(failure_class)) return Attribution::tool_error;
  // Anything else (malformed model output, backend failures) is the policy's.
  return Attribution::policy_error;
}

bool TraceEvent::operator==(const TraceEvent& other) const {
  return seq == other.seq && kind == other.kind && payload == other.payload && attribution == other.attribution;
}

// --- ExecutionTrace ----------------------------------------------------------

ExecutionTrace::ExecutionTrace(std::string trace_id, std::string run_id, std::string created_at)
    : trace_id_(std::move(trace_id)), run_id_(std::move(run_id)), created_at_(std::move(created_at)) {}

ExecutionTrace::ExecutionTrace(const ExecutionTrace& other) {
  std::lock_guard lock(other.mu_);
  trace_id_ = other.trace_id_;
  run_id_ = other.run_id_;
  created_at_ = other.created_at_;
  finalized_ = other.finalized_;
  events_ = other.events_;
  blobs_ = other.blobs_;
}

ExecutionTrace& ExecutionTrace::operator=(const ExecutionTrace& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mu_, other.mu_);
  trace_id_ = other.trace_id_;
  run_id_ = other.run_id_;
  created_at_ = other.created_at_;
  finalized_ = other.finalized_;
  events_ = other.events_;
  blobs_ = other.blobs_;
  return *this;
}

Json ExecutionTrace::externalize(Json payload) {
  if (payload.is_string() && payload.get_ref<const std::string&>().size() > kInlinePayloadLimit) {
    const std::string& content = payload.get_ref<const std::string&>();
    const std::string digest = sha256_hex(content);
    Json ref{{"digest", "sha256:" + digest}, {"blob", "blobs/" + digest}, {"bytes", content.size()}};
    blobs_.emplace(digest, content);
    return ref;
  }
  if (payload.is_object() || payload.is_array()) {
    for (auto& v : payload) v = externalize(std::move(v));
  }
  return payload;
}

std::int64_t ExecutionTrace::append(EventKind kind, Json payload, std::optional<Attribution> attribution) {
  TraceEvent e;
  e.kind = kind;
  e.payload = std::move(payload);
  e.attribution = attribution;
  e.timestamp = now_iso8601();
  return append(std::move(e));
}

std::int64_t ExecutionTrace::append(TraceEvent event) {
  std::lock_guard lock(mu_);
  if (finalized_) throw TraceError("trace " + trace_id_ + " is finalized");
  event.seq = static_cast<std::int64_t>(events_.size()) + 1;
  if (event.timestamp.empty()) event.timestamp = now_iso8601();
  event.payload = externalize(std::move(event.payload));
  events_.push_back(std::move(event));
  return events_.back().seq;
}

void ExecutionTrace::finalize() {
  std::lock_guard lock(mu_);
  finalized_ = true;
}

bool ExecutionTrace::finalized() const {
  std::lock_guard lock(mu_);
  return finalized_;
}

std::vector<TraceEvent> ExecutionTrace::events() const {
  std::lock_guard lock(mu_);
  return events_;
}

std::size_t ExecutionTrace::size() const {
  std::lock_guard lock(mu_);
  return events_.size();
}

std::map<std::string, std::string> ExecutionTrace::blobs() const {
  std::lock_guard lock(mu_);
  return blobs_;
}

std::size_t ExecutionTrace::count(EventKind kind) const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& e : events_) n += e.kind == kind ? 1 : 0;
  return n;
}

bool ExecutionTrace::operator==(const ExecutionTrace& other) const {
  if (this == &other) return true;
  std::scoped_lock lock(mu_, other.mu_);
  return trace_id_ == other.trace_id_ && run_id_ == other.run_id_ && finalized_ == other.finalized_ &&
         events_ == other.events_;
}

// --- Attribution -------------------------------------------------------------

FailureSummary attribute_failures(const ExecutionTrace& trace) {
  if (!trace.finalized()) throw TraceError("attribute_failures requires a finalized trace");
  FailureSummary s;
  for (const auto& e : trace.events()) {
    if (!e.attribution) continue;
    const bool policy = *e.attribution == Attribution::policy_error;
    (policy ? s.n_policy_errors : s.n_tool_errors) += 1;
    if (auto it = e.payload.find("tool"); it != e.payload.end() && it->is_string()) {
      auto& counts = s.per_tool[it->get<std::string>()];
      (policy ? counts.policy_errors : counts.tool_errors) += 1;
    }
  }
  return s;
}

Json to_json(const FailureSummary& s) {
  Json per_tool = Json::object();
  for (const auto& [tool, c] : s.per_tool) {
    per_tool[tool] = {{"policy_errors", c.policy_errors}, {"tool_errors", c.tool_errors}};
  }
  return Json{{"n_policy_errors", s.n_policy_errors}, {"n_tool_errors", s.n_tool_errors}, {"per_tool", per_tool}};
}

// --- JSONL -------------------------------------------------------------------

Json to_json(const TraceEvent& e) {
  Json j{{"seq", e.seq}, {"ts", e.timestamp}, {"kind", to_string(e.kind)}, {"payload", e.payload}};
  if (e.attribution) j["attribution"] = to_string(*e.attribution);
  return j;
}

TraceEvent event_from_json(const Json& j) {
  TraceEvent e;
  e.seq = j.at("seq").get<std::int64_t>();
  e.timestamp = j.at("ts").get<std::string>();
  const auto kind = parse_event_kind(j.at("kind").get<std::string>());
  if (!kind) throw std::invalid_argument("unknown event kind '" + j.at("kind").get<std::string>() + "'");
  e.kind = *kind;
  e.payload = j.at("payload");
  if (auto it = j.find("attribution"); it != j.end()) {
    e.attribution = parse_attribution(it->get<std::string>());
    if (!e.attribution) throw std::invalid_argument("unknown attribution '" + it->get<std::string>() + "'");
  }
  return e;
}

std::string serialize_jsonl(const ExecutionTrace& trace) {
  if (!trace.finalized()) throw TraceError("serialize_jsonl requires a finalized trace");
  std::string out = Json{{"type", "header"},
                         {"trace_id", trace.trace_id()},
                         {"run_id", trace.run_id()},
                         {"created_at", trace.created_at()}}
                        .dump();
  out += '\n';
  for (const auto& e : trace.events()) {
    out += to_json(e).dump();
    out += '\n';
  }
  return out;
}

ExecutionTrace deserialize_jsonl(std::string_view doc) {
  std::optional<ExecutionTrace> trace;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < doc.size()) {
    auto nl = doc.find('\n', pos);
    if (nl == std::string_view::npos) nl = doc.size();
    const std::string_view line = doc.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.empty() && pos >= doc.size()) break;
    Json j = Json::parse(line.begin(), line.end(), nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw TraceFormatError(line_no, "not a JSON object");
    try {
      if (!trace) {
        if (j.value("type", "") != "header") throw TraceFormatError(line_no, "first line must be the trace header");
        trace.emplace(j.at("trace_id").get<std::string>(), j.at("run_id").get<std::string>(),
                      j.value("created_at", ""));
        continue;
      }
      TraceEvent e = event_from_json(j);
      if (e.seq != static_cast<std::int64_t>(trace->size()) + 1) {
        throw TraceFormatError(line_no, "sequence gap: expected seq " + std::to_string(trace->size() + 1));
      }
      trace->append(std::move(e));
    } catch (const TraceFormatError&) {
      throw;
    } catch (const std::exception& ex) {
      throw TraceFormatError(line_no, ex.what());
    }
  }
  if (!trace) throw TraceFormatError(1, "missing trace header");
  trace->finalize();
  return std::move(*trace);
}

}  // namespace toolhub::trace
