#include "toolhub/agents.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#ifndef TOOLHUB_DEFAULT_ASSET_DIR
#define TOOLHUB_DEFAULT_ASSET_DIR "assets"
#endif

namespace toolhub::agents {

using llm::Message;
using llm::Role;
using trace::Attribution;
using trace::EventKind;

namespace {

constexpr std::pair<PolicyKind, std::string_view> kPolicyKinds[] = {
    {PolicyKind::prompting_zero_shot, "prompting_zero_shot"},
    {PolicyKind::prompting_cot, "prompting_cot"},
    {PolicyKind::react, "react"},
    {PolicyKind::planner_executor, "planner_executor"},
    {PolicyKind::multi_agent, "multi_agent"},
};

constexpr std::pair<RunStatus, std::string_view> kStatuses[] = {
    {RunStatus::completed, "completed"},
    {RunStatus::step_budget_exhausted, "step_budget_exhausted"},
    {RunStatus::failed, "failed"},
};

// Failure class for model output that cannot be interpreted.
constexpr std::string_view kMalformedOutput = "malformed_output";

}  // namespace

std::string_view to_string(PolicyKind k) {
  for (const auto& [kind, name] : kPolicyKinds) {
    if (kind == k) return name;
  }
  return "react";
}

std::optional<PolicyKind> parse_policy_kind(std::string_view s) {
  for (const auto& [kind, name] : kPolicyKinds) {
    if (name == s) return kind;
  }
  return std::nullopt;
}

std::string_view to_string(RunStatus s) {
  for (const auto& [status, name] : kStatuses) {
    if (status == s) return name;
  }
  return "failed";
}

std::optional<RunStatus> parse_run_status(std::string_view s) {
  for (const auto& [status, name] : kStatuses) {
    if (name == s) return status;
  }
  return std::nullopt;
}

Json to_json(const PolicyConfig& c) {
  Json j{{"kind", to_string(c.kind)},
         {"max_steps", c.max_steps},
         {"backend_id", c.backend_id},
         {"reliability_routing", c.reliability_routing},
         {"per_subproblem_steps", c.per_subproblem_steps},
         {"verifier", c.verifier == VerifierMode::backend ? "backend" : "rule"},
         {"temperature", c.decoding.temperature},
         {"max_tokens", c.decoding.max_tokens}};
  if (!c.templates.empty()) j["templates"] = c.templates;
  return j;
}

Expected<PolicyConfig, std::vector<Violation>> parse_policy_config(const Json& doc) {
  using R = Expected<PolicyConfig, std::vector<Violation>>;
  if (!doc.is_object()) return R::failure({{"policy_config", "must be an object"}});
  std::vector<Violation> vs;
  PolicyConfig c;
  const std::string kind = doc.value("kind", "");
  if (auto k = parse_policy_kind(kind)) {
    c.kind = *k;
  } else {
    vs.push_back({"kind", "unknown policy kind '" + kind +
                              "': expected prompting_zero_shot, prompting_cot, react, planner_executor or multi_agent"});
  }
  auto positive = [&](const char* key, int& out) {
    auto it = doc.find(key);
    if (it == doc.end()) return;
    if (!it->is_number_integer() || it->get<int>() < 1) {
      vs.push_back({key, "must be a positive integer"});
    } else {
      out = it->get<int>();
    }
  };
  positive("max_steps", c.max_steps);
  positive("per_subproblem_steps", c.per_subproblem_steps);
  positive("max_tokens", c.decoding.max_tokens);
  c.backend_id = doc.value("backend_id", c.backend_id);
  c.reliability_routing = doc.value("reliability_routing", false);
  if (auto it = doc.find("temperature"); it != doc.end() && it->is_number()) c.decoding.temperature = it->get<double>();
  const std::string verifier = doc.value("verifier", "backend");
  if (verifier == "rule") {
    c.verifier = VerifierMode::rule;
  } else if (verifier != "backend") {
    vs.push_back({"verifier", "must be backend or rule"});
  }
  if (auto it = doc.find("templates"); it != doc.end()) {
    if (!it->is_object()) {
      vs.push_back({"templates", "must map template names to text"});
    } else {
      for (const auto& [name, text] : it->items()) {
        if (text.is_string()) c.templates[name] = text.get<std::string>();
      }
    }
  }
  if (!vs.empty()) return R::failure(std::move(vs));
  return c;
}

// --- Templates ---------------------------------------------------------------

TemplateSet TemplateSet::load(const std::filesystem::path& dir) {
  TemplateSet set;
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) return set;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".txt") set.templates_[e.path().stem().string()] = read_file(e.path());
  }
  return set;
}

const TemplateSet& TemplateSet::defaults() {
  static const TemplateSet set = [] {
    const char* env = std::getenv("TOOLHUB_ASSET_DIR");
    const std::filesystem::path base = env && *env ? env : TOOLHUB_DEFAULT_ASSET_DIR;
    return load(base / "prompts");
  }();
  return set;
}

const std::string& TemplateSet::get(const std::string& name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) throw std::out_of_range("missing prompt template '" + name + "'");
  return it->second;
}

std::vector<std::string> TemplateSet::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : templates_) out.push_back(name);
  return out;
}

// --- Memory ------------------------------------------------------------------

void SharedMemory::write(MemoryEntry entry) {
  if (!entry.verified) throw std::logic_error("shared memory only accepts verified results");
  entries_.push_back(std::move(entry));
}

std::string SharedMemory::summary() const {
  std::string out;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    out += "[" + std::to_string(i + 1) + "] " + e.sub_problem + " -> " +
           (e.tool_name.empty() ? std::string("direct") : e.tool_name) + ": " + e.result + "\n";
  }
  return out;
}

Json to_json(const AgentRun& r) {
  Json memory = Json::array();
  for (const auto& m : r.memory) {
    memory.push_back({{"sub_problem", m.sub_problem}, {"tool", m.tool_name}, {"result", m.result}, {"verified", true}});
  }
  Json j{{"run_id", r.run_id},
         {"query", r.query},
         {"toolbox", r.toolbox},
         {"policy", to_json(r.policy)},
         {"answer", r.answer},
         {"trace_ref", r.trace_ref},
         {"status", to_string(r.status)},
         {"invocations", r.invocations},
         {"memory", memory}};
  if (!r.memory_summary.empty()) j["memory_summary"] = r.memory_summary;
  if (r.backend_failure) j["backend_failure"] = *r.backend_failure;
  return j;
}

std::string extract_final_answer(const std::string& content) {
  static constexpr std::string_view kSentinel = "FINAL ANSWER:";
  const auto pos = content.rfind(kSentinel);
  if (pos == std::string::npos) return trim(content);
  const auto start = pos + kSentinel.size();
  const auto nl = content.find('\n', start);
  return trim(std::string_view(content).substr(start, nl == std::string::npos ? std::string::npos : nl - start));
}

// --- Tool selection ----------------------------------------------------------

std::optional<SelectionMode> parse_selection_mode(std::string_view s) {
  if (s == "lexical") return SelectionMode::lexical;
  if (s == "llm_ranked") return SelectionMode::llm_ranked;
  return std::nullopt;
}

std::string_view to_string(SelectionMode m) { return m == SelectionMode::lexical ? "lexical" : "llm_ranked"; }

namespace {

std::set<std::string> tokens(std::string_view text) {
  static const std::set<std::string> kStop = {"a",  "an",  "and",  "the", "of", "to",   "in",   "on",  "for",
                                              "is", "it",  "this", "me",  "my", "what", "with", "how", "please",
                                              "by", "be",  "or",   "as",  "at", "from", "that", "its", "are"};
  std::set<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty() && !kStop.count(cur)) out.insert(cur);
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

}  // namespace

double lexical_score(const std::string& query, const schema::ToolDescriptor& tool) {
  std::string haystack = tool.name + " " + tool.description;
  for (const auto& t : tool.tags) haystack += " " + t;
  const auto tool_tokens = tokens(haystack);
  double score = 0;
  for (const auto& q : tokens(query)) score += tool_tokens.count(q) ? 1.0 : 0.0;
  return score;
}

std::vector<std::string> rank_tools(const std::vector<schema::ToolDescriptor>& tools,
                                    const std::map<std::string, double>& raw_scores, std::size_t k,
                                    bool reliability_routing) {
  struct Scored {
    const schema::ToolDescriptor* tool;
    double norm;
  };
  double max_score = 0;
  for (const auto& t : tools) {
    auto it = raw_scores.find(t.name);
    if (it != raw_scores.end()) max_score = std::max(max_score, it->second);
  }
  std::vector<Scored> scored;
  for (const auto& t : tools) {
    auto it = raw_scores.find(t.name);
    const double raw = it == raw_scores.end() ? 0.0 : it->second;
    scored.push_back({&t, max_score > 0 ? raw / max_score : 0.0});
  }
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.norm != b.norm) return a.norm > b.norm;
    return a.tool->name < b.tool->name;
  });

  if (reliability_routing) {
    auto routing_order = [](const Scored& a, const Scored& b) {
      const auto& sa = a.tool->accuracy_summary;
      const auto& sb = b.tool->accuracy_summary;
      if (sa.has_value() != sb.has_value()) return sa.has_value();
      if (sa && sa->accuracy != sb->accuracy) return sa->accuracy > sb->accuracy;
      if (a.norm != b.norm) return a.norm > b.norm;
      return a.tool->name < b.tool->name;
    };
    // The tiny slack keeps grouping stable under rescaling of the raw scores.
    for (std::size_t i = 0; i < scored.size();) {
      std::size_t j = i + 1;
      while (j < scored.size() && scored[i].norm - scored[j].norm <= kRoutingEpsilon + 1e-12) ++j;
      std::sort(scored.begin() + static_cast<std::ptrdiff_t>(i), scored.begin() + static_cast<std::ptrdiff_t>(j),
                routing_order);
      i = j;
    }
  }

  std::vector<std::string> out;
  for (std::size_t i = 0; i < scored.size() && i < k; ++i) out.push_back(scored[i].tool->name);
  return out;
}

Expected<std::vector<std::string>, std::string> select_tools(const runtime::ToolRegistry& registry,
                                                             const SelectionRequest& request,
                                                             trace::ExecutionTrace* trace,
                                                             const TemplateSet& templates) {
  using R = Expected<std::vector<std::string>, std::string>;
  std::vector<schema::ToolDescriptor> pool;
  if (request.candidates.empty()) {
    pool = registry.descriptors();
  } else {
    for (const auto& name : request.candidates) {
      auto d = registry.descriptor(name);
      if (!d) return R::failure("unknown tool '" + name + "'");
      pool.push_back(std::move(*d));
    }
  }
  if (pool.empty()) return R::failure("no tools to select from");
  if (request.k == 0) return R::failure("k must be positive");
  if (request.k > pool.size()) {
    return R::failure("k = " + std::to_string(request.k) + " exceeds the " + std::to_string(pool.size()) +
                      " available tools");
  }

  std::map<std::string, double> scores;
  bool ranked = false;
  if (request.mode == SelectionMode::llm_ranked) {
    ranked = true;
    std::string failure;
    const auto& backends = *registry.backends();
    for (const auto& d : pool) {
      llm::ChatRequest req;
      req.backend_id = request.backend_id;
      std::string prompt;
      try {
        prompt = fill_template(templates.get("llm_rank"),
                               {{"query", request.query}, {"tool", d.name}, {"description", d.description}});
      } catch (const std::exception& e) {
        failure = e.what();
        break;
      }
      req.messages.push_back({Role::user, prompt, std::nullopt, ""});
      auto res = backends.complete(req);
      if (!res) {
        failure = res.error().message;
        break;
      }
      // First number in the reply, clamped to the 0..10 scale.
      const std::string& text = res->content;
      const auto start = text.find_first_of("0123456789");
      std::optional<double> value;
      if (start != std::string::npos) {
        auto end = text.find_first_not_of("0123456789.", start);
        value = parse_number(text.substr(start, end == std::string::npos ? std::string::npos : end - start));
      }
      if (!value) {
        failure = "unparseable score for " + d.name + ": '" + text.substr(0, 40) + "'";
        break;
      }
      scores[d.name] = std::clamp(*value, 0.0, 10.0);
    }
    if (!failure.empty()) {
      ranked = false;
      if (trace) {
        trace->append(EventKind::warning,
                      {{"phase", "selection"}, {"message", "llm_ranked selection fell back to lexical: " + failure}});
      }
    }
  }
  if (!ranked) {
    scores.clear();
    for (const auto& d : pool) scores[d.name] = lexical_score(request.query, d);
  }
  return rank_tools(pool, scores, request.k, request.reliability_routing);
}

// --- Episodes ----------------------------------------------------------------

namespace {

// A JSON value embedded in model output: first opening bracket to the last
// matching closing one.
std::optional<Json> embedded_json(const std::string& text, char open, char close) {
  const auto start = text.find(open);
  const auto end = text.rfind(close);
  if (start == std::string::npos || end == std::string::npos || end < start) return std::nullopt;
  Json j = Json::parse(text.substr(start, end - start + 1), nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  return j;
}

std::string describe(const std::vector<Violation>& vs) {
  std::string out;
  for (const auto& v : vs) out += (out.empty() ? "" : "; ") + (v.field.empty() ? "" : v.field + ": ") + v.reason;
  return out;
}

struct ExecResult {
  bool ok = false;
  std::string text;  // observation or error text fed back to the model
};

class Episode {
 public:
  Episode(runtime::ToolRegistry& registry, const TemplateSet& templates, const RunRequest& request)
      : registry_(registry),
        templates_(templates),
        config_(request.policy),
        trace_(request.trace_id, request.run_id) {
    run_.run_id = request.run_id;
    run_.query = request.query;
    run_.toolbox = request.toolbox;
    run_.policy = request.policy;
    run_.trace_ref = request.trace_id;
  }

  RunResult run(const std::optional<SelectionRequest>& selection) {
    try {
      if (prepare(selection)) dispatch();
    } catch (const std::out_of_range& e) {
      // Missing template asset: a configuration fault, not a model failure.
      fail(e.what(), std::nullopt);
    }
    if (run_.status == RunStatus::completed && trim(run_.answer).empty()) {
      fail("policy produced an empty final answer", Attribution::policy_error);
    }
    Json final{{"answer", run_.answer}, {"status", to_string(run_.status)}};
    if (config_.kind == PolicyKind::multi_agent) final["memory_summary"] = run_.memory_summary;
    trace_.append(EventKind::final_answer, final);
    trace_.finalize();
    return RunResult{run_, trace_};
  }

 private:
  bool prepare(const std::optional<SelectionRequest>& selection) {
    if (config_.kind == PolicyKind::prompting_zero_shot || config_.kind == PolicyKind::prompting_cot) {
      run_.toolbox.clear();
      return true;
    }
    if (selection) {
      SelectionRequest sel = *selection;
      sel.query = run_.query;
      sel.candidates = run_.toolbox;
      sel.reliability_routing = sel.reliability_routing || config_.reliability_routing;
      auto chosen = select_tools(registry_, sel, &trace_, templates_);
      if (!chosen) {
        fail("tool selection failed: " + chosen.error(), std::nullopt);
        return false;
      }
      run_.toolbox = *chosen;
      trace_.append(EventKind::policy_step, {{"phase", "selection"},
                                             {"mode", to_string(sel.mode)},
                                             {"k", sel.k},
                                             {"reliability_routing", sel.reliability_routing},
                                             {"selected", run_.toolbox}});
    }
    for (const auto& name : run_.toolbox) {
      if (!registry_.contains(name)) {
        fail("toolbox names unknown tool '" + name + "'", std::nullopt);
        return false;
      }
    }
    for (const auto& name : run_.toolbox) descriptors_.push_back(*registry_.descriptor(name));
    return true;
  }

  void dispatch() {
    switch (config_.kind) {
      case PolicyKind::prompting_zero_shot:
      case PolicyKind::prompting_cot:
        run_prompting();
        break;
      case PolicyKind::react:
        run_react();
        break;
      case PolicyKind::planner_executor:
        run_planner_executor();
        break;
      case PolicyKind::multi_agent:
        run_multi_agent();
        break;
    }
  }

  void fail(const std::string& message, std::optional<Attribution> attribution) {
    run_.status = RunStatus::failed;
    Json payload{{"message", message}};
    if (attribution) payload["class"] = std::string(kMalformedOutput);
    trace_.append(EventKind::warning, payload, attribution);
  }

  const std::string& tmpl(const std::string& name) const {
    auto it = config_.templates.find(name);
    return it != config_.templates.end() ? it->second : templates_.get(name);
  }

  std::string tool_list() const {
    std::string out;
    for (const auto& d : descriptors_) out += "- " + d.name + ": " + d.description + "\n";
    return out.empty() ? "(no tools)\n" : out;
  }

  // One backend call. On failure the run is marked failed and nullopt returned.
  std::optional<llm::ChatResponse> call(const std::string& phase, const std::vector<Message>& messages,
                                        bool declare_tools) {
    llm::ChatRequest req;
    req.backend_id = config_.backend_id;
    req.messages = messages;
    req.decoding = config_.decoding;
    if (declare_tools) req.tool_declarations = llm::project_tool_declarations(descriptors_);
    auto res = registry_.backends()->complete(req);
    Json payload{{"phase", phase}, {"backend", config_.backend_id}, {"ok", res.ok()}};
    if (!res) {
      payload["error"] = res.error().message;
      trace_.append(EventKind::backend_call, payload);
      run_.backend_failure = res.error().message;
      run_.status = RunStatus::failed;
      trace_.append(EventKind::warning,
                    {{"phase", phase}, {"class", "backend_error"}, {"message", "backend call failed: " + res.error().message}},
                    Attribution::policy_error);
      return std::nullopt;
    }
    payload["content"] = res->content;
    if (res->tool_call) payload["tool_call"] = {{"name", res->tool_call->tool_name}, {"arguments", res->tool_call->arguments}};
    trace_.append(EventKind::backend_call, payload);
    return std::move(res.value());
  }

  void step_event(int step, const std::string& phase, Json extra = Json::object()) {
    extra["step"] = step;
    extra["phase"] = phase;
    trace_.append(EventKind::policy_step, extra);
  }

  bool in_toolbox(const std::string& tool) const {
    return std::find(run_.toolbox.begin(), run_.toolbox.end(), tool) != run_.toolbox.end();
  }

  std::string next_call_id() { return "c" + std::to_string(++calls_); }

  ExecResult unknown_tool(const std::string& tool, const std::string& call_id) {
    const std::string message = "tool '" + tool + "' is not in the toolbox";
    trace_.append(EventKind::tool_error,
                  {{"tool", tool}, {"call_id", call_id}, {"class", trace::kUnknownToolClass}, {"message", message}},
                  Attribution::policy_error);
    std::string available;
    for (const auto& n : run_.toolbox) available += (available.empty() ? "" : ", ") + n;
    return {false, "ERROR [unknown_tool]: " + message + ". Available tools: " + (available.empty() ? "none" : available)};
  }

  // Emits the validation event; returns the violations.
  std::vector<Violation> validate(const std::string& tool, const Json& args, const std::string& call_id) {
    const auto vs = schema::validate_arguments(*registry_.descriptor(tool), args);
    Json payload{{"tool", tool}, {"call_id", call_id}, {"ok", vs.empty()}};
    if (!vs.empty()) payload["violations"] = to_json(vs);
    trace_.append(EventKind::tool_validation, payload);
    return vs;
  }

  ExecResult validation_failure(const std::string& tool, const std::string& call_id,
                                const std::vector<Violation>& vs) {
    const std::string message = describe(vs);
    trace_.append(EventKind::tool_error,
                  {{"tool", tool},
                   {"call_id", call_id},
                   {"class", runtime::to_string(runtime::ErrorClass::validation)},
                   {"message", message}},
                  Attribution::policy_error);
    return {false, "ERROR [validation]: " + message};
  }

  // Arguments already validated under `call_id`.
  ExecResult invoke(const std::string& tool, const Json& args, const std::string& call_id) {
    trace_.append(EventKind::tool_invocation, {{"tool", tool}, {"call_id", call_id}, {"args", args}});
    ++run_.invocations;
    auto outcome = registry_.invoke(tool, args);
    if (const auto* obs = std::get_if<runtime::Observation>(&outcome)) {
      trace_.append(EventKind::tool_result, {{"tool", tool},
                                             {"call_id", call_id},
                                             {"output", obs->output_value},
                                             {"output_kind", schema::to_string(obs->output_kind)},
                                             {"attempts", obs->attempt_count}});
      return {true, obs->text()};
    }
    const auto& err = std::get<runtime::ToolError>(outcome);
    const std::string cls(runtime::to_string(err.error_class));
    trace_.append(EventKind::tool_error,
                  {{"tool", tool}, {"call_id", call_id}, {"class", cls}, {"message", err.message},
                   {"attempts", err.attempt_count}},
                  trace::attribute_failure_class(cls));
    return {false, "ERROR [" + cls + "]: " + err.message};
  }

  // The shared path for a model-issued call: resolve, validate, invoke.
  ExecResult execute(const std::string& tool, const Json& args) {
    const std::string call_id = next_call_id();
    if (!in_toolbox(tool) || !registry_.contains(tool)) return unknown_tool(tool, call_id);
    auto vs = validate(tool, args, call_id);
    if (!vs.empty()) return validation_failure(tool, call_id, vs);
    return invoke(tool, args, call_id);
  }

  void malformed(const std::string& phase, const std::string& detail) {
    trace_.append(EventKind::warning,
                  {{"phase", phase}, {"class", std::string(kMalformedOutput)}, {"message", detail}},
                  Attribution::policy_error);
  }

  // --- prompting -------------------------------------------------------------

  void run_prompting() {
    step_event(1, "prompting", {{"variant", config_.kind == PolicyKind::prompting_cot ? "cot" : "zero_shot"}});
    std::string user = run_.query;
    if (config_.kind == PolicyKind::prompting_cot) user += "\n\n" + tmpl("cot_instruction");
    auto res = call("prompting", {{Role::system, tmpl("zero_shot_system"), std::nullopt, ""},
                                  {Role::user, user, std::nullopt, ""}},
                    false);
    if (!res) return;
    run_.answer = extract_final_answer(res->content);
  }

  // --- react -----------------------------------------------------------------

  void run_react() {
    std::vector<Message> messages{
        {Role::system, fill_template(tmpl("react_system"), {{"tools", tool_list()}}), std::nullopt, ""},
        {Role::user, run_.query, std::nullopt, ""}};
    std::string last_content;
    for (int step = 1; step <= config_.max_steps; ++step) {
      step_event(step, "react");
      auto res = call("react", messages, true);
      if (!res) return;
      if (!res->content.empty()) last_content = res->content;
      if (!res->tool_call) {
        run_.answer = extract_final_answer(res->content);
        return;
      }
      llm::ToolCall tc = *res->tool_call;
      if (tc.id.empty()) tc.id = "call_" + std::to_string(step);
      messages.push_back({Role::assistant, res->content, tc, ""});
      const auto result = execute(tc.tool_name, tc.arguments);
      messages.push_back({Role::tool, result.text, std::nullopt, tc.id});
    }
    run_.status = RunStatus::step_budget_exhausted;
    run_.answer = last_content.empty() ? "" : extract_final_answer(last_content);
    trace_.append(EventKind::warning, {{"phase", "react"}, {"message", "step budget exhausted"}});
  }

  // --- planner / executor ----------------------------------------------------

  struct Plan {
    bool stop = false;
    std::string tool;
    std::string sub_goal;
  };

  static std::optional<Plan> parse_plan(const std::string& content) {
    const std::string t = trim(content);
    std::string upper = t;
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
    if (upper == "STOP" || upper == "STOP." || upper.rfind("STOP\n", 0) == 0) return Plan{true, "", ""};
    auto j = embedded_json(t, '{', '}');
    if (!j || !j->is_object()) return std::nullopt;
    if (j->value("stop", false)) return Plan{true, "", ""};
    auto tool = j->find("tool");
    if (tool == j->end() || !tool->is_string()) return std::nullopt;
    const std::string name = tool->get<std::string>();
    if (name == "STOP" || name == "stop") return Plan{true, "", ""};
    return Plan{false, name, j->value("sub_goal", "")};
  }

  static std::optional<Json> parse_args(const llm::ChatResponse& res) {
    if (res.tool_call) return std::optional<Json>(res.tool_call->arguments);
    auto j = embedded_json(res.content, '{', '}');
    if (!j || !j->is_object()) return std::nullopt;
    if (auto a = j->find("arguments"); a != j->end() && a->is_object() && j->size() <= 2) return *a;
    return j;
  }

  void run_planner_executor() {
    std::string context;
    bool stopped = false;
    for (int step = 1; step <= config_.max_steps && !stopped; ++step) {
      step_event(step, "planner");
      std::vector<Message> msgs{{Role::user,
                                 fill_template(tmpl("planner"),
                                               {{"query", run_.query}, {"tools", tool_list()}, {"context", context}}),
                                 std::nullopt, ""}};
      auto res = call("planner", msgs, false);
      if (!res) return;
      auto plan = parse_plan(res->content);
      if (!plan) {
        msgs.push_back({Role::assistant, res->content, std::nullopt, ""});
        msgs.push_back({Role::user,
                        fill_template(tmpl("format_retry"),
                                      {{"expected", R"({"tool": "<tool name>", "sub_goal": "<text>"} or STOP)"}}),
                        std::nullopt, ""});
        res = call("planner", msgs, false);
        if (!res) return;
        plan = parse_plan(res->content);
      }
      if (!plan) {
        malformed("planner", "planner output unusable after one corrective re-prompt");
        context += "Step " + std::to_string(step) + ": the plan could not be parsed.\n";
        continue;
      }
      if (plan->stop) break;

      step_event(step, "executor", {{"tool", plan->tool}, {"sub_goal", plan->sub_goal}});
      ExecResult result;
      if (!in_toolbox(plan->tool) || !registry_.contains(plan->tool)) {
        result = unknown_tool(plan->tool, next_call_id());
      } else {
        result = run_executor(*plan, context);
        if (run_.status == RunStatus::failed) return;
      }
      context += "Step " + std::to_string(step) + ": " + plan->sub_goal + "\n  tool: " + plan->tool +
                 "\n  observation: " + result.text + "\n";

      step_event(step, "verifier");
      auto verdict = call("verifier",
                          {{Role::user, fill_template(tmpl("verifier"), {{"query", run_.query}, {"context", context}}),
                            std::nullopt, ""}},
                          false);
      if (!verdict) return;
      const std::string said = to_lower(verdict->content);
      stopped = said.find("continue") == std::string::npos && said.find("stop") != std::string::npos;
      trace_.append(EventKind::verifier_decision, {{"step", step}, {"decision", stopped ? "stop" : "continue"}});
      if (!stopped && step == config_.max_steps) run_.status = RunStatus::step_budget_exhausted;
    }

    step_event(0, "composer");
    auto res = call("composer",
                    {{Role::user, fill_template(tmpl("composer"), {{"query", run_.query}, {"context", context}}),
                      std::nullopt, ""}},
                    false);
    if (!res) return;
    run_.answer = extract_final_answer(res->content);
  }

  ExecResult run_executor(const Plan& plan, const std::string& context) {
    const auto descriptor = *registry_.descriptor(plan.tool);
    std::vector<Message> msgs{
        {Role::user,
         fill_template(tmpl("executor"), {{"query", run_.query},
                                          {"tool", plan.tool},
                                          {"sub_goal", plan.sub_goal},
                                          {"parameters", llm::project_tool_declaration(descriptor).dump()},
                                          {"context", context}}),
         std::nullopt, ""}};
    std::string call_id;
    std::vector<Violation> vs;
    std::optional<Json> args;
    for (int attempt = 1; attempt <= 2; ++attempt) {
      auto res = call("executor", msgs, false);
      if (!res) return {false, "backend failure"};
      call_id = next_call_id();
      args = parse_args(*res);
      vs = args ? validate(plan.tool, *args, call_id) : std::vector<Violation>{{"", "arguments must be a JSON object"}};
      if (!args) {
        trace_.append(EventKind::tool_validation,
                      {{"tool", plan.tool}, {"call_id", call_id}, {"ok", false}, {"violations", to_json(vs)}});
      }
      if (vs.empty()) return invoke(plan.tool, *args, call_id);
      msgs.push_back({Role::assistant, res->content, std::nullopt, ""});
      msgs.push_back({Role::user, fill_template(tmpl("executor_retry"), {{"violations", describe(vs)}}), std::nullopt, ""});
    }
    return validation_failure(plan.tool, call_id, vs);
  }

  // --- multi-agent -----------------------------------------------------------

  static std::optional<std::vector<std::string>> parse_subproblems(const std::string& content) {
    std::optional<Json> j = embedded_json(content, '[', ']');
    if (!j) {
      auto obj = embedded_json(content, '{', '}');
      if (obj && obj->is_object() && obj->contains("sub_problems")) j = obj->at("sub_problems");
    }
    if (!j || !j->is_array()) return std::nullopt;
    std::vector<std::string> out;
    for (const auto& e : *j) {
      if (!e.is_string()) return std::nullopt;
      out.push_back(e.get<std::string>());
    }
    return out;
  }

  struct Verdict {
    bool valid = false;
    std::string reason;
  };

  static std::optional<Verdict> parse_verdict(const std::string& content) {
    if (auto j = embedded_json(content, '{', '}'); j && j->is_object() && j->contains("valid")) {
      const Json& v = j->at("valid");
      if (v.is_boolean()) return Verdict{v.get<bool>(), j->value("reason", "")};
    }
    const std::string t = to_lower(trim(content));
    if (t.rfind("yes", 0) == 0) return Verdict{true, trim(content.substr(3))};
    if (t.rfind("no", 0) == 0) return Verdict{false, trim(content.substr(2))};
    return std::nullopt;
  }

  // nullopt only when a backend call failed.
  std::optional<Verdict> verify(const std::string& sub_problem, const std::string& tool, const std::string& result) {
    if (config_.verifier == VerifierMode::rule) {
      const bool ok = !trim(result).empty() && result.rfind("ERROR [", 0) != 0;
      return Verdict{ok, ok ? "rule: non-empty conformant result" : "rule: empty or failed result"};
    }
    std::vector<Message> msgs{
        {Role::user,
         fill_template(tmpl("ma_verifier"),
                       {{"sub_problem", sub_problem}, {"tool", tool.empty() ? "none" : tool}, {"result", result}}),
         std::nullopt, ""}};
    auto res = call("verifier", msgs, false);
    if (!res) return std::nullopt;
    auto v = parse_verdict(res->content);
    if (!v) {
      msgs.push_back({Role::assistant, res->content, std::nullopt, ""});
      msgs.push_back({Role::user, fill_template(tmpl("format_retry"), {{"expected", R"({"valid": true|false, "reason": "<text>"})"}}),
                      std::nullopt, ""});
      res = call("verifier", msgs, false);
      if (!res) return std::nullopt;
      v = parse_verdict(res->content);
    }
    if (!v) {
      malformed("verifier", "verifier output unusable after one corrective re-prompt; result treated as invalid");
      return Verdict{false, "unparseable verifier output"};
    }
    return v;
  }

  void run_multi_agent() {
    step_event(1, "planner");
    std::vector<Message> msgs{
        {Role::user, fill_template(tmpl("ma_planner"), {{"query", run_.query}, {"tools", tool_list()}}), std::nullopt,
         ""}};
    auto res = call("planner", msgs, false);
    if (!res) return;
    auto subs = parse_subproblems(res->content);
    if (!subs) {
      msgs.push_back({Role::assistant, res->content, std::nullopt, ""});
      msgs.push_back({Role::user, fill_template(tmpl("format_retry"), {{"expected", R"(["<sub-problem>", ...])"}}),
                      std::nullopt, ""});
      res = call("planner", msgs, false);
      if (!res) return;
      subs = parse_subproblems(res->content);
    }
    if (!subs) {
      malformed("planner", "decomposition unusable after one corrective re-prompt; composing from the raw query");
      subs.emplace();
    }
    trace_.append(EventKind::policy_step, {{"phase", "decomposition"}, {"sub_problems", *subs}});

    SharedMemory memory;
    std::vector<std::string> gaps;
    int total_steps = 0;
    for (std::size_t i = 0; i < subs->size(); ++i) {
      const std::string& sp = (*subs)[i];
      if (total_steps >= config_.max_steps) {
        run_.status = RunStatus::step_budget_exhausted;
        gaps.push_back(sp);
        trace_.append(EventKind::warning, {{"phase", "generator"}, {"sub_problem", i + 1},
                                           {"message", "step budget exhausted before sub-problem"}});
        continue;
      }
      step_event(static_cast<int>(i + 1), "generator", {{"sub_problem", sp}});
      std::vector<Message> gen{{Role::system,
                                fill_template(tmpl("ma_generator"), {{"query", run_.query},
                                                                     {"sub_problem", sp},
                                                                     {"memory", memory.summary()},
                                                                     {"tools", tool_list()}}),
                                std::nullopt, ""},
                               {Role::user, sp, std::nullopt, ""}};
      bool resolved = false;
      for (int local = 1; local <= config_.per_subproblem_steps && total_steps < config_.max_steps; ++local) {
        ++total_steps;
        auto r = call("generator", gen, true);
        if (!r) return;
        std::string candidate;
        std::string tool;
        if (r->tool_call) {
          llm::ToolCall tc = *r->tool_call;
          if (tc.id.empty()) tc.id = "call_" + std::to_string(total_steps);
          gen.push_back({Role::assistant, r->content, tc, ""});
          const auto result = execute(tc.tool_name, tc.arguments);
          gen.push_back({Role::tool, result.text, std::nullopt, tc.id});
          if (!result.ok) continue;
          candidate = result.text;
          tool = tc.tool_name;
        } else {
          gen.push_back({Role::assistant, r->content, std::nullopt, ""});
          candidate = extract_final_answer(r->content);
          if (candidate.empty()) continue;
        }
        auto verdict = verify(sp, tool, candidate);
        if (!verdict) return;
        trace_.append(EventKind::verifier_decision, {{"sub_problem", i + 1},
                                                     {"tool", tool},
                                                     {"valid", verdict->valid},
                                                     {"reason", verdict->reason}});
        if (verdict->valid) {
          memory.write({sp, tool, candidate, true});
          trace_.append(EventKind::memory_write, {{"sub_problem", sp}, {"tool", tool}, {"result", candidate}});
          resolved = true;
          break;
        }
        gen.push_back({Role::user, "The verifier rejected this result: " + verdict->reason + ". Try again.",
                       std::nullopt, ""});
      }
      if (!resolved) {
        gaps.push_back(sp);
        trace_.append(EventKind::warning, {{"phase", "generator"}, {"sub_problem", i + 1},
                                           {"message", "no verified result; sub-problem left unresolved"}});
      }
    }

    run_.memory = memory.entries();
    run_.memory_summary = memory.summary();
    std::string gap_text;
    for (const auto& g : gaps) gap_text += "- " + g + "\n";
    step_event(0, "composer");
    auto composed = call("composer",
                         {{Role::user,
                           fill_template(tmpl("ma_composer"), {{"query", run_.query},
                                                               {"memory", memory.summary().empty() ? "(empty)\n"
                                                                                                   : memory.summary()},
                                                               {"gaps", gap_text.empty() ? "(none)\n" : gap_text}}),
                           std::nullopt, ""}},
                         false);
    if (!composed) return;
    run_.answer = extract_final_answer(composed->content);
  }

  runtime::ToolRegistry& registry_;
  const TemplateSet& templates_;
  PolicyConfig config_;
  trace::ExecutionTrace trace_;
  AgentRun run_;
  std::vector<schema::ToolDescriptor> descriptors_;
  int calls_ = 0;
};

}  // namespace

RunResult run_agent(runtime::ToolRegistry& registry, const RunRequest& request, const TemplateSet& templates) {
  Episode episode(registry, templates, request);
  return episode.run(request.selection);
}

}  // namespace toolhub::agents
