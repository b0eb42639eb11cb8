#include "toolhub/verification.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <regex>
#include <thread>

namespace toolhub::verification {

using runtime::Observation;
using runtime::ToolError;

std::string_view kind_name(const Expectation& e) { return kExpectationKinds[e.index()]; }

Json to_json(const Expectation& e) {
  return std::visit(
      [](const auto& x) -> Json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, ExactMatch>) {
          return {{"kind", "exact"}, {"value", x.value}};
        } else if constexpr (std::is_same_v<T, NumericTolerance>) {
          Json j{{"kind", "numeric_tolerance"}, {"expected", x.expected}};
          if (x.abs_tol) j["abs_tol"] = *x.abs_tol;
          if (x.rel_tol) j["rel_tol"] = *x.rel_tol;
          return j;
        } else if constexpr (std::is_same_v<T, PatternMatch>) {
          return {{"kind", "pattern"}, {"regex", x.regex}};
        } else if constexpr (std::is_same_v<T, PropertyCheck>) {
          return {{"kind", "property"}, {"predicate", x.predicate}, {"params", x.params}};
        } else {
          return {{"kind", "semantic"}, {"reference", x.reference}, {"judge", x.judge}};
        }
      },
      e);
}

// --- Predicates --------------------------------------------------------------

void PredicateCatalog::add(std::string name, Predicate predicate) { predicates_[std::move(name)] = std::move(predicate); }

const Predicate* PredicateCatalog::find(const std::string& name) const {
  auto it = predicates_.find(name);
  return it == predicates_.end() ? nullptr : &it->second;
}

std::vector<std::string> PredicateCatalog::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : predicates_) out.push_back(name);
  return out;
}

namespace {

CheckOutcome verdict(bool pass, std::string detail) { return {pass, std::move(detail)}; }

std::vector<std::string> string_items(const Json& params, const char* key) {
  std::vector<std::string> out;
  for (const auto& v : params.at(key)) out.push_back(runtime::output_text(v));
  return out;
}

PredicateCatalog make_builtin_predicates() {
  PredicateCatalog c;
  c.add("is_valid_json", {{}, [](const std::string& out, const Json&) {
                            const bool ok = !Json::parse(out, nullptr, false).is_discarded();
                            return verdict(ok, ok ? "output is valid JSON" : "output is not valid JSON");
                          }});
  c.add("is_number", {{}, [](const std::string& out, const Json&) {
                        const bool ok = parse_number(out).has_value();
                        return verdict(ok, ok ? "output is numeric" : "output is not numeric");
                      }});
  c.add("non_empty", {{}, [](const std::string& out, const Json&) {
                        const bool ok = !trim(out).empty();
                        return verdict(ok, ok ? "output is non-empty" : "output is empty");
                      }});
  c.add("length_between", {{"min", "max"}, [](const std::string& out, const Json& p) {
                             const auto n = static_cast<double>(out.size());
                             const bool ok = n >= p.at("min").get<double>() && n <= p.at("max").get<double>();
                             return verdict(ok, "length " + std::to_string(out.size()));
                           }});
  c.add("number_between", {{"min", "max"}, [](const std::string& out, const Json& p) {
                             auto x = parse_number(out);
                             if (!x) return verdict(false, "output is not numeric");
                             const bool ok = *x >= p.at("min").get<double>() && *x <= p.at("max").get<double>();
                             return verdict(ok, "value " + format_number(*x));
                           }});
  c.add("contains_all", {{"items"}, [](const std::string& out, const Json& p) {
                           for (const auto& item : string_items(p, "items")) {
                             if (out.find(item) == std::string::npos) return verdict(false, "missing '" + item + "'");
                           }
                           return verdict(true, "all items present");
                         }});
  c.add("contains_any", {{"items"}, [](const std::string& out, const Json& p) {
                           for (const auto& item : string_items(p, "items")) {
                             if (out.find(item) != std::string::npos) return verdict(true, "found '" + item + "'");
                           }
                           return verdict(false, "none of the items present");
                         }});
  c.add("one_of", {{"values"}, [](const std::string& out, const Json& p) {
                     const std::string t = trim(out);
                     const auto values = string_items(p, "values");
                     const bool ok = std::find(values.begin(), values.end(), t) != values.end();
                     return verdict(ok, ok ? "value allowed" : "'" + t + "' not among allowed values");
                   }});
  c.add("json_has_fields", {{"fields"}, [](const std::string& out, const Json& p) {
                              Json doc = Json::parse(out, nullptr, false);
                              if (doc.is_discarded() || !doc.is_object()) return verdict(false, "output is not a JSON object");
                              for (const auto& f : string_items(p, "fields")) {
                                if (!doc.contains(f)) return verdict(false, "missing field '" + f + "'");
                              }
                              return verdict(true, "all fields present");
                            }});
  return c;
}

}  // namespace

const PredicateCatalog& builtin_predicates() {
  static const PredicateCatalog catalog = make_builtin_predicates();
  return catalog;
}

Expected<Expectation, std::vector<Violation>> parse_expectation(const Json& doc, const PredicateCatalog& predicates) {
  using R = Expected<Expectation, std::vector<Violation>>;
  if (!doc.is_object()) return R::failure({{"expect", "must be an object"}});
  const std::string kind = doc.value("kind", "");
  std::vector<Violation> vs;
  auto need_string = [&](const char* key) -> std::string {
    auto it = doc.find(key);
    if (it == doc.end() || !it->is_string()) {
      vs.push_back({std::string("expect.") + key, "must be a string"});
      return {};
    }
    return it->get<std::string>();
  };
  auto opt_number = [&](const char* key) -> std::optional<double> {
    auto it = doc.find(key);
    if (it == doc.end()) return std::nullopt;
    if (!it->is_number() || it->get<double>() < 0) {
      vs.push_back({std::string("expect.") + key, "must be a non-negative number"});
      return std::nullopt;
    }
    return it->get<double>();
  };

  if (kind == "exact") {
    ExactMatch e{need_string("value")};
    if (vs.empty()) return Expectation{e};
  } else if (kind == "numeric_tolerance") {
    NumericTolerance e;
    if (auto it = doc.find("expected"); it == doc.end() || !it->is_number()) {
      vs.push_back({"expect.expected", "must be a number"});
    } else {
      e.expected = it->get<double>();
    }
    e.abs_tol = opt_number("abs_tol");
    e.rel_tol = opt_number("rel_tol");
    if (!doc.contains("abs_tol") && !doc.contains("rel_tol")) {
      vs.push_back({"expect", "numeric_tolerance needs abs_tol and/or rel_tol"});
    }
    if (vs.empty()) return Expectation{e};
  } else if (kind == "pattern") {
    PatternMatch e{need_string("regex")};
    if (vs.empty()) {
      try {
        std::regex re(e.regex, std::regex::ECMAScript);
      } catch (const std::regex_error& err) {
        vs.push_back({"expect.regex", std::string("invalid regular expression: ") + err.what()});
      }
    }
    if (vs.empty()) return Expectation{e};
  } else if (kind == "property") {
    PropertyCheck e;
    e.predicate = need_string("predicate");
    if (auto it = doc.find("params"); it != doc.end()) {
      if (!it->is_object()) {
        vs.push_back({"expect.params", "must be an object"});
      } else {
        e.params = *it;
      }
    }
    if (vs.empty()) {
      const Predicate* p = predicates.find(e.predicate);
      if (!p) {
        vs.push_back({"expect.predicate", "unknown predicate '" + e.predicate + "'"});
      } else {
        for (const auto& name : p->required_params) {
          if (!e.params.contains(name)) vs.push_back({"expect.params." + name, "missing predicate parameter"});
        }
      }
    }
    if (vs.empty()) return Expectation{e};
  } else if (kind == "semantic") {
    SemanticMatch e;
    e.reference = need_string("reference");
    if (auto it = doc.find("judge"); it != doc.end()) {
      if (!it->is_string()) {
        vs.push_back({"expect.judge", "must be a string"});
      } else {
        e.judge = it->get<std::string>();
      }
    }
    if (vs.empty()) return Expectation{e};
  } else {
    vs.push_back({"expect.kind", "unknown expectation kind '" + kind +
                                     "': expected exact, numeric_tolerance, pattern, property or semantic"});
  }
  return R::failure(std::move(vs));
}

// --- Test cases --------------------------------------------------------------

std::string_view to_string(Origin o) { return o == Origin::curated ? "curated" : "community"; }

std::string_view to_string(CaseStatus s) {
  switch (s) {
    case CaseStatus::pending:
      return "pending";
    case CaseStatus::accepted:
      return "accepted";
    case CaseStatus::rejected:
      return "rejected";
  }
  return "pending";
}

std::optional<CaseStatus> parse_case_status(std::string_view s) {
  for (auto st : {CaseStatus::pending, CaseStatus::accepted, CaseStatus::rejected}) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

Json to_json(const TestCase& c) {
  Json j{{"id", c.id},
         {"input", c.input_args},
         {"expect", to_json(c.expectation)},
         {"origin", to_string(c.origin)},
         {"status", to_string(c.status)},
         {"created_at", c.created_at}};
  if (c.contributor) j["contributor"] = *c.contributor;
  if (c.notes) j["notes"] = *c.notes;
  return j;
}

Expected<TestCase, std::vector<Violation>> parse_test_case(const Json& doc, const std::string& tool_name) {
  using R = Expected<TestCase, std::vector<Violation>>;
  if (!doc.is_object()) return R::failure({{"", "test case must be an object"}});
  std::vector<Violation> vs;
  TestCase c;
  c.tool_name = tool_name;
  if (auto it = doc.find("id"); it == doc.end() || !it->is_string() || it->get_ref<const std::string&>().empty()) {
    vs.push_back({"id", "must be a non-empty string"});
  } else {
    c.id = it->get<std::string>();
  }
  if (auto it = doc.find("input"); it == doc.end() || !it->is_object()) {
    vs.push_back({"input", "must be an object of arguments"});
  } else {
    c.input_args = *it;
  }
  if (auto it = doc.find("expect"); it == doc.end()) {
    vs.push_back({"expect", "missing required field"});
  } else if (auto e = parse_expectation(*it); !e) {
    vs.insert(vs.end(), e.error().begin(), e.error().end());
  } else {
    c.expectation = std::move(e.value());
  }
  const std::string origin = doc.value("origin", "curated");
  if (origin == "curated") {
    c.origin = Origin::curated;
  } else if (origin == "community") {
    c.origin = Origin::community;
  } else {
    vs.push_back({"origin", "must be curated or community"});
  }
  if (auto st = parse_case_status(doc.value("status", "pending"))) {
    c.status = *st;
  } else {
    vs.push_back({"status", "must be pending, accepted or rejected"});
  }
  if (auto it = doc.find("contributor"); it != doc.end() && it->is_string()) c.contributor = it->get<std::string>();
  if (auto it = doc.find("notes"); it != doc.end() && it->is_string()) c.notes = it->get<std::string>();
  c.created_at = doc.value("created_at", "");
  if (!vs.empty()) return R::failure(std::move(vs));
  return c;
}

// --- Checking ----------------------------------------------------------------

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::pass:
      return "pass";
    case Verdict::fail:
      return "fail";
    case Verdict::error:
      return "error";
  }
  return "error";
}

std::optional<Verdict> parse_verdict(std::string_view s) {
  for (auto v : {Verdict::pass, Verdict::fail, Verdict::error}) {
    if (to_string(v) == s) return v;
  }
  return std::nullopt;
}

Json to_json(const CheckResult& r) {
  Json j{{"case_id", r.case_id}, {"verdict", to_string(r.verdict)}, {"detail", r.detail}, {"checked_at", r.checked_at}};
  j["tool_outcome"] = runtime::to_json(r.tool_outcome);
  return j;
}

CheckResult check_result_from_json(const Json& j) {
  CheckResult r;
  r.case_id = j.at("case_id").get<std::string>();
  r.verdict = parse_verdict(j.at("verdict").get<std::string>()).value_or(Verdict::error);
  r.detail = j.value("detail", "");
  r.checked_at = j.value("checked_at", "");
  const Json& outcome = j.at("tool_outcome");
  if (outcome.contains("observation")) {
    r.tool_outcome = runtime::observation_from_json(outcome.at("observation"));
  } else {
    r.tool_outcome = runtime::tool_error_from_json(outcome.at("error"));
  }
  return r;
}

namespace {

CheckOutcome check_numeric(const NumericTolerance& e, const Observation& out) {
  std::optional<double> value;
  if (out.output_value.is_number()) {
    value = out.output_value.get<double>();
  } else {
    value = parse_number(out.text());
  }
  if (!value) return {false, "output '" + out.text().substr(0, 60) + "' is not numeric"};
  const double diff = std::fabs(*value - e.expected);
  if (e.abs_tol && diff <= *e.abs_tol) return {true, "within absolute tolerance"};
  if (e.rel_tol && diff <= *e.rel_tol * std::fabs(e.expected)) return {true, "within relative tolerance"};
  return {false, "got " + format_number(*value) + ", expected " + format_number(e.expected) + " (diff " +
                     format_number(diff) + ")"};
}

CheckOutcome check_semantic(const SemanticMatch& e, const Observation& out, const CheckContext& ctx) {
  if (!ctx.judges) return {false, "no judge backend configured"};
  llm::ChatRequest request;
  request.backend_id = e.judge;
  request.decoding.temperature = 0.0;
  const std::string tmpl = ctx.judge_template.empty()
                               ? "Reference answer:\n{reference}\n\nCandidate answer:\n{candidate}\n\n"
                                 "Reply with exactly one word: EQUIVALENT or NOT_EQUIVALENT."
                               : ctx.judge_template;
  request.messages.push_back(
      {llm::Role::user, fill_template(tmpl, {{"reference", e.reference}, {"candidate", out.text()}}), std::nullopt, ""});
  auto response = ctx.judges->complete(request);
  if (!response) return {false, "judge backend failed: " + response.error().message};
  std::string said = to_lower(trim(response->content));
  std::replace(said.begin(), said.end(), '_', ' ');
  std::replace(said.begin(), said.end(), '-', ' ');
  if (said.rfind("not", 0) == 0 || said.find("not equivalent") != std::string::npos) {
    return {false, "judge: not equivalent"};
  }
  if (said.find("equivalent") != std::string::npos) return {true, "judge: equivalent"};
  return {false, "judge verdict unparseable: '" + response->content.substr(0, 60) + "'"};
}

}  // namespace

CheckOutcome check(const Expectation& expectation, const Observation& output, const CheckContext& ctx) {
  return std::visit(
      [&](const auto& e) -> CheckOutcome {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, ExactMatch>) {
          const std::string got = trim_right(output.text());
          const bool ok = got == trim_right(e.value);
          return {ok, ok ? "exact match" : "expected '" + trim_right(e.value) + "', got '" + got.substr(0, 80) + "'"};
        } else if constexpr (std::is_same_v<T, NumericTolerance>) {
          return check_numeric(e, output);
        } else if constexpr (std::is_same_v<T, PatternMatch>) {
          try {
            const std::regex re(e.regex, std::regex::ECMAScript);
            const bool ok = std::regex_match(output.text(), re);
            return {ok, ok ? "pattern matched" : "output does not match /" + e.regex + "/"};
          } catch (const std::regex_error& err) {
            return {false, std::string("invalid pattern: ") + err.what()};
          }
        } else if constexpr (std::is_same_v<T, PropertyCheck>) {
          const Predicate* p = ctx.predicates ? ctx.predicates->find(e.predicate) : nullptr;
          if (!p) return {false, "unknown predicate '" + e.predicate + "'"};
          try {
            return p->evaluate(output.text(), e.params);
          } catch (const std::exception& ex) {
            return {false, "predicate " + e.predicate + " failed: " + ex.what()};
          }
        } else {
          return check_semantic(e, output, ctx);
        }
      },
      expectation);
}

CheckResult run_case(const runtime::ToolRegistry& registry, const TestCase& test_case, const CheckContext& ctx,
                     const runtime::Budget& budget) {
  CheckResult r;
  r.case_id = test_case.id;
  try {
    r.tool_outcome = registry.invoke(test_case.tool_name, test_case.input_args, budget);
  } catch (const runtime::UnknownToolError& e) {
    r.tool_outcome = ToolError{runtime::ErrorClass::unavailable, e.what(), test_case.tool_name, 0, {}};
    r.verdict = Verdict::error;
    r.detail = std::string("routing: ") + e.what();
    r.checked_at = now_iso8601();
    return r;
  }
  if (const auto* err = std::get_if<ToolError>(&r.tool_outcome)) {
    r.verdict = Verdict::error;
    r.detail = std::string(runtime::to_string(err->error_class)) + ": " + err->message;
  } else {
    const auto outcome = check(test_case.expectation, std::get<Observation>(r.tool_outcome), ctx);
    r.verdict = outcome.pass ? Verdict::pass : Verdict::fail;
    r.detail = outcome.detail;
  }
  r.checked_at = now_iso8601();
  return r;
}

Json to_json(const SuiteSummary& s) {
  Json j{{"n_pass", s.n_pass}, {"n_fail", s.n_fail}, {"n_error", s.n_error}, {"n_cases", s.total()}};
  j["accuracy"] = s.accuracy ? Json(*s.accuracy) : Json(nullptr);
  j["availability"] = s.availability ? Json(*s.availability) : Json(nullptr);
  return j;
}

SuiteSummary suite_summary_from_json(const Json& j) {
  SuiteSummary s;
  s.n_pass = j.at("n_pass").get<int>();
  s.n_fail = j.at("n_fail").get<int>();
  s.n_error = j.at("n_error").get<int>();
  if (auto it = j.find("accuracy"); it != j.end() && it->is_number()) s.accuracy = it->get<double>();
  if (auto it = j.find("availability"); it != j.end() && it->is_number()) s.availability = it->get<double>();
  return s;
}

SuiteSummary summarize(std::span<const CheckResult> results) {
  SuiteSummary s;
  for (const auto& r : results) {
    switch (r.verdict) {
      case Verdict::pass:
        ++s.n_pass;
        break;
      case Verdict::fail:
        ++s.n_fail;
        break;
      case Verdict::error:
        ++s.n_error;
        break;
    }
  }
  const int observed = s.n_pass + s.n_fail;
  if (observed > 0) s.accuracy = static_cast<double>(s.n_pass) / observed;
  if (s.total() > 0) s.availability = static_cast<double>(observed) / s.total();
  return s;
}

SuiteRun run_suite(const runtime::ToolRegistry& registry, std::span<const TestCase> suite, int parallelism,
                   const CheckContext& ctx, const runtime::Budget& budget) {
  if (parallelism < 1) throw std::invalid_argument("parallelism must be positive");
  SuiteRun run;
  run.results.resize(suite.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < suite.size(); i = next++) {
      run.results[i] = run_case(registry, suite[i], ctx, budget);
    }
  };
  const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(parallelism), suite.size());
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    threads.reserve(n_workers);
    for (std::size_t t = 0; t < n_workers; ++t) threads.emplace_back(worker);
  }
  run.summary = summarize(run.results);
  return run;
}

}  // namespace toolhub::verification
