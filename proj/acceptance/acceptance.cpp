// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <httplib.h>
#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "support.hpp"
#include "toolhub/community.hpp"
#include "toolhub/service.hpp"
#include "toolhub/store.hpp"
#include "toolhub/verification.hpp"
#include "toolhub/workspace.hpp"

namespace {

using namespace toolhub;
using agents::PolicyKind;
using agents::RunStatus;
using testsupport::TempDir;
using testsupport::tool_call;
using trace::EventKind;
namespace fs = std::filesystem;

// Pinned limits.
constexpr int kOraclePairs = 1000;
constexpr double kOracleSeconds = 5.0;
constexpr double kDriftTolerance = 0.05;
constexpr double kDriftThreshold = 0.1;
constexpr int kDriftSuite = 50;
constexpr double kEndToEndSeconds = 30.0;
constexpr double kMixTolerance = 0.05;
constexpr int kInvokeCalls = 100;

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects the first few problems; any problem fails the criterion.
class Checker {
 public:
  void require(bool ok, const std::string& what) {
    if (ok) return;
    if (problems_ < 5) out_ << (problems_ ? "; " : "") << what;
    ++problems_;
  }
  bool ok() const { return problems_ == 0; }
  Outcome finish(const std::string& summary) const {
    if (ok()) return {true, summary};
    return {false, summary + " | " + out_.str() + (problems_ > 5 ? " (+" + std::to_string(problems_ - 5) + " more)" : "")};
  }

 private:
  std::ostringstream out_;
  int problems_ = 0;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fixed(double v, int digits = 3) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

Json fixture(const std::string& name) { return Json::parse(read_file(testsupport::fixtures_dir() / name)); }

// --- verifier vs brute-force oracle -------------------------------------------

Outcome verifier_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937 rng(1000);
  int agree = 0;
  std::string first_mismatch;
  for (int i = 0; i < kOraclePairs; ++i) {
    Json doc;
    std::string out;
    bool want = false;
    switch (i % 3) {
      case 0: {
        const std::string a = oracle::random_word(rng, 3);
        out = rng() % 2 ? a : oracle::random_word(rng, 3);
        if (rng() % 3 == 0) out += rng() % 2 ? " " : "\n";
        if (rng() % 5 == 0) out = " " + out;
        doc = {{"kind", "exact"}, {"value", a}};
        want = oracle::exact(a, out);
        break;
      }
      case 1: {
        const double expected = std::round(std::uniform_real_distribution<>(-500, 500)(rng) * 100) / 100;
        std::optional<double> abs_tol, rel_tol;
        if (rng() % 2) abs_tol = std::uniform_real_distribution<>(0, 2)(rng);
        if (!abs_tol || rng() % 2) rel_tol = std::uniform_real_distribution<>(0, 0.05)(rng);
        char buf[64];
        std::snprintf(buf, sizeof buf, rng() % 2 ? "%.3f" : "%g", expected + std::uniform_real_distribution<>(-3, 3)(rng));
        out = buf;
        if (rng() % 10 == 0) out = "x" + out;
        doc = {{"kind", "numeric_tolerance"}, {"expected", expected}};
        if (abs_tol) doc["abs_tol"] = *abs_tol;
        if (rel_tol) doc["rel_tol"] = *rel_tol;
        want = oracle::numeric(expected, abs_tol, rel_tol, out);
        break;
      }
      default: {
        const std::string re = oracle::random_pattern(rng);
        out = oracle::random_word(rng, 6);
        doc = {{"kind", "pattern"}, {"regex", re}};
        want = oracle::pattern(re, out);
      }
    }
    runtime::Observation obs;
    obs.output_kind = schema::OutputKind::text;
    obs.output_value = out;
    const bool got = verification::check(verification::parse_expectation(doc).value(), obs).pass;
    if (got == want) {
      ++agree;
    } else if (first_mismatch.empty()) {
      first_mismatch = doc.dump() + " vs '" + out + "'";
    }
  }
  const double secs = seconds_since(t0);
  Checker c;
  c.require(agree == kOraclePairs, "first mismatch " + first_mismatch);
  c.require(secs < kOracleSeconds, "too slow");
  return c.finish(std::to_string(agree) + "/" + std::to_string(kOraclePairs) + " agree in " + fixed(secs) + " s (limit " +
                  fixed(kOracleSeconds, 0) + " s)");
}

// --- suite accounting -----------------------------------------------------------

verification::TestCase calc_case(const std::string& id, Json input, const std::string& expected) {
  verification::TestCase c;
  c.id = id;
  c.tool_name = "calculator";
  c.input_args = std::move(input);
  c.expectation = verification::ExactMatch{expected};
  c.status = verification::CaseStatus::accepted;
  return c;
}

Outcome suite_accounting() {
  Checker c;
  // The pinned 7/1/2 case.
  std::vector<verification::CheckResult> fixed_case;
  for (int i = 0; i < 10; ++i) {
    verification::CheckResult r;
    r.verdict = i < 7 ? verification::Verdict::pass : i < 8 ? verification::Verdict::fail : verification::Verdict::error;
    fixed_case.push_back(r);
  }
  const auto s = verification::summarize(fixed_case);
  c.require(s.accuracy && *s.accuracy == 0.875, "7/1/2 accuracy");
  c.require(s.availability && *s.availability == 0.8, "7/1/2 availability");

  // Randomized suites with known composition.
  auto registry = testsupport::program_registry();
  std::mt19937 rng(2);
  int suites = 0;
  for (; suites < 50; ++suites) {
    std::vector<verification::TestCase> suite;
    int p = 0, f = 0, e = 0;
    const int size = static_cast<int>(rng() % 40);
    for (int i = 0; i < size; ++i) {
      const int a = static_cast<int>(rng() % 100), b = static_cast<int>(rng() % 100);
      const std::string expr = std::to_string(a) + "*" + std::to_string(b);
      const std::string id = "c" + std::to_string(i);
      switch (rng() % 3) {
        case 0:
          suite.push_back(calc_case(id, {{"expression", expr}}, std::to_string(a * b))), ++p;
          break;
        case 1:
          suite.push_back(calc_case(id, {{"expression", expr}}, std::to_string(a * b + 1))), ++f;
          break;
        default:
          suite.push_back(calc_case(id, rng() % 2 ? Json{{"x", 1}} : Json{{"expression", expr + "/0"}}, "0")), ++e;
      }
    }
    const auto one = verification::run_suite(*registry, suite, 1);
    const auto eight = verification::run_suite(*registry, suite, 8);
    const auto& sm = one.summary;
    c.require(sm.n_pass + sm.n_fail + sm.n_error == size, "counts do not sum to suite size");
    c.require(sm.n_pass == p && sm.n_fail == f && sm.n_error == e, "composition mismatch");
    c.require(p + f == 0 ? !sm.accuracy : (sm.accuracy && *sm.accuracy == static_cast<double>(p) / (p + f)),
              "accuracy includes errors");
    c.require(one.summary == eight.summary, "parallelism changed a summary");
  }

  // The seed's program suites under both parallelism settings.
  TempDir dir;
  workspace::Workspace ws({dir.path() / "state", testsupport::seed_dir(), true});
  int program_tools = 0;
  const auto all_cases = ws.store().load_all_cases();
  for (const auto& [tool, cases] : all_cases) {
    if (ws.registry().descriptor(tool)->category != schema::Category::program) continue;
    ++program_tools;
    std::vector<verification::TestCase> accepted;
    for (const auto& tc : cases) {
      if (tc.status == verification::CaseStatus::accepted) accepted.push_back(tc);
    }
    const auto a = verification::run_suite(ws.registry(), accepted, 1, ws.check_context());
    const auto b = verification::run_suite(ws.registry(), accepted, 8, ws.check_context());
    c.require(a.summary == b.summary, tool + " summary depends on parallelism");
    c.require(a.summary.total() == static_cast<int>(accepted.size()), tool + " counts");
  }
  c.require(program_tools >= 3, "too few seed program tools");
  return c.finish("7/1/2 -> accuracy " + fixed(*s.accuracy) + ", availability " + fixed(*s.availability) + "; " +
                  std::to_string(suites) + " random suites and " + std::to_string(program_tools) +
                  " seed program suites identical at parallelism 1 and 8");
}

// --- regression detection -------------------------------------------------------

Outcome regression_detection() {
  Checker c;
  auto correct = std::make_shared<std::atomic<int>>(0);
  auto registry = testsupport::drifting_registry(correct);
  auto rounds = [&](int suite, int before, int after) {
    testsupport::MemoryRoundStore store;
    store.cases["drifting"] = testsupport::drifting_suite(suite);
    correct->store(before);
    reliability::run_round(*registry, store, {4, kDriftThreshold, {}, {}});
    correct->store(after);
    return reliability::run_round(*registry, store, {4, kDriftThreshold, {}, {}}).profiles.at("drifting");
  };
  // 1.0 -> 0.6 over the pinned suite size.
  const auto drift = rounds(kDriftSuite, kDriftSuite, kDriftSuite * 6 / 10);
  c.require(drift.regressions.size() == 1, "expected exactly one event, got " + std::to_string(drift.regressions.size()));
  const double drop = drift.regressions.empty() ? -1 : drift.regressions[0].accuracy_drop;
  c.require(std::abs(drop - 0.4) <= kDriftTolerance, "drop " + fixed(drop) + " outside 0.4 +/- 0.05");
  // A 0.05 drop needs a suite size divisible by 20; 100 cases gives exactly 1.0 -> 0.95.
  const auto small = rounds(100, 100, 95);
  c.require(small.regressions.empty(), "0.05 drop raised an event");
  // The same suite size as above with the closest expressible drop below the threshold.
  const auto small50 = rounds(kDriftSuite, kDriftSuite, kDriftSuite - 2);
  c.require(small50.regressions.empty(), "0.04 drop on 50 cases raised an event");
  return c.finish("1.0->0.6 on 50 cases: " + std::to_string(drift.regressions.size()) + " event, drop " + fixed(drop) +
                  "; 1.0->0.95 on 100 cases: " + std::to_string(small.regressions.size()) + " events");
}

// --- community lifecycle ------------------------------------------------------------

Outcome community_lifecycle() {
  Checker c;
  int total_ops = 0, total_rounds = 0, version_changes = 0;
  for (unsigned seed = 1; seed <= 20 && c.ok(); ++seed) {
    TempDir seed_dir, root;
    fs::create_directories(seed_dir.path() / "tools");
    store::FileStore::initialize(root.path(), seed_dir.path());
    store::FileStore store(root.path());
    auto registry = testsupport::program_registry();
    store.save_tool(*registry->descriptor("calculator"), runtime::ProgramBinding{"calculator"});
    community::CommunityHub hub(store, *registry);
    std::mt19937 rng(seed);
    std::vector<std::string> pending;
    std::set<std::string> accepted, accepted_at_last;
    std::optional<std::string> last_version;
    int next = 0;
    for (int op = 0; op < 80; ++op, ++total_ops) {
      const int choice = static_cast<int>(rng() % 3);
      if (choice == 0 || (choice == 1 && pending.empty())) {
        const int i = next++;
        Json payload{{"tool", "calculator"},
                     {"input", {{"expression", std::to_string(i) + "+1"}}},
                     {"expect", {{"kind", "exact"}, {"value", std::to_string(rng() % 4 ? i + 1 : i)}}}};
        auto s = hub.submit(community::SubmissionKind::test_case, payload, "tester");
        c.require(s.ok(), "valid submission rejected");
        if (s) pending.push_back(s->id);
      } else if (choice == 1) {
        const std::size_t k = rng() % pending.size();
        const std::string id = pending[k];
        pending.erase(pending.begin() + static_cast<long>(k));
        const bool accept = rng() % 2;
        c.require(hub.review(id, accept ? community::Decision::accept : community::Decision::reject, "rev", "").ok(),
                  "review failed");
        if (accept) accepted.insert("calculator-" + id);
      } else if (!accepted.empty()) {
        const auto before = registry->execution_count();
        auto out = reliability::run_round(*registry, store, {4, kDriftThreshold, {}, {}});
        ++total_rounds;
        std::set<std::string> executed;
        for (const auto& r : out.checks.at("calculator")) executed.insert(r.case_id);
        c.require(executed == accepted, "executed set differs from accepted set");
        c.require(registry->execution_count() - before == accepted.size(), "non-accepted case executed");
        if (last_version) {
          const bool changed = out.round.suite_version != *last_version;
          version_changes += changed ? 1 : 0;
          c.require(changed == (accepted != accepted_at_last), "suite_version change does not track accepted set");
        }
        last_version = out.round.suite_version;
        accepted_at_last = accepted;
      }
    }
  }
  return c.finish(std::to_string(total_ops) + " operations, " + std::to_string(total_rounds) + " rounds, " +
                  std::to_string(version_changes) + " version changes, all consistent");
}

// --- agent episodes -------------------------------------------------------------------

agents::RunResult episode(runtime::ToolRegistry& reg, const Json& replies, agents::PolicyConfig p,
                          const std::string& query = "q",
                          std::vector<std::string> toolbox = {"calculator", "date_calculator", "maze_solver",
                                                              "string_transformer", "unit_converter"}) {
  return testsupport::run_scripted(reg, replies, std::move(p), query, std::move(toolbox));
}

Json soak_reply(std::mt19937& rng) {
  switch (rng() % 11) {
    case 0:
      return tool_call("calculator", {{"expression", std::to_string(rng() % 50) + "+1"}});
    case 1:
      return tool_call("calculator", {{"expr", 1}});
    case 2:
      return tool_call("nonexistent", Json::object());
    case 3:
      return R"({"tool": "calculator", "sub_goal": "add"})";
    case 4:
      return R"({"expression": "2*3"})";
    case 5:
      return rng() % 2 ? "STOP" : "continue";
    case 6:
      return R"(["first", "second", "third"])";
    case 7:
      return rng() % 2 ? "yes" : "no";
    case 8:
      return "FINAL ANSWER: " + std::to_string(rng() % 100);
    case 9:
      return "musing";
    default:
      return tool_call("string_transformer", {{"text", "abc"}, {"operation", "upper"}});
  }
}

std::size_t count_phase(const trace::ExecutionTrace& t, EventKind kind, const std::string& phase) {
  std::size_t n = 0;
  for (const auto& e : t.events()) n += e.kind == kind && e.payload.value("phase", "") == phase ? 1 : 0;
  return n;
}

Outcome agent_episodes() {
  Checker c;
  auto reg = testsupport::program_registry();

  // ReAct 168.
  auto react = episode(*reg, fixture("react_168.json"), testsupport::policy(PolicyKind::react), "24*7?");
  const auto failures = trace::attribute_failures(react.trace);
  c.require(react.run.answer == "168", "react answer '" + react.run.answer + "'");
  c.require(react.run.invocations == 1, "react invocations " + std::to_string(react.run.invocations));
  c.require(failures.n_policy_errors + failures.n_tool_errors == 0, "react failure events");

  // MultiAgent rejection fixture and 100 randomized verifier scripts.
  auto ma = testsupport::policy(PolicyKind::multi_agent, 20);
  ma.per_subproblem_steps = 1;
  auto rejection = episode(*reg, fixture("multi_agent_rejection.json"), ma, "24*7, halved?");
  c.require(rejection.run.memory.size() == 1 && rejection.run.memory[0].result == "168", "rejection fixture memory");
  std::mt19937 rng(5);
  int scripts_ok = 0;
  for (int i = 0; i < 100; ++i) {
    const int n = 1 + static_cast<int>(rng() % 5);
    Json subs = Json::array(), replies = Json::array({""});
    std::vector<std::string> want;
    for (int k = 0; k < n; ++k) {
      subs.push_back("sub" + std::to_string(k));
      replies.push_back(tool_call("calculator", {{"expression", std::to_string(k) + "*3"}}));
      const bool ok = rng() % 2;
      replies.push_back(ok ? (rng() % 2 ? "yes" : R"({"valid": true})") : (rng() % 2 ? "no" : R"({"valid": false})"));
      if (ok) want.push_back("sub" + std::to_string(k));
    }
    replies[0] = subs.dump();
    replies.push_back("FINAL ANSWER: done");
    auto r = episode(*reg, replies, ma, "q", {"calculator"});
    std::vector<std::string> got;
    for (const auto& m : r.run.memory) got.push_back(m.sub_problem);
    scripts_ok += got == want ? 1 : 0;
  }
  c.require(scripts_ok == 100, std::to_string(100 - scripts_ok) + " verifier scripts left unverified memory");

  // Step budgets across a randomized soak.
  static const PolicyKind kinds[] = {PolicyKind::prompting_zero_shot, PolicyKind::prompting_cot, PolicyKind::react,
                                     PolicyKind::planner_executor, PolicyKind::multi_agent};
  int within = 0;
  for (int i = 0; i < 200; ++i) {
    auto p = testsupport::policy(kinds[rng() % 5], 1 + static_cast<int>(rng() % 6));
    p.per_subproblem_steps = 1 + static_cast<int>(rng() % 3);
    Json replies = Json::array();
    for (int k = static_cast<int>(rng() % 25); k > 0; --k) replies.push_back(soak_reply(rng));
    if (rng() % 2) replies.push_back({{"content", "FINAL ANSWER: x"}, {"repeat", true}});
    const auto before = reg->execution_count();
    auto r = episode(*reg, replies, p);
    const auto steps = static_cast<std::size_t>(p.max_steps);
    const auto inv = r.trace.count(EventKind::tool_invocation);
    bool ok = inv == static_cast<std::size_t>(r.run.invocations) && inv == reg->execution_count() - before;
    switch (p.kind) {
      case PolicyKind::react:
        ok = ok && count_phase(r.trace, EventKind::policy_step, "react") <= steps && inv <= steps;
        break;
      case PolicyKind::planner_executor:
        ok = ok && count_phase(r.trace, EventKind::policy_step, "planner") <= steps && inv <= steps;
        break;
      case PolicyKind::multi_agent:
        ok = ok && count_phase(r.trace, EventKind::backend_call, "generator") <= steps && inv <= steps;
        break;
      default:
        ok = ok && inv == 0;
    }
    within += ok ? 1 : 0;
  }
  c.require(within == 200, std::to_string(200 - within) + " soak episodes broke a budget");
  return c.finish("react 168: answer " + react.run.answer + ", " + std::to_string(react.run.invocations) +
                  " invocation, 0 failures; multi-agent memory exact in " + std::to_string(scripts_ok) +
                  "/100 scripts; budgets held in " + std::to_string(within) + "/200 episodes");
}

// --- trace attribution -------------------------------------------------------------

Outcome trace_attribution() {
  Checker c;
  stub::StubServer server;
  server.add_route({"GET", "/slow", {}, 200, "late", "text/plain", 40});
  server.start();
  auto reg = testsupport::program_registry();
  reg->set_env({{"SLOW", server.base_url()}});
  reg->set_retry_policy({1, 2.0, 0.0});
  Json m = testsupport::manifest("slow_api", "api", Json::array({testsupport::param("q", "string")}));
  reg->register_tool(testsupport::descriptor(m), runtime::ApiBinding{"${SLOW}/slow", "GET", {}, 10, 0});
  const std::vector<std::string> toolbox{"calculator", "slow_api"};

  std::mt19937 rng(6);
  int episodes = 0, injected = 0, round_trips = 0;
  for (; episodes < 100; ++episodes) {
    Json replies = Json::array();
    trace::FailureSummary want;
    for (int k = 1 + static_cast<int>(rng() % 5); k > 0; --k) {
      switch (rng() % 4) {
        case 0:
          replies.push_back(tool_call("calculator", {{"expression", "2+2"}}));
          break;
        case 1:
          replies.push_back(tool_call("calculator", {{"nope", true}}));
          ++want.n_policy_errors, ++want.per_tool["calculator"].policy_errors, ++injected;
          break;
        case 2:
          replies.push_back(tool_call("ghost_tool", Json::object()));
          ++want.n_policy_errors, ++want.per_tool["ghost_tool"].policy_errors, ++injected;
          break;
        default:
          replies.push_back(tool_call("slow_api", {{"q", "x"}}));
          ++want.n_tool_errors, ++want.per_tool["slow_api"].tool_errors, ++injected;
      }
    }
    replies.push_back("FINAL ANSWER: done");
    auto r = testsupport::run_scripted(*reg, replies, testsupport::policy(PolicyKind::react, 10), "q", toolbox);
    const auto got = trace::attribute_failures(r.trace);
    c.require(got == want, "episode " + std::to_string(episodes) + " misattributed: " + to_json(got).dump() +
                               " want " + to_json(want).dump());
    const std::string doc = trace::serialize_jsonl(r.trace);
    const auto back = trace::deserialize_jsonl(doc);
    const bool lossless = back == r.trace && trace::serialize_jsonl(back) == doc;
    c.require(lossless, "trace round trip lost data");
    round_trips += lossless ? 1 : 0;
  }
  return c.finish(std::to_string(episodes) + " episodes, " + std::to_string(injected) +
                  " injected faults partitioned correctly, " + std::to_string(round_trips) + " lossless JSONL round trips");
}

// --- end to end ----------------------------------------------------------------------

struct CliResult {
  int code = -1;
  std::string out;
};

CliResult cli(const fs::path& state, const std::string& args) {
  const std::string cmd = std::string("'") + TOOLHUB_CLI_PATH + "' --state '" + state.string() + "' " + args + " 2>/dev/null";
  CliResult r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  for (std::size_t n; (n = fread(buf, 1, sizeof buf, p)) > 0;) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

Outcome end_to_end() {
  Checker c;
  const auto t0 = std::chrono::steady_clock::now();
  TempDir a, b;
  std::vector<Json> reports;
  for (const TempDir* d : {&a, &b}) {
    const auto run = cli(d->path(), "--format json eval run");
    c.require(run.code == 0, "eval run exited " + std::to_string(run.code));
    const auto rep = cli(d->path(), "--format json report");
    c.require(rep.code == 0, "report exited " + std::to_string(rep.code));
    reports.push_back(Json::parse(rep.out, nullptr, false));
  }
  const double secs = seconds_since(t0);
  if (!c.ok() || reports[0].is_discarded() || reports[1].is_discarded()) return c.finish("cli failed");

  std::map<std::string, int> mix;
  std::string program_a, program_b;
  for (int i = 0; i < 2; ++i) {
    for (const auto& t : reports[i]["tools"]) {
      if (i == 0) ++mix[t["category"].get<std::string>()];
      if (t["category"] == "program") (i == 0 ? program_a : program_b) += t.dump() + "\n";
    }
  }
  const int total = mix["program"] + mix["api"] + mix["prompting"];
  c.require(total >= 10, "only " + std::to_string(total) + " tools");
  // Reference mix: 16 program, 19 API, 7 prompting tools.
  const std::map<std::string, double> reference{{"program", 16.0 / 42}, {"api", 19.0 / 42}, {"prompting", 7.0 / 42}};
  for (const auto& [cat, share] : reference) {
    const double got = total ? static_cast<double>(mix[cat]) / total : 0;
    c.require(std::abs(got - share) <= kMixTolerance, cat + " share " + fixed(got) + " vs " + fixed(share));
  }
  c.require(!program_a.empty() && program_a == program_b, "program tool reports differ");
  const bool whole = reports[0].dump() == reports[1].dump();
  c.require(secs < kEndToEndSeconds, "took " + fixed(secs) + " s");
  return c.finish(std::to_string(total) + " tools (" + std::to_string(mix["program"]) + " program, " +
                  std::to_string(mix["api"]) + " api, " + std::to_string(mix["prompting"]) +
                  " prompting); program reports byte-identical" + (whole ? ", full reports identical" : "") + "; " +
                  fixed(secs, 2) + " s (limit " + fixed(kEndToEndSeconds, 0) + " s)");
}

// --- service contract ------------------------------------------------------------------

struct Http {
  int status = 0;
  Json body;
  std::string raw;
};

Outcome service_contract() {
  Checker c;
  TempDir dir;
  const fs::path state = dir.path() / "state";
  workspace::Workspace ws({state, testsupport::seed_dir(), true});
  service::Service svc(ws, {std::string("token")});
  svc.start();
  httplib::Client client("127.0.0.1", svc.port());
  client.set_read_timeout(30, 0);
  const httplib::Headers auth{{"Authorization", "Bearer token"}};
  auto wrap = [](const httplib::Result& r) {
    if (!r) return Http{-1, Json(), ""};
    return Http{r->status, Json::parse(r->body, nullptr, false), r->body};
  };
  auto get = [&](const std::string& path) { return wrap(client.Get(path)); };
  auto post = [&](const std::string& path, const std::string& body, const httplib::Headers& h = {}) {
    return wrap(client.Post(path, h, body, "application/json"));
  };
  auto hash = [&] { return store::hash_tree(state); };
  int endpoints = 0;
  auto expect = [&](const Http& r, int status, const std::string& what) {
    ++endpoints;
    c.require(r.status == status, what + " -> " + std::to_string(r.status) + " " + r.raw.substr(0, 120));
  };

  // Happy paths across the surface.
  expect(get("/v1/tools"), 200, "GET /v1/tools");
  expect(get("/v1/tools/calculator"), 200, "GET tool");
  auto inv = post("/v1/tools/calculator/invoke", R"({"expression": "2+2"})");
  expect(inv, 200, "invoke");
  c.require(inv.body.is_object() && inv.body["observation"]["output_value"] == "4", "2+2 != 4");
  Json case_body{{"tool", "calculator"},
                 {"input", {{"expression", "20+1"}}},
                 {"expect", {{"kind", "exact"}, {"value", "21"}}}};
  auto sub = post("/v1/tests", case_body.dump());
  expect(sub, 201, "POST /v1/tests");
  const std::string sub_id = sub.body.value("id", "");
  expect(get("/v1/submissions"), 200, "GET submissions");
  expect(get("/v1/submissions/" + sub_id), 200, "GET submission");
  expect(post("/v1/submissions/" + sub_id + "/review", R"({"decision": "accept", "reviewer": "r"})"), 401,
         "review without token");
  expect(post("/v1/eval/rounds", "{}"), 401, "round without token");
  expect(post("/v1/submissions/" + sub_id + "/review", R"({"decision": "accept", "reviewer": "r"})", auth), 200,
         "review");
  expect(post("/v1/eval/rounds", "{}", auth), 201, "round");
  auto round = get("/v1/eval/rounds/1");
  expect(round, 200, "GET round");
  expect(get("/v1/reports/latest"), 200, "report");
  expect(get("/v1/tools/calculator/reliability"), 200, "reliability");
  const std::string case_id = round.body.is_object() ? round.body["checks"]["calculator"][0].value("case_id", "") : "";
  auto fb = post("/v1/feedback", Json{{"scope", "tool_output"},
                                      {"target_id", community::check_id(1, "calculator", case_id)},
                                      {"rating", "negative"}}
                                     .dump());
  expect(fb, 201, "feedback");
  expect(post("/v1/submissions/" + fb.body.value("id", "") + "/promote", "{}"), 200, "promote");
  Json manifest = testsupport::manifest("shout", "program", Json::array({testsupport::param("text", "string"),
                                                                         testsupport::param("operation", "string")}));
  expect(post("/v1/tools", Json{{"manifest", manifest}, {"binding", {{"kind", "program"}, {"function", "string_transformer"}}}}.dump()),
         201, "POST /v1/tools");
  Json run_req{{"query", "24*7?"}, {"policy_config", {{"kind", "react"}}}, {"mock_script", fixture("react_168.json")}};
  auto run = post("/v1/agent/runs", run_req.dump());
  expect(run, 200, "agent run");
  c.require(run.body.is_object() && run.body["answer"] == "168" && run.body["invocations"] == 1, "react 168 via REST");
  expect(get("/v1/agent/runs/" + run.body.value("run_id", "")), 200, "GET run");
  auto tr = get(run.body.value("trace_url", "/v1/traces/none"));
  expect(tr, 200, "GET trace");

  // Every failing mutation leaves the state hash unchanged.
  const std::string before = hash();
  Json bad_policy = run_req;
  bad_policy["policy_config"]["kind"] = "tree";
  Json bad_tools = run_req;
  bad_tools["tool_names"] = {"ghost"};
  Json bad_sel = run_req;
  bad_sel["selection"] = {{"k", 0}};
  Json ghost_case = case_body;
  ghost_case["tool"] = "ghost";
  const std::vector<std::tuple<std::string, std::string, httplib::Headers, int>> failing{
      {"/v1/tests", "nope", {}, 400},
      {"/v1/tests", ghost_case.dump(), {}, 400},
      {"/v1/tests", R"({"tool": "calculator", "input": {"expr": 1}})", {}, 400},
      {"/v1/feedback", R"({"scope": "tool_output", "target_id": "x", "rating": "negative"})", {}, 400},
      {"/v1/tools", R"({"manifest": {"name": "x"}})", {}, 400},
      {"/v1/tools/calculator/invoke", "[", {}, 400},
      {"/v1/tools/ghost/invoke", "{}", {}, 404},
      {"/v1/submissions/" + sub_id + "/review", R"({"decision": "reject", "reviewer": "r"})", auth, 409},
      {"/v1/submissions/sub-999999/review", R"({"decision": "accept", "reviewer": "r"})", auth, 404},
      {"/v1/submissions/" + sub_id + "/review", R"({"decision": "perhaps", "reviewer": "r"})", auth, 400},
      {"/v1/submissions/" + sub_id + "/review", R"({"decision": "accept", "reviewer": "r"})", {}, 401},
      {"/v1/submissions/" + sub_id + "/promote", "{}", {}, 400},
      {"/v1/eval/rounds", "{}", {}, 401},
      {"/v1/eval/rounds", R"({"parallelism": 0})", auth, 400},
      {"/v1/agent/runs", bad_policy.dump(), {}, 400},
      {"/v1/agent/runs", bad_tools.dump(), {}, 400},
      {"/v1/agent/runs", bad_sel.dump(), {}, 400},
  };
  int unchanged = 0;
  for (const auto& [path, body, headers, status] : failing) {
    expect(post(path, body, headers), status, "POST " + path);
    const bool same = hash() == before;
    unchanged += same ? 1 : 0;
    c.require(same, "state changed after failed POST " + path);
  }

  // Invoke endpoint vs direct runtime on randomized calls.
  std::vector<std::pair<std::string, Json>> pool;
  const auto all_cases = ws.store().load_all_cases();
  for (const auto& [tool, cases] : all_cases) {
    for (const auto& tc : cases) pool.emplace_back(tool, tc.input_args);
  }
  std::mt19937 rng(8);
  int agree = 0;
  for (int i = 0; i < kInvokeCalls; ++i) {
    auto [tool, args] = pool[rng() % pool.size()];
    if (rng() % 4 == 0 && !args.empty()) args.erase(args.begin());
    if (rng() % 4 == 0) args["extra"] = i;
    auto http = post("/v1/tools/" + tool + "/invoke", args.dump());
    auto direct = ws.registry().invoke(tool, args);
    Json want;
    if (const auto* o = std::get_if<runtime::Observation>(&direct)) {
      want = {true, o->output_value};
    } else {
      const auto& e = std::get<runtime::ToolError>(direct);
      want = {false, std::string(runtime::to_string(e.error_class)), e.message};
    }
    Json got;
    if (http.status == 200 && http.body.is_object()) {
      got = http.body["ok"].get<bool>()
                ? Json{true, http.body["observation"]["output_value"]}
                : Json{false, http.body["error"]["class"], http.body["error"]["message"]};
    }
    agree += got == want ? 1 : 0;
  }
  c.require(agree == kInvokeCalls, std::to_string(kInvokeCalls - agree) + " invoke disagreements");
  svc.stop();
  return c.finish(std::to_string(endpoints) + " requests as expected; " + std::to_string(unchanged) + "/" +
                  std::to_string(failing.size()) + " failed mutations left state unchanged; invoke agreement " +
                  std::to_string(agree) + "/" + std::to_string(kInvokeCalls));
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"verifier_oracle_equivalence", verifier_oracle},
      {"suite_accounting", suite_accounting},
      {"regression_detection", regression_detection},
      {"community_lifecycle", community_lifecycle},
      {"agent_episodes", agent_episodes},
      {"trace_attribution", trace_attribution},
      {"end_to_end_determinism", end_to_end},
      {"service_contract", service_contract},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  return failed;
}
