#include <gtest/gtest.h>
#include <httplib.h>

#include <random>

#include "support.hpp"
#include "toolhub/service.hpp"
#include "toolhub/store.hpp"

namespace {

using namespace toolhub;
using testsupport::TempDir;

struct Reply {
  int status = 0;
  Json body;
  std::string raw;
};

// A fresh seeded state dir served on an ephemeral port.
class Api : public ::testing::Test {
 protected:
  void SetUp() override { open(std::nullopt); }

  void open(std::optional<std::string> token) {
    service_.reset();
    ws_ = std::make_unique<workspace::Workspace>(workspace::WorkspaceOptions{dir_.path() / "state", testsupport::seed_dir()});
    service_ = std::make_unique<service::Service>(*ws_, service::ServiceConfig{std::move(token)});
    service_->start();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", service_->port());
    client_->set_read_timeout(30, 0);
  }

  Reply get(const std::string& path, const httplib::Headers& h = {}) { return wrap(client_->Get(path, h)); }
  Reply post(const std::string& path, const Json& body, const httplib::Headers& h = {}) {
    return wrap(client_->Post(path, h, body.dump(), "application/json"));
  }
  Reply post_raw(const std::string& path, const std::string& body) {
    return wrap(client_->Post(path, body, "application/json"));
  }

  std::string state_hash() const { return store::hash_tree(dir_.path() / "state"); }

  workspace::Workspace& ws() { return *ws_; }

 private:
  static Reply wrap(const httplib::Result& r) {
    if (!r) throw std::runtime_error("request failed: " + httplib::to_string(r.error()));
    Reply out{r->status, Json::parse(r->body, nullptr, false), r->body};
    return out;
  }

  TempDir dir_;
  std::unique_ptr<workspace::Workspace> ws_;
  std::unique_ptr<service::Service> service_;
  std::unique_ptr<httplib::Client> client_;
};

Json react_168_request() {
  return {{"query", "24*7?"},
          {"policy_config", {{"kind", "react"}}},
          {"mock_script", Json::parse(read_file(testsupport::fixtures_dir() / "react_168.json"))}};
}

Json case_body(const std::string& value) {
  return {{"tool", "calculator"},
          {"input", {{"expression", "20+1"}}},
          {"expect", {{"kind", "exact"}, {"value", value}}},
          {"submitter", "alice"}};
}

std::size_t count_kind(const std::string& jsonl, const std::string& kind) {
  std::size_t n = 0;
  std::istringstream in(jsonl);
  for (std::string line; std::getline(in, line);) {
    Json e = Json::parse(line);
    n += e.value("kind", "") == kind ? 1 : 0;
  }
  return n;
}

TEST_F(Api, ListsAndDescribesTools) {
  auto r = get("/v1/tools");
  ASSERT_EQ(r.status, 200);
  ASSERT_GE(r.body.size(), 10u);
  std::set<std::string> categories;
  for (const auto& t : r.body) categories.insert(t["category"].get<std::string>());
  EXPECT_EQ(categories, (std::set<std::string>{"api", "program", "prompting"}));
  auto one = get("/v1/tools/calculator");
  ASSERT_EQ(one.status, 200);
  EXPECT_EQ(one.body["name"], "calculator");
  EXPECT_TRUE(one.body.contains("arguments"));
  auto missing = get("/v1/tools/ghost");
  EXPECT_EQ(missing.status, 404);
  EXPECT_EQ(missing.body["code"], "not_found");
  EXPECT_EQ(get("/v1/nowhere").status, 404);
}

TEST_F(Api, InvokeCalculator) {
  auto r = post("/v1/tools/calculator/invoke", {{"expression", "2+2"}});
  ASSERT_EQ(r.status, 200);
  EXPECT_TRUE(r.body["ok"].get<bool>());
  EXPECT_EQ(r.body["observation"]["output_value"], "4");
  auto bad = post("/v1/tools/calculator/invoke", {{"expr", "2+2"}});
  ASSERT_EQ(bad.status, 200);
  EXPECT_FALSE(bad.body["ok"].get<bool>());
  EXPECT_EQ(bad.body["error"]["class"], "validation");
  EXPECT_EQ(post("/v1/tools/ghost/invoke", Json::object()).status, 404);
  EXPECT_EQ(post_raw("/v1/tools/calculator/invoke", "[1, 2").status, 400);
}

TEST_F(Api, InvalidTestSubmissionIsRejectedWithViolations) {
  const std::string before = state_hash();
  Json body = case_body("21");
  body["input"] = {{"expr", 1}};
  body["expect"] = {{"kind", "numeric_tolerance"}};
  auto r = post("/v1/tests", body);
  ASSERT_EQ(r.status, 400);
  EXPECT_EQ(r.body["status"], 400);
  ASSERT_TRUE(r.body["violations"].is_array());
  EXPECT_GE(r.body["violations"].size(), 2u);
  EXPECT_TRUE(r.body["violations"][0].contains("field"));
  EXPECT_EQ(state_hash(), before);
}

TEST_F(Api, SubmissionLifecycleThroughRound) {
  auto sub = post("/v1/tests", case_body("21"));
  ASSERT_EQ(sub.status, 201);
  const std::string id = sub.body["id"];
  EXPECT_EQ(sub.body["status"], "pending");
  EXPECT_EQ(get("/v1/submissions?status=pending").body.size(), 1u);
  EXPECT_EQ(get("/v1/submissions?status=bogus").status, 400);
  EXPECT_EQ(get("/v1/submissions/" + id).body["submitter"], "alice");
  EXPECT_EQ(get("/v1/submissions/sub-999").status, 404);

  auto reviewed = post("/v1/submissions/" + id + "/review", {{"decision", "accept"}, {"reviewer", "bob"}});
  ASSERT_EQ(reviewed.status, 200);
  EXPECT_EQ(reviewed.body["status"], "accepted");
  EXPECT_EQ(post("/v1/submissions/" + id + "/review", {{"decision", "reject"}, {"reviewer", "bob"}}).status, 409);

  auto round = post("/v1/eval/rounds", {{"parallelism", 2}});
  ASSERT_EQ(round.status, 201);
  const auto round_id = round.body["round_id"].get<int>();
  EXPECT_EQ(round_id, 1);
  auto detail = get("/v1/eval/rounds/1");
  ASSERT_EQ(detail.status, 200);
  bool found = false;
  for (const auto& c : detail.body["checks"]["calculator"]) found = found || c["case_id"] == "calculator-" + id;
  EXPECT_TRUE(found);
  EXPECT_EQ(get("/v1/eval/rounds/7").status, 404);

  auto report = get("/v1/reports/latest");
  ASSERT_EQ(report.status, 200);
  EXPECT_EQ(report.body["tools"].size(), get("/v1/tools").body.size());
  auto rel = get("/v1/tools/calculator/reliability");
  ASSERT_EQ(rel.status, 200);
  EXPECT_EQ(rel.body["status"], "evaluated");
  EXPECT_EQ(get("/v1/tools/ghost/reliability").status, 404);
  auto card = get("/v1/tools/calculator");
  EXPECT_TRUE(card.body["accuracy_summary"].is_object());
}

TEST_F(Api, FeedbackAndPromotion) {
  post("/v1/eval/rounds", Json::object());
  auto detail = get("/v1/eval/rounds/1");
  const std::string case_id = detail.body["checks"]["calculator"][0]["case_id"];
  auto fb = post("/v1/feedback", {{"scope", "tool_output"},
                                  {"target_id", community::check_id(1, "calculator", case_id)},
                                  {"rating", "negative"}});
  ASSERT_EQ(fb.status, 201) << fb.raw;
  auto draft = post("/v1/submissions/" + fb.body["id"].get<std::string>() + "/promote", Json::object());
  ASSERT_EQ(draft.status, 200) << draft.raw;
  EXPECT_EQ(draft.body["tool"], "calculator");
  EXPECT_EQ(post("/v1/submissions/sub-404/promote", Json::object()).status, 404);
}

TEST_F(Api, ToolManifestSubmission) {
  Json manifest = testsupport::manifest("shout", "program",
                                        Json::array({testsupport::param("text", "string"),
                                                     testsupport::param("operation", "string")}));
  Json body{{"manifest", manifest}, {"binding", {{"kind", "program"}, {"function", "string_transformer"}}}};
  auto sub = post("/v1/tools", body);
  ASSERT_EQ(sub.status, 201) << sub.raw;
  EXPECT_EQ(get("/v1/tools/shout").status, 404);
  ASSERT_EQ(post("/v1/submissions/" + sub.body["id"].get<std::string>() + "/review",
                 {{"decision", "accept"}, {"reviewer", "r"}})
                .status,
            200);
  auto r = post("/v1/tools/shout/invoke", {{"text", "hi"}, {"operation", "upper"}});
  EXPECT_EQ(r.body["observation"]["output_value"], "HI");
}

TEST_F(Api, React168Run) {
  auto r = post("/v1/agent/runs", react_168_request());
  ASSERT_EQ(r.status, 200) << r.raw;
  EXPECT_EQ(r.body["answer"], "168");
  EXPECT_EQ(r.body["status"], "completed");
  EXPECT_EQ(r.body["invocations"], 1);
  const std::string url = r.body["trace_url"];
  EXPECT_EQ(url.rfind("/v1/traces/", 0), 0u);
  auto t = get(url);
  ASSERT_EQ(t.status, 200);
  EXPECT_EQ(count_kind(t.raw, "tool_invocation"), 1u);
}

TEST_F(Api, PromptingRunWithToolNamesInvokesNothing) {
  Json req{{"query", "What is 6*7?"},
           {"policy_config", {{"kind", "prompting_zero_shot"}}},
           {"tool_names", {"calculator"}},
           {"mock_script", Json::array({"FINAL ANSWER: 42"})}};
  auto r = post("/v1/agent/runs", req);
  ASSERT_EQ(r.status, 200) << r.raw;
  EXPECT_EQ(r.body["answer"], "42");
  EXPECT_EQ(r.body["invocations"], 0);
  auto trace = get(r.body["trace_url"].get<std::string>());
  EXPECT_EQ(count_kind(trace.raw, "tool_invocation"), 0u);
}

TEST_F(Api, SelectionIsRecorded) {
  Json req = react_168_request();
  req["query"] = "multiply 24 by 7 with arithmetic";
  req["selection"] = {{"k", 3}, {"mode", "lexical"}};
  auto r = post("/v1/agent/runs", req);
  ASSERT_EQ(r.status, 200) << r.raw;
  auto trace = get(r.body["trace_url"].get<std::string>());
  std::istringstream in(trace.raw);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  Json e = Json::parse(first);
  EXPECT_EQ(e["payload"]["phase"], "selection");
  EXPECT_EQ(e["payload"]["k"], 3);
  EXPECT_EQ(e["payload"]["mode"], "lexical");
  EXPECT_EQ(e["payload"]["selected"].size(), 3u);
}

TEST_F(Api, RunAndTraceRetrieval) {
  auto r = post("/v1/agent/runs", react_168_request());
  const std::string run_id = r.body["run_id"];
  auto run = get("/v1/agent/runs/" + run_id);
  ASSERT_EQ(run.status, 200);
  EXPECT_EQ(run.body["answer"], "168");
  auto trace = get(r.body["trace_url"].get<std::string>());
  ASSERT_EQ(trace.status, 200);
  auto parsed = trace::deserialize_jsonl(trace.raw);
  EXPECT_EQ(parsed.count(trace::EventKind::tool_invocation), 1u);
  EXPECT_EQ(get("/v1/agent/runs/run-404").status, 404);
  EXPECT_EQ(get("/v1/traces/trace-404").status, 404);
  EXPECT_EQ(get("/v1/traces/" + parsed.trace_id() + "/blobs/" + std::string(64, 'a')).status, 404);
}

TEST_F(Api, LargeOutputsAreServedAsBlobs) {
  const std::string long_text(trace::kInlinePayloadLimit + 100, 'q');
  Json req{{"query", "shout"},
           {"policy_config", {{"kind", "react"}}},
           {"mock_script", Json::array({testsupport::tool_call("string_transformer",
                                                               {{"text", long_text}, {"operation", "upper"}}),
                                        "FINAL ANSWER: done"})}};
  auto r = post("/v1/agent/runs", req);
  ASSERT_EQ(r.status, 200) << r.raw;
  auto parsed = trace::deserialize_jsonl(get(r.body["trace_url"].get<std::string>()).raw);
  const std::string upper(long_text.size(), 'Q');
  auto blob = get("/v1/traces/" + parsed.trace_id() + "/blobs/" + sha256_hex(upper));
  ASSERT_EQ(blob.status, 200);
  EXPECT_EQ(blob.raw, upper);
}

TEST_F(Api, BackendFailureIs502AndPersisted) {
  Json req{{"query", "q"}, {"policy_config", {{"kind", "prompting_zero_shot"}}}, {"mock_script", Json::array()}};
  auto r = post("/v1/agent/runs", req);
  ASSERT_EQ(r.status, 502);
  EXPECT_EQ(r.body["code"], "backend_unavailable");
  EXPECT_EQ(get(r.body["trace_url"].get<std::string>()).status, 200);
  EXPECT_EQ(get("/v1/agent/runs/" + r.body["run_id"].get<std::string>()).body["status"], "failed");
}

// Every rejected mutation leaves the state dir byte-identical.
TEST_F(Api, FailedMutationsLeaveStateUnchanged) {
  auto pending = post("/v1/tests", case_body("21"));
  const std::string id = pending.body["id"];
  auto done = post("/v1/tests", case_body("22"));
  const std::string done_id = done.body["id"];
  ASSERT_EQ(post("/v1/submissions/" + done_id + "/review", {{"decision", "reject"}, {"reviewer", "r"}}).status, 200);
  const std::string before = state_hash();

  struct Case {
    std::string path;
    std::string body;
    int status;
  };
  Json bad_agent = react_168_request();
  bad_agent["policy_config"]["kind"] = "tree_search";
  Json unknown_tool = react_168_request();
  unknown_tool["tool_names"] = {"ghost"};
  Json bad_k = react_168_request();
  bad_k["selection"] = {{"k", 0}};
  Json ghost_case = case_body("1");
  ghost_case["tool"] = "ghost_tool";
  Json big_k = react_168_request();
  big_k["selection"] = {{"k", 500}};
  const std::vector<Case> cases{
      {"/v1/tests", "not json", 400},
      {"/v1/tests", "[]", 400},
      {"/v1/tests", ghost_case.dump(), 400},
      {"/v1/tests", Json{{"tool", "calculator"}, {"input", {{"expression", "1"}}}}.dump(), 400},
      {"/v1/feedback", Json{{"scope", "tool_output"}, {"target_id", "nope"}, {"rating", "negative"}}.dump(), 400},
      {"/v1/feedback", Json{{"scope", "galaxy"}}.dump(), 400},
      {"/v1/tools", Json{{"manifest", {{"name", "x"}}}}.dump(), 400},
      {"/v1/tools", Json{{"manifest", testsupport::manifest("calculator", "program", Json::array())},
                         {"binding", {{"kind", "program"}, {"function", "calculator"}}}}
                        .dump(),
       400},
      {"/v1/submissions/" + id + "/review", Json{{"decision", "maybe"}, {"reviewer", "r"}}.dump(), 400},
      {"/v1/submissions/" + id + "/review", Json{{"decision", "accept"}}.dump(), 400},
      {"/v1/submissions/sub-777/review", Json{{"decision", "accept"}, {"reviewer", "r"}}.dump(), 404},
      {"/v1/submissions/" + done_id + "/review", Json{{"decision", "accept"}, {"reviewer", "r"}}.dump(), 409},
      {"/v1/submissions/" + id + "/promote", "{}", 400},
      {"/v1/eval/rounds", Json{{"parallelism", 0}}.dump(), 400},
      {"/v1/agent/runs", bad_agent.dump(), 400},
      {"/v1/agent/runs", unknown_tool.dump(), 400},
      {"/v1/agent/runs", bad_k.dump(), 400},
      {"/v1/agent/runs", big_k.dump(), 400},
      {"/v1/agent/runs", Json{{"query", "q"}, {"tool_names", "calculator"}}.dump(), 400},
      {"/v1/tools/calculator/invoke", Json{{"expression", "1/0"}}.dump(), 200},
  };
  for (const auto& c : cases) {
    auto r = post_raw(c.path, c.body);
    EXPECT_EQ(r.status, c.status) << c.path << " " << c.body << " -> " << r.raw;
    if (c.status >= 400) {
      EXPECT_EQ(r.body["status"], c.status) << c.path;
    }
    ASSERT_EQ(state_hash(), before) << c.path << " " << c.body;
  }
}

TEST_F(Api, AuthGuardsReviewAndRounds) {
  auto pending = post("/v1/tests", case_body("21"));
  const std::string id = pending.body["id"];
  open("s3cret");
  const std::string before = state_hash();
  EXPECT_EQ(post("/v1/submissions/" + id + "/review", {{"decision", "accept"}, {"reviewer", "r"}}).status, 401);
  EXPECT_EQ(post("/v1/eval/rounds", Json::object()).status, 401);
  EXPECT_EQ(post("/v1/eval/rounds", Json::object(), {{"Authorization", "Bearer wrong"}}).status, 401);
  EXPECT_EQ(state_hash(), before);
  // Reads and submissions stay open.
  EXPECT_EQ(get("/v1/tools").status, 200);
  EXPECT_EQ(post("/v1/tests", case_body("21")).status, 201);
  const httplib::Headers auth{{"Authorization", "Bearer s3cret"}};
  EXPECT_EQ(post("/v1/submissions/" + id + "/review", {{"decision", "accept"}, {"reviewer", "r"}}, auth).status, 200);
  EXPECT_EQ(post("/v1/eval/rounds", Json::object(), auth).status, 201);
}

Json comparable(const runtime::Outcome& o) {
  if (const auto* obs = std::get_if<runtime::Observation>(&o)) {
    return {{"ok", true}, {"output_value", obs->output_value}, {"output_kind", schema::to_string(obs->output_kind)}};
  }
  const auto& e = std::get<runtime::ToolError>(o);
  return {{"ok", false}, {"class", runtime::to_string(e.error_class)}, {"message", e.message}};
}

Json comparable(const Json& body) {
  if (body["ok"].get<bool>()) {
    const Json& o = body["observation"];
    return {{"ok", true}, {"output_value", o["output_value"]}, {"output_kind", o["output_kind"]}};
  }
  return {{"ok", false}, {"class", body["error"]["class"]}, {"message", body["error"]["message"]}};
}

// Randomized calls drawn from the seed suites, plus mutated arguments.
TEST_F(Api, InvokeAgreesWithDirectRuntime) {
  std::vector<std::pair<std::string, Json>> pool;
  for (const auto& [tool, cases] : ws().store().load_all_cases()) {
    for (const auto& c : cases) pool.emplace_back(tool, c.input_args);
  }
  ASSERT_FALSE(pool.empty());
  std::mt19937 rng(41);
  int failures = 0;
  for (int i = 0; i < 100; ++i) {
    auto [tool, args] = pool[rng() % pool.size()];
    switch (rng() % 4) {
      case 0:
        if (!args.empty()) args.erase(args.begin());
        break;
      case 1:
        args["unexpected_" + std::to_string(i)] = 1;
        break;
      default:
        break;
    }
    auto via_http = post("/v1/tools/" + tool + "/invoke", args);
    ASSERT_EQ(via_http.status, 200);
    auto direct = ws().registry().invoke(tool, args);
    ASSERT_EQ(comparable(via_http.body), comparable(direct)) << tool << " " << args.dump();
    failures += via_http.body["ok"].get<bool>() ? 0 : 1;
  }
  EXPECT_GT(failures, 0);
  EXPECT_LT(failures, 100);
}

}  // namespace
