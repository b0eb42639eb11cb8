#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>

#include "support.hpp"
#include "toolhub/common.hpp"

namespace {

using toolhub::Json;
using testsupport::TempDir;
namespace fs = std::filesystem;

struct CliResult {
  int code = -1;
  std::string out;
};

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

// Runs the CLI with stdout captured and stderr discarded.
CliResult cli(const fs::path& state, const std::vector<std::string>& args) {
  std::string cmd = quote(TOOLHUB_CLI_PATH) + " --state " + quote(state.string());
  for (const auto& a : args) cmd += " " + quote(a);
  cmd += " 2>/dev/null";
  CliResult r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) throw std::runtime_error("popen failed");
  char buf[4096];
  for (std::size_t n; (n = fread(buf, 1, sizeof buf, p)) > 0;) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

TEST(Cli, ValidateCalculatorManifest) {
  TempDir dir;
  auto r = cli(dir.path() / "s", {"tools", "validate", (testsupport::seed_dir() / "tools" / "calculator.json").string()});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("calculator"), std::string::npos);
  EXPECT_NE(r.out.find("valid"), std::string::npos);
}

TEST(Cli, ValidateRejectsBrokenManifest) {
  TempDir dir;
  const auto path = dir.path() / "broken.json";
  toolhub::write_file_atomic(path, R"({"name": "Bad Name", "category": "magic"})");
  auto r = cli(dir.path() / "s", {"--format", "json", "tools", "validate", path.string()});
  EXPECT_EQ(r.code, 2);
  Json doc = Json::parse(r.out);
  EXPECT_FALSE(doc["ok"].get<bool>());
  EXPECT_GE(doc["violations"].size(), 2u);
  EXPECT_EQ(cli(dir.path() / "s", {"tools", "validate", (dir.path() / "missing.json").string()}).code, 1);
}

TEST(Cli, UsageErrorsExitOne) {
  TempDir dir;
  EXPECT_EQ(cli(dir.path() / "s", {}).code, 1);
  EXPECT_EQ(cli(dir.path() / "s", {"frobnicate"}).code, 1);
  EXPECT_EQ(cli(dir.path() / "s", {"eval", "run", "--parallelism", "0"}).code, 1);
  EXPECT_EQ(cli(dir.path() / "s", {"--help"}).code, 0);
}

TEST(Cli, EvalRunThenReportIsDeterministic) {
  TempDir a, b;
  std::vector<std::string> reports;
  for (const TempDir* d : {&a, &b}) {
    ASSERT_EQ(cli(d->path(), {"init"}).code, 0);
    auto run = cli(d->path(), {"--format", "json", "eval", "run"});
    ASSERT_EQ(run.code, 0) << run.out;
    EXPECT_EQ(Json::parse(run.out)["round_id"], 1);
    auto rep = cli(d->path(), {"--format", "json", "report"});
    ASSERT_EQ(rep.code, 0);
    reports.push_back(rep.out);
  }
  EXPECT_EQ(reports[0], reports[1]);
  EXPECT_EQ(cli(a.path(), {"report"}).out, cli(b.path(), {"report"}).out);
  auto one = cli(a.path(), {"--format", "json", "report", "--tool", "calculator"});
  ASSERT_EQ(one.code, 0);
  EXPECT_EQ(Json::parse(one.out)["tools"].size(), 1u);
  EXPECT_EQ(cli(a.path(), {"report", "--tool", "ghost"}).code, 2);
}

TEST(Cli, AgentRunPrints168) {
  TempDir dir;
  auto r = cli(dir.path() / "s", {"agent", "run", "--policy", "react", "--mock-script",
                                  (testsupport::fixtures_dir() / "react_168.json").string(), "--query", "24*7?"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "168\n");
}

TEST(Cli, AgentRunFailures) {
  TempDir dir;
  const auto script = dir.path() / "loop.json";
  toolhub::write_file_atomic(
      script, R"([{"tool_call": {"name": "calculator", "arguments": {"expression": "1+1"}}, "repeat": true}])");
  auto exhausted = cli(dir.path() / "s", {"--format", "json", "agent", "run", "--policy", "react", "--max-steps", "2",
                                          "--mock-script", script.string(), "--query", "loop"});
  EXPECT_EQ(exhausted.code, 3);
  Json doc = Json::parse(exhausted.out);
  EXPECT_EQ(doc["status"], "step_budget_exhausted");
  EXPECT_EQ(doc["invocations"], 2);
  EXPECT_EQ(cli(dir.path() / "s", {"agent", "run", "--policy", "tree", "--query", "q"}).code, 2);
  EXPECT_EQ(cli(dir.path() / "s", {"agent", "run", "--tools", "ghost", "--query", "q"}).code, 2);
  EXPECT_EQ(cli(dir.path() / "s", {"agent", "run", "--select", "k=0", "--query", "q"}).code, 1);
}

TEST(Cli, CommunityFlow) {
  TempDir dir;
  const auto state = dir.path() / "s";
  const auto cases = dir.path() / "cases.json";
  toolhub::write_file_atomic(cases, Json::array({{{"tool", "calculator"},
                                                  {"input", {{"expression", "6*7"}}},
                                                  {"expect", {{"kind", "exact"}, {"value", "42"}}}}})
                                        .dump());
  auto sub = cli(state, {"--format", "json", "tests", "submit", cases.string(), "--submitter", "ann"});
  ASSERT_EQ(sub.code, 0) << sub.out;
  const std::string id = Json::parse(sub.out)[0]["id"];
  auto pending = cli(state, {"--format", "json", "submissions", "--status", "pending"});
  EXPECT_EQ(Json::parse(pending.out).size(), 1u);
  EXPECT_EQ(cli(state, {"review", id, "--accept", "--reject", "--reviewer", "r"}).code, 1);
  EXPECT_EQ(cli(state, {"review", id, "--accept", "--reviewer", "r"}).code, 0);
  EXPECT_EQ(cli(state, {"review", id, "--accept", "--reviewer", "r"}).code, 3);
  auto run = cli(state, {"--format", "json", "eval", "run"});
  ASSERT_EQ(run.code, 0);
  auto tools = cli(state, {"--format", "json", "tools", "list"});
  for (const auto& t : Json::parse(tools.out)) {
    if (t["name"] == "calculator") {
      EXPECT_TRUE(t["accuracy_summary"].is_object());
    }
  }
  toolhub::write_file_atomic(cases, R"([{"tool": "ghost"}])");
  EXPECT_EQ(cli(state, {"tests", "submit", cases.string()}).code, 2);
}

TEST(Cli, CorruptStateExitsFour) {
  TempDir dir;
  const auto state = dir.path() / "s";
  ASSERT_EQ(cli(state, {"init"}).code, 0);
  toolhub::write_file_atomic(state / "tools" / "calculator.json", "{ not json");
  EXPECT_EQ(cli(state, {"tools", "list"}).code, 4);
}

}  // namespace
