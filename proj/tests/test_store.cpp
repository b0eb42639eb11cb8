#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "support.hpp"
#include "toolhub/store.hpp"

namespace {

using namespace toolhub;
using store::FileStore;
using testsupport::TempDir;
namespace fs = std::filesystem;

struct EmptyStore : ::testing::Test {
  void SetUp() override {
    fs::create_directories(seed.path() / "tools");
    FileStore::initialize(root.path(), seed.path());
  }
  TempDir seed, root;
  FileStore store{root.path()};
  std::shared_ptr<std::atomic<int>> correct = std::make_shared<std::atomic<int>>(3);
  std::unique_ptr<runtime::ToolRegistry> registry = testsupport::drifting_registry(correct);
};

TEST(Seed, InitializeCopiesLayout) {
  TempDir root;
  EXPECT_FALSE(FileStore::is_initialized(root.path()));
  FileStore::initialize(root.path(), testsupport::seed_dir());
  EXPECT_TRUE(FileStore::is_initialized(root.path()));
  FileStore store(root.path());
  auto tools = store.load_tools();
  EXPECT_GE(tools.size(), 10u);
  std::set<schema::Category> cats;
  for (const auto& t : tools) cats.insert(t.descriptor.category);
  EXPECT_EQ(cats.size(), 3u);
  auto cases = store.load_all_cases();
  EXPECT_FALSE(cases.at("calculator").empty());
  EXPECT_TRUE(store.load_rounds().empty());
  EXPECT_EQ(store.next_run_number(), 1);
  EXPECT_EQ(store.next_submission_id(), "sub-000001");
  EXPECT_THROW(FileStore::initialize(root.path(), root.path() / "nope"), StoreError);
}

TEST(Seed, InvalidManifestNamesTheFile) {
  TempDir root;
  FileStore::initialize(root.path(), testsupport::seed_dir());
  write_file_atomic(root.path() / "tools" / "broken.json", R"({"name": "broken"})");
  FileStore store(root.path());
  try {
    store.load_tools();
    FAIL() << "expected StoreError";
  } catch (const StoreError& e) {
    EXPECT_NE(std::string(e.what()).find("broken.json"), std::string::npos);
  }
}

TEST_F(EmptyStore, CasesRoundTrip) {
  auto suite = testsupport::drifting_suite(3);
  store.save_cases("drifting", suite);
  EXPECT_EQ(store.load_cases("drifting"), suite);
  EXPECT_TRUE(store.load_cases("absent").empty());
}

TEST_F(EmptyStore, FaultBeforeCommitLeavesNoRound) {
  store.save_cases("drifting", testsupport::drifting_suite(3));
  for (const char* step : {"checks", "commit"}) {
    const std::string before = store::hash_tree(root.path() / "state" / "profiles");
    store.set_fault_hook([&](std::string_view s) {
      if (s == step) throw std::runtime_error("crash");
    });
    EXPECT_THROW(reliability::run_round(*registry, store), std::runtime_error) << step;
    EXPECT_TRUE(store.load_rounds().empty()) << step;
    EXPECT_FALSE(registry->descriptor("drifting")->accuracy_summary.has_value()) << step;
    EXPECT_EQ(store::hash_tree(root.path() / "state" / "profiles"), before);
  }
  store.set_fault_hook(nullptr);
  auto out = reliability::run_round(*registry, store);
  EXPECT_EQ(out.round.round_id, 1);
  EXPECT_EQ(store.load_rounds().size(), 1u);
  EXPECT_EQ(store.load_checks(1).at("drifting").size(), 3u);
}

TEST_F(EmptyStore, FaultAfterCommitKeepsTheRound) {
  store.save_cases("drifting", testsupport::drifting_suite(3));
  store.set_fault_hook([](std::string_view s) {
    if (s == "profiles") throw std::runtime_error("crash");
  });
  auto out = reliability::run_round(*registry, store);
  EXPECT_EQ(store.load_rounds().size(), 1u);
  EXPECT_TRUE(registry->descriptor("drifting")->accuracy_summary.has_value());
}

TEST_F(EmptyStore, InterruptedAppendIsIgnoredAndRepaired) {
  store.save_cases("drifting", testsupport::drifting_suite(2));
  reliability::run_round(*registry, store);
  {
    std::ofstream f(root.path() / "state" / "rounds.jsonl", std::ios::app);
    f << R"({"round_id": 2, "per_tool": {)";
  }
  ASSERT_EQ(store.load_rounds().size(), 1u);
  auto out = reliability::run_round(*registry, store);
  EXPECT_EQ(out.round.round_id, 2);
  auto rounds = store.load_rounds();
  ASSERT_EQ(rounds.size(), 2u);
  EXPECT_EQ(rounds[1].round_id, 2);
  const std::string log = read_file(root.path() / "state" / "rounds.jsonl");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 2);
}

TEST_F(EmptyStore, ChecksOfUncommittedRoundsAreUnreachable) {
  store.save_cases("drifting", testsupport::drifting_suite(2));
  store.set_fault_hook([](std::string_view s) {
    if (s == "commit") throw std::runtime_error("crash");
  });
  EXPECT_THROW(reliability::run_round(*registry, store), std::runtime_error);
  EXPECT_TRUE(fs::exists(root.path() / "state" / "checks" / "1.json"));
  EXPECT_TRUE(store.load_checks(1).empty());
}

TEST_F(EmptyStore, TracesBlobsAndRuns) {
  trace::ExecutionTrace t("trace-000001", "run-000001");
  const std::string big(trace::kInlinePayloadLimit + 10, 'z');
  t.append(trace::EventKind::tool_result, {{"output", big}});
  t.finalize();
  store.save_trace(t);
  EXPECT_TRUE(store.has_trace("trace-000001"));
  EXPECT_FALSE(store.has_trace("trace-000002"));
  auto doc = store.load_trace_jsonl("trace-000001");
  ASSERT_TRUE(doc);
  EXPECT_EQ(trace::deserialize_jsonl(*doc), t);
  EXPECT_EQ(store.load_blob(sha256_hex(big)), big);
  EXPECT_FALSE(store.load_blob("../../etc/passwd").has_value());
  store.save_run("run-000001", {{"answer", "x"}});
  EXPECT_EQ(store.load_run("run-000001")->at("answer"), "x");
  EXPECT_EQ(store.next_run_number(), 2);
}

TEST_F(EmptyStore, AuditAndSubmissions) {
  store.append_audit({{"n", 1}});
  store.append_audit({{"n", 2}});
  auto audit = store.load_audit();
  ASSERT_EQ(audit.size(), 2u);
  EXPECT_EQ(audit[1]["n"], 2);
  store.save_submission("sub-000001", {{"id", "sub-000001"}});
  EXPECT_EQ(store.next_submission_id(), "sub-000002");
  EXPECT_TRUE(store.load_submission("sub-000001"));
  EXPECT_FALSE(store.load_submission("sub-000009"));
}

TEST_F(EmptyStore, HashTreeTracksContentAndPaths) {
  const std::string h0 = store::hash_tree(root.path());
  EXPECT_EQ(store::hash_tree(root.path()), h0);
  write_file_atomic(root.path() / "a.txt", "1");
  const std::string h1 = store::hash_tree(root.path());
  EXPECT_NE(h1, h0);
  write_file_atomic(root.path() / "a.txt", "2");
  EXPECT_NE(store::hash_tree(root.path()), h1);
  fs::remove(root.path() / "a.txt");
  write_file_atomic(root.path() / "b.txt", "2");
  EXPECT_NE(store::hash_tree(root.path()), h1);
}

}  // namespace
