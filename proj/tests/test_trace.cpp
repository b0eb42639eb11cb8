#include <gtest/gtest.h>

#include <random>
#include <set>
#include <thread>

#include "toolhub/trace.hpp"

namespace {

using namespace toolhub;
using namespace toolhub::trace;

TEST(Trace, SeqsStartAtOneAndIncrease) {
  ExecutionTrace t("t1", "r1");
  EXPECT_EQ(t.append(EventKind::policy_step, {{"step", 1}}), 1);
  EXPECT_EQ(t.append(EventKind::tool_invocation, {{"tool", "calculator"}}), 2);
  EXPECT_EQ(t.append(EventKind::tool_result, {{"tool", "calculator"}}), 3);
  auto events = t.events();
  ASSERT_EQ(events.size(), 3u);
  for (std::size_t i = 0; i < events.size(); ++i) EXPECT_EQ(events[i].seq, static_cast<std::int64_t>(i + 1));
  EXPECT_EQ(t.count(EventKind::tool_invocation), 1u);
}

TEST(Trace, AppendAfterFinalizeThrows) {
  ExecutionTrace t("t1", "r1");
  t.append(EventKind::policy_step, {});
  t.finalize();
  EXPECT_THROW(t.append(EventKind::warning, {}), TraceError);
  EXPECT_EQ(t.size(), 1u);
}

TEST(Trace, ConcurrentAppendsGetUniqueSeqs) {
  ExecutionTrace t("t1", "r1");
  constexpr int kThreads = 8, kPer = 250;
  std::vector<std::vector<std::int64_t>> seen(kThreads);
  {
    std::vector<std::jthread> threads;
    for (int i = 0; i < kThreads; ++i) {
      threads.emplace_back([&, i] {
        for (int k = 0; k < kPer; ++k) seen[i].push_back(t.append(EventKind::policy_step, {{"thread", i}}));
      });
    }
  }
  std::set<std::int64_t> all;
  for (const auto& v : seen) {
    EXPECT_TRUE(std::is_sorted(v.begin(), v.end()));
    all.insert(v.begin(), v.end());
  }
  EXPECT_EQ(all.size(), static_cast<std::size_t>(kThreads * kPer));
  EXPECT_EQ(*all.begin(), 1);
  EXPECT_EQ(*all.rbegin(), kThreads * kPer);
}

TEST(Attribution, ValidationAndTimeout) {
  ExecutionTrace t("t1", "r1");
  t.append(EventKind::tool_error, {{"tool", "calculator"}, {"class", "validation"}},
           attribute_failure_class("validation"));
  t.append(EventKind::tool_error, {{"tool", "weather_lookup"}, {"class", "timeout"}},
           attribute_failure_class("timeout"));
  EXPECT_THROW(attribute_failures(t), TraceError);
  t.finalize();
  auto s = attribute_failures(t);
  EXPECT_EQ(s.n_policy_errors, 1);
  EXPECT_EQ(s.n_tool_errors, 1);
  EXPECT_EQ(s.per_tool.at("calculator"), (ToolFailureCounts{1, 0}));
  EXPECT_EQ(s.per_tool.at("weather_lookup"), (ToolFailureCounts{0, 1}));
  EXPECT_EQ(to_json(s)["n_policy_errors"], 1);
}

TEST(Attribution, ClassRule) {
  EXPECT_EQ(attribute_failure_class("validation"), Attribution::policy_error);
  EXPECT_EQ(attribute_failure_class(kUnknownToolClass), Attribution::policy_error);
  for (const char* c : {"execution", "timeout", "rate_limited", "unavailable", "contract_violation"}) {
    EXPECT_EQ(attribute_failure_class(c), Attribution::tool_error) << c;
  }
}

// Random event streams; expected counts come from the class of each injected
// failure, independently of the attribution stored on the event.
TEST(Attribution, RandomizedPartition) {
  static const char* kClasses[] = {"validation", "unknown_tool", "timeout", "execution", "rate_limited", "unavailable"};
  static const char* kTools[] = {"calculator", "geocoder", "summarizer"};
  std::mt19937 rng(99);
  for (int episode = 0; episode < 200; ++episode) {
    ExecutionTrace t("t", "r");
    int want_policy = 0, want_tool = 0;
    std::map<std::string, ToolFailureCounts> want_per_tool;
    const int n = static_cast<int>(rng() % 30);
    for (int i = 0; i < n; ++i) {
      if (rng() % 3 == 0) {
        t.append(EventKind::tool_result, {{"tool", kTools[rng() % 3]}, {"output", "ok"}});
        continue;
      }
      const std::string cls = kClasses[rng() % 6];
      const std::string tool = kTools[rng() % 3];
      const bool policy = cls == "validation" || cls == "unknown_tool";
      (policy ? want_policy : want_tool)++;
      auto& c = want_per_tool[tool];
      (policy ? c.policy_errors : c.tool_errors)++;
      t.append(EventKind::tool_error, {{"tool", tool}, {"class", cls}}, attribute_failure_class(cls));
    }
    t.finalize();
    auto s = attribute_failures(t);
    ASSERT_EQ(s.n_policy_errors, want_policy);
    ASSERT_EQ(s.n_tool_errors, want_tool);
    ASSERT_EQ(s.per_tool, want_per_tool);
  }
}

TEST(Jsonl, EmptyTraceIsHeaderOnly) {
  ExecutionTrace t("trace-1", "run-1", "2026-01-01T00:00:00.000Z");
  t.finalize();
  const std::string doc = serialize_jsonl(t);
  EXPECT_EQ(std::count(doc.begin(), doc.end(), '\n'), 1);
  EXPECT_EQ(Json::parse(doc.substr(0, doc.size() - 1)),
            Json({{"type", "header"}, {"trace_id", "trace-1"}, {"run_id", "run-1"}, {"created_at", "2026-01-01T00:00:00.000Z"}}));
  auto back = deserialize_jsonl(doc);
  EXPECT_EQ(back.size(), 0u);
  EXPECT_EQ(back, t);
}

TEST(Jsonl, SerializeRequiresFinalize) {
  ExecutionTrace t("t", "r");
  EXPECT_THROW(serialize_jsonl(t), TraceError);
}

Json random_payload(std::mt19937& rng) {
  Json p = Json::object();
  const int n = static_cast<int>(rng() % 4);
  for (int i = 0; i < n; ++i) {
    const std::string key = "k" + std::to_string(rng() % 10);
    switch (rng() % 5) {
      case 0:
        p[key] = static_cast<int>(rng() % 1000) - 500;
        break;
      case 1:
        p[key] = std::uniform_real_distribution<>(-1e6, 1e6)(rng);
        break;
      case 2:
        p[key] = std::string("line\n\"quoted\" \xc3\xa9 ") + std::to_string(rng());
        break;
      case 3:
        p[key] = Json::array({true, nullptr, "x"});
        break;
      default:
        p[key] = {{"nested", {{"deep", rng() % 2 == 0}}}};
    }
  }
  return p;
}

TEST(Jsonl, RandomizedRoundTripIsLossless) {
  std::mt19937 rng(5);
  for (int i = 0; i < 100; ++i) {
    ExecutionTrace t("trace-" + std::to_string(i), "run-" + std::to_string(i));
    const int n = static_cast<int>(rng() % 20);
    for (int k = 0; k < n; ++k) {
      const auto kind = static_cast<EventKind>(rng() % 10);
      std::optional<Attribution> a;
      if (rng() % 3 == 0) a = rng() % 2 ? Attribution::policy_error : Attribution::tool_error;
      t.append(kind, random_payload(rng), a);
    }
    t.finalize();
    const std::string doc = serialize_jsonl(t);
    auto back = deserialize_jsonl(doc);
    ASSERT_EQ(back, t);
    ASSERT_EQ(serialize_jsonl(back), doc);  // timestamps included
  }
}

TEST(Jsonl, TamperedLineIsReported) {
  ExecutionTrace t("t", "r");
  for (int i = 0; i < 4; ++i) t.append(EventKind::policy_step, {{"step", i}});
  t.finalize();
  std::string doc = serialize_jsonl(t);
  // Line 3 is the second event; corrupt its JSON.
  std::size_t pos = 0;
  for (int i = 0; i < 2; ++i) pos = doc.find('\n', pos) + 1;
  doc.insert(pos, "#");
  try {
    deserialize_jsonl(doc);
    FAIL() << "expected TraceFormatError";
  } catch (const TraceFormatError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(Jsonl, SequenceGapAndBadKindAreReported) {
  ExecutionTrace t("t", "r");
  t.append(EventKind::policy_step, {});
  t.append(EventKind::policy_step, {});
  t.finalize();
  std::string doc = serialize_jsonl(t);
  std::string gap = doc;
  gap.replace(gap.find("\"seq\":2"), 7, "\"seq\":5");
  EXPECT_THROW(
      {
        try {
          deserialize_jsonl(gap);
        } catch (const TraceFormatError& e) {
          EXPECT_EQ(e.line(), 3u);
          throw;
        }
      },
      TraceFormatError);
  std::string kind = doc;
  kind.replace(kind.find("policy_step"), 11, "mystery_xyz");
  EXPECT_THROW(deserialize_jsonl(kind), TraceFormatError);
  EXPECT_THROW(deserialize_jsonl("{\"seq\":1}\n"), TraceFormatError);
  EXPECT_THROW(deserialize_jsonl(""), TraceFormatError);
}

TEST(Blobs, LargeStringsMoveOutOfLine) {
  ExecutionTrace t("t", "r");
  const std::string big(kInlinePayloadLimit + 1, 'x');
  const std::string small(kInlinePayloadLimit, 'y');
  t.append(EventKind::tool_result, {{"output", big}, {"nested", {big}}, {"small", small}});
  auto e = t.events().front();
  ASSERT_TRUE(e.payload["output"].is_object());
  const std::string digest = sha256_hex(big);
  EXPECT_EQ(e.payload["output"]["digest"], "sha256:" + digest);
  EXPECT_EQ(e.payload["output"]["bytes"], big.size());
  EXPECT_TRUE(e.payload["nested"][0].is_object());
  EXPECT_EQ(e.payload["small"], small);
  auto blobs = t.blobs();
  ASSERT_EQ(blobs.size(), 1u);
  EXPECT_EQ(blobs.at(digest), big);
}

TEST(Trace, EqualityIgnoresTimestamps) {
  ExecutionTrace a("t", "r"), b("t", "r");
  TraceEvent e1;
  e1.kind = EventKind::warning;
  e1.timestamp = "2020-01-01T00:00:00.000Z";
  TraceEvent e2 = e1;
  e2.timestamp = "2030-01-01T00:00:00.000Z";
  a.append(e1);
  b.append(e2);
  EXPECT_EQ(a, b);
  b.append(EventKind::warning, {});
  EXPECT_FALSE(a == b);
}

}  // namespace
