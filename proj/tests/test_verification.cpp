#include <gtest/gtest.h>

#include "oracles.hpp"
#include "support.hpp"
#include "toolhub/verification.hpp"

namespace {

using namespace toolhub;
using namespace toolhub::verification;
using runtime::Observation;

Observation text_output(std::string s) {
  Observation o;
  o.output_kind = schema::OutputKind::text;
  o.output_value = std::move(s);
  return o;
}

Expectation expect(const Json& doc) {
  auto e = parse_expectation(doc);
  if (!e) throw std::invalid_argument("bad expectation: " + e.error().front().reason);
  return e.value();
}

bool passes(const Json& doc, const std::string& out) { return check(expect(doc), text_output(out)).pass; }

TEST(Check, ExactIgnoresTrailingWhitespaceOnly) {
  const Json e{{"kind", "exact"}, {"value", "168"}};
  EXPECT_TRUE(passes(e, "168"));
  EXPECT_TRUE(passes(e, "168\n"));
  EXPECT_FALSE(passes(e, " 168"));
  EXPECT_FALSE(passes(e, "1680"));
}

TEST(Check, NumericToleranceEitherBound) {
  EXPECT_TRUE(passes({{"kind", "numeric_tolerance"}, {"expected", 10.0}, {"abs_tol", 0.5}}, "10.4"));
  EXPECT_FALSE(passes({{"kind", "numeric_tolerance"}, {"expected", 10.0}, {"abs_tol", 0.5}}, "10.6"));
  EXPECT_TRUE(passes({{"kind", "numeric_tolerance"}, {"expected", 1000.0}, {"rel_tol", 0.01}}, "1009"));
  EXPECT_TRUE(passes({{"kind", "numeric_tolerance"}, {"expected", 1000.0}, {"abs_tol", 0.0}, {"rel_tol", 0.01}},
                     " 995 "));
  EXPECT_FALSE(passes({{"kind", "numeric_tolerance"}, {"expected", 1.0}, {"abs_tol", 1.0}}, "one"));
  Observation num;
  num.output_kind = schema::OutputKind::number;
  num.output_value = 3.14159;
  EXPECT_TRUE(check(expect({{"kind", "numeric_tolerance"}, {"expected", 3.14}, {"abs_tol", 0.01}}), num).pass);
}

TEST(Check, PatternIsAnchored) {
  EXPECT_TRUE(passes({{"kind", "pattern"}, {"regex", "[0-9]{4}-[0-9]{2}-[0-9]{2}"}}, "2024-03-01"));
  EXPECT_FALSE(passes({{"kind", "pattern"}, {"regex", "[0-9]+"}}, "abc 123"));
}

TEST(Check, Predicates) {
  auto prop = [](std::string name, Json params = Json::object()) {
    return Json{{"kind", "property"}, {"predicate", std::move(name)}, {"params", std::move(params)}};
  };
  EXPECT_TRUE(passes(prop("is_valid_json"), R"({"a":1})"));
  EXPECT_FALSE(passes(prop("is_valid_json"), "{a"));
  EXPECT_TRUE(passes(prop("is_number"), "-2.5"));
  EXPECT_FALSE(passes(prop("non_empty"), "  "));
  EXPECT_TRUE(passes(prop("length_between", {{"min", 2}, {"max", 3}}), "abc"));
  EXPECT_FALSE(passes(prop("length_between", {{"min", 2}, {"max", 3}}), "abcd"));
  EXPECT_TRUE(passes(prop("number_between", {{"min", 0}, {"max", 1}}), "0.5"));
  EXPECT_TRUE(passes(prop("contains_all", {{"items", {"x", "y"}}}), "xy"));
  EXPECT_FALSE(passes(prop("contains_all", {{"items", {"x", "z"}}}), "xy"));
  EXPECT_TRUE(passes(prop("contains_any", {{"items", {"q", "y"}}}), "xy"));
  EXPECT_TRUE(passes(prop("one_of", {{"values", {"red", "blue"}}}), "blue\n"));
  EXPECT_TRUE(passes(prop("json_has_fields", {{"fields", {"path"}}}), R"({"path":[],"length":0})"));
  EXPECT_FALSE(passes(prop("json_has_fields", {{"fields", {"path"}}}), "[]"));
}

TEST(Check, SemanticUsesJudgeBackend) {
  llm::BackendRegistry judges;
  judges.add("judge", testsupport::script(Json::parse(R"([
    {"match": "Candidate answer:\ncats", "content": "EQUIVALENT", "repeat": true},
    {"match": "Candidate answer:\ndogs", "content": "NOT_EQUIVALENT", "repeat": true}
  ])")));
  CheckContext ctx;
  ctx.judges = &judges;
  const auto e = expect({{"kind", "semantic"}, {"reference", "felines"}, {"judge", "judge"}});
  EXPECT_TRUE(check(e, text_output("cats"), ctx).pass);
  EXPECT_FALSE(check(e, text_output("dogs"), ctx).pass);
  EXPECT_FALSE(check(e, text_output("fish"), ctx).pass);  // judge exhausted
  EXPECT_FALSE(check(e, text_output("cats")).pass);       // no judges configured
}

TEST(ParseExpectation, Violations) {
  auto bad = [](const Json& doc) {
    auto r = parse_expectation(doc);
    return r.ok() ? std::string() : r.error().front().field;
  };
  EXPECT_EQ(bad({{"kind", "fuzzy"}}), "expect.kind");
  EXPECT_EQ(bad({{"kind", "pattern"}, {"regex", "([a-"}}), "expect.regex");
  EXPECT_EQ(bad({{"kind", "property"}, {"predicate", "is_prime"}}), "expect.predicate");
  EXPECT_EQ(bad({{"kind", "property"}, {"predicate", "length_between"}, {"params", {{"min", 1}}}}),
            "expect.params.max");
  EXPECT_EQ(bad({{"kind", "numeric_tolerance"}, {"expected", 1}}), "expect");
  EXPECT_EQ(bad({{"kind", "numeric_tolerance"}, {"expected", 1}, {"abs_tol", -1}}), "expect.abs_tol");
  EXPECT_EQ(bad({{"kind", "exact"}}), "expect.value");
  EXPECT_EQ(bad(Json::array()), "expect");
}

TEST(ParseExpectation, RoundTrip) {
  for (const Json& doc : {Json{{"kind", "exact"}, {"value", "x"}},
                          Json{{"kind", "numeric_tolerance"}, {"expected", 2.5}, {"rel_tol", 0.1}},
                          Json{{"kind", "pattern"}, {"regex", "a+"}},
                          Json{{"kind", "property"}, {"predicate", "one_of"}, {"params", {{"values", {"a"}}}}},
                          Json{{"kind", "semantic"}, {"reference", "r"}, {"judge", "default"}}}) {
    auto e = expect(doc);
    EXPECT_EQ(to_json(e), doc);
    EXPECT_EQ(kind_name(e), doc["kind"].get<std::string>());
  }
}

TEST(TestCaseDoc, RoundTripAndViolations) {
  Json doc{{"id", "calc-1"},
           {"input", {{"expression", "1+1"}}},
           {"expect", {{"kind", "exact"}, {"value", "2"}}},
           {"origin", "community"},
           {"status", "accepted"},
           {"contributor", "ana"},
           {"created_at", "2026-01-01T00:00:00Z"}};
  auto c = parse_test_case(doc, "calculator");
  ASSERT_TRUE(c.ok());
  EXPECT_EQ(c->tool_name, "calculator");
  EXPECT_EQ(to_json(c.value()), doc);
  auto bad = parse_test_case(Json{{"id", ""}, {"input", 3}, {"origin", "x"}, {"status", "y"}}, "t");
  ASSERT_FALSE(bad.ok());
  EXPECT_EQ(bad.error().size(), 5u);  // id, input, expect, origin, status
}

// The brute-force oracles agree with check() on random instances of the three
// deterministic kinds.
TEST(Oracle, RandomizedAgreement) {
  std::mt19937 rng(20240501);
  for (int i = 0; i < 3000; ++i) {
    switch (i % 3) {
      case 0: {
        const std::string a = oracle::random_word(rng, 3);
        std::string out = rng() % 2 ? a : oracle::random_word(rng, 3);
        if (rng() % 3 == 0) out += rng() % 2 ? " " : "\n";
        if (rng() % 5 == 0) out = " " + out;
        ASSERT_EQ(passes({{"kind", "exact"}, {"value", a}}, out), oracle::exact(a, out)) << a << "|" << out;
        break;
      }
      case 1: {
        const double expected = std::round(std::uniform_real_distribution<>(-500, 500)(rng) * 100) / 100;
        std::optional<double> abs_tol, rel_tol;
        if (rng() % 2) abs_tol = std::uniform_real_distribution<>(0, 2)(rng);
        if (!abs_tol || rng() % 2) rel_tol = std::uniform_real_distribution<>(0, 0.05)(rng);
        const double out_value = expected + std::uniform_real_distribution<>(-3, 3)(rng);
        char buf[64];
        std::snprintf(buf, sizeof buf, rng() % 2 ? "%.3f" : "%g", out_value);
        std::string out = buf;
        if (rng() % 10 == 0) out = "x" + out;
        if (rng() % 10 == 0) out = "  " + out + " ";
        Json doc{{"kind", "numeric_tolerance"}, {"expected", expected}};
        if (abs_tol) doc["abs_tol"] = *abs_tol;
        if (rel_tol) doc["rel_tol"] = *rel_tol;
        ASSERT_EQ(passes(doc, out), oracle::numeric(expected, abs_tol, rel_tol, out)) << doc.dump() << " " << out;
        break;
      }
      default: {
        const std::string re = oracle::random_pattern(rng);
        const std::string out = oracle::random_word(rng, 6);
        ASSERT_EQ(passes({{"kind", "pattern"}, {"regex", re}}, out), oracle::pattern(re, out)) << re << " " << out;
      }
    }
  }
}

CheckResult with_verdict(Verdict v) {
  CheckResult r;
  r.verdict = v;
  return r;
}

TEST(Summary, SevenPassOneFailTwoErrors) {
  std::vector<CheckResult> rs;
  for (int i = 0; i < 7; ++i) rs.push_back(with_verdict(Verdict::pass));
  rs.push_back(with_verdict(Verdict::fail));
  for (int i = 0; i < 2; ++i) rs.push_back(with_verdict(Verdict::error));
  auto s = summarize(rs);
  EXPECT_EQ(s.total(), 10);
  ASSERT_TRUE(s.accuracy && s.availability);
  EXPECT_DOUBLE_EQ(*s.accuracy, 0.875);
  EXPECT_DOUBLE_EQ(*s.availability, 0.8);
  EXPECT_EQ(suite_summary_from_json(to_json(s)), s);
}

TEST(Summary, EmptyAndAllErrors) {
  auto empty = summarize({});
  EXPECT_FALSE(empty.accuracy);
  EXPECT_FALSE(empty.availability);
  std::vector<CheckResult> errs(3, with_verdict(Verdict::error));
  auto s = summarize(errs);
  EXPECT_FALSE(s.accuracy);
  EXPECT_DOUBLE_EQ(*s.availability, 0.0);
  EXPECT_TRUE(to_json(s)["accuracy"].is_null());
}

TestCase calc_case(std::string id, Json input, std::string expected) {
  TestCase c;
  c.id = std::move(id);
  c.tool_name = "calculator";
  c.input_args = std::move(input);
  c.expectation = ExactMatch{std::move(expected)};
  c.status = CaseStatus::accepted;
  return c;
}

// Random mixes of passing, failing and erroring calculator cases.
std::vector<TestCase> random_suite(std::mt19937& rng, int size, int& want_pass, int& want_fail, int& want_error) {
  std::vector<TestCase> suite;
  want_pass = want_fail = want_error = 0;
  for (int i = 0; i < size; ++i) {
    const int a = static_cast<int>(rng() % 100), b = static_cast<int>(rng() % 100);
    const std::string expr = std::to_string(a) + "+" + std::to_string(b);
    const std::string id = "c" + std::to_string(i);
    switch (rng() % 3) {
      case 0:
        suite.push_back(calc_case(id, {{"expression", expr}}, std::to_string(a + b)));
        ++want_pass;
        break;
      case 1:
        suite.push_back(calc_case(id, {{"expression", expr}}, std::to_string(a + b + 1)));
        ++want_fail;
        break;
      default:
        suite.push_back(calc_case(id, rng() % 2 ? Json{{"expr", expr}} : Json{{"expression", expr + "/0"}}, "0"));
        ++want_error;
    }
  }
  return suite;
}

TEST(Suite, RandomizedAccountingAndParallelismInvariance) {
  auto registry = testsupport::program_registry();
  std::mt19937 rng(7);
  for (int round = 0; round < 30; ++round) {
    int p = 0, f = 0, e = 0;
    const auto suite = random_suite(rng, static_cast<int>(rng() % 40), p, f, e);
    auto serial = run_suite(*registry, suite, 1);
    auto parallel = run_suite(*registry, suite, 8);
    const auto& s = serial.summary;
    EXPECT_EQ(s.n_pass + s.n_fail + s.n_error, static_cast<int>(suite.size()));
    EXPECT_EQ(s.n_pass, p);
    EXPECT_EQ(s.n_fail, f);
    EXPECT_EQ(s.n_error, e);
    if (p + f > 0) {
      EXPECT_DOUBLE_EQ(*s.accuracy, static_cast<double>(p) / (p + f));
    } else {
      EXPECT_FALSE(s.accuracy);
    }
    EXPECT_EQ(serial.summary, parallel.summary);
    ASSERT_EQ(serial.results.size(), parallel.results.size());
    for (std::size_t i = 0; i < suite.size(); ++i) {
      EXPECT_EQ(serial.results[i].case_id, suite[i].id);
      EXPECT_EQ(serial.results[i].verdict, parallel.results[i].verdict);
      EXPECT_EQ(serial.results[i].detail, parallel.results[i].detail);
    }
  }
}

TEST(Suite, UnknownToolIsAnErrorVerdict) {
  auto registry = testsupport::program_registry();
  TestCase c = calc_case("x", {{"expression", "1"}}, "1");
  c.tool_name = "ghost";
  auto r = run_case(*registry, c);
  EXPECT_EQ(r.verdict, Verdict::error);
  EXPECT_EQ(std::get<runtime::ToolError>(r.tool_outcome).error_class, runtime::ErrorClass::unavailable);
  EXPECT_THROW(run_suite(*registry, std::vector<TestCase>{c}, 0), std::invalid_argument);
}

TEST(Suite, CheckResultRoundTrip) {
  auto registry = testsupport::program_registry();
  for (const auto& c : {calc_case("ok", {{"expression", "2*3"}}, "6"), calc_case("bad", Json::object(), "0")}) {
    auto r = run_case(*registry, c);
    auto back = check_result_from_json(to_json(r));
    EXPECT_EQ(to_json(back), to_json(r));
  }
}

}  // namespace
