#include "toolhub/reliability.hpp"

#include <algorithm>

namespace toolhub::reliability {

namespace {

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

Json to_json(const EvaluationRound& r) {
  Json per_tool = Json::object();
  for (const auto& [tool, s] : r.per_tool) {
    Json entry = verification::to_json(s.summary);
    entry["suite_version"] = s.suite_version;
    per_tool[tool] = std::move(entry);
  }
  return Json{{"round_id", r.round_id},
              {"started_at", r.started_at},
              {"finished_at", r.finished_at},
              {"suite_version", r.suite_version},
              {"per_tool", per_tool}};
}

EvaluationRound round_from_json(const Json& j) {
  EvaluationRound r;
  r.round_id = j.at("round_id").get<std::int64_t>();
  r.started_at = j.value("started_at", "");
  r.finished_at = j.value("finished_at", "");
  r.suite_version = j.at("suite_version").get<std::string>();
  for (const auto& [tool, entry] : j.at("per_tool").items()) {
    r.per_tool[tool] = {verification::suite_summary_from_json(entry), entry.value("suite_version", "")};
  }
  return r;
}

Json to_json(const HistoryEntry& h) {
  return Json{{"round_id", h.round_id},
              {"accuracy", optional_number(h.accuracy)},
              {"availability", optional_number(h.availability)},
              {"n_cases", h.n_cases}};
}

Json to_json(const RegressionEvent& e) {
  return Json{{"from_round", e.from_round},
              {"to_round", e.to_round},
              {"accuracy_drop", e.accuracy_drop},
              {"threshold", e.threshold}};
}

Json to_json(const ReliabilityProfile& p) {
  Json history = Json::array();
  for (const auto& h : p.history) history.push_back(to_json(h));
  Json regressions = Json::array();
  for (const auto& e : p.regressions) regressions.push_back(to_json(e));
  return Json{{"tool_name", p.tool_name},
              {"current_accuracy", optional_number(p.current_accuracy)},
              {"current_availability", optional_number(p.current_availability)},
              {"history", history},
              {"regressions", regressions}};
}

std::vector<RegressionEvent> detect_regression(std::span<const HistoryEntry> history, double threshold) {
  std::vector<RegressionEvent> events;
  const HistoryEntry* prev = nullptr;
  for (const auto& h : history) {
    if (!h.accuracy) continue;
    if (prev) {
      const double drop = *prev->accuracy - *h.accuracy;
      if (drop > threshold) events.push_back({prev->round_id, h.round_id, drop, threshold});
    }
    prev = &h;
  }
  return events;
}

std::map<std::string, ReliabilityProfile> build_profiles(std::span<const EvaluationRound> rounds, double threshold) {
  std::map<std::string, ReliabilityProfile> profiles;
  for (const auto& round : rounds) {
    for (const auto& [tool, s] : round.per_tool) {
      if (s.summary.total() == 0) continue;
      auto& p = profiles[tool];
      p.tool_name = tool;
      p.history.push_back({round.round_id, s.summary.accuracy, s.summary.availability, s.summary.total()});
    }
  }
  for (auto& [_, p] : profiles) {
    std::sort(p.history.begin(), p.history.end(),
              [](const HistoryEntry& a, const HistoryEntry& b) { return a.round_id < b.round_id; });
    p.current_accuracy = p.history.back().accuracy;
    p.current_availability = p.history.back().availability;
    p.regressions = detect_regression(p.history, threshold);
  }
  return profiles;
}

std::string suite_version(std::span<const TestCase> cases) {
  std::vector<const TestCase*> accepted;
  for (const auto& c : cases) {
    if (c.status == verification::CaseStatus::accepted) accepted.push_back(&c);
  }
  std::sort(accepted.begin(), accepted.end(), [](const TestCase* a, const TestCase* b) {
    return std::tie(a->tool_name, a->id) < std::tie(b->tool_name, b->id);
  });
  Json doc = Json::array();
  for (const auto* c : accepted) doc.push_back({{"tool", c->tool_name}, {"case", verification::to_json(*c)}});
  return "sha256:" + sha256_hex(doc.dump());
}

Json generate_report(const std::vector<schema::ToolDescriptor>& tools,
                     const std::map<std::string, ReliabilityProfile>& profiles,
                     const std::optional<EvaluationRound>& latest) {
  Json entries = Json::array();
  std::vector<const schema::ToolDescriptor*> sorted;
  for (const auto& d : tools) sorted.push_back(&d);
  std::sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) { return a->name < b->name; });

  for (const auto* d : sorted) {
    Json e{{"name", d->name}, {"category", schema::to_string(d->category)}};
    const auto pit = profiles.find(d->name);
    const ReliabilityProfile* p = pit == profiles.end() ? nullptr : &pit->second;
    const bool evaluated = p && p->current_accuracy.has_value();
    e["status"] = evaluated ? "evaluated" : "unevaluated";
    if (evaluated) e["accuracy"] = *p->current_accuracy;
    if (p && p->current_availability) e["availability"] = *p->current_availability;

    e["suite_size"] = 0;
    if (latest) {
      if (auto rit = latest->per_tool.find(d->name); rit != latest->per_tool.end()) {
        const auto& s = rit->second.summary;
        e["suite_size"] = s.total();
        e["suite_version"] = rit->second.suite_version;
        e["n_pass"] = s.n_pass;
        e["n_fail"] = s.n_fail;
        e["n_error"] = s.n_error;
      }
    }

    Json history = Json::array();
    Json regressions = Json::array();
    if (p && !p->history.empty()) {
      for (const auto& h : p->history) history.push_back(to_json(h));
      // A regression stays open until a later round has been recorded for the tool.
      const auto last_round = p->history.back().round_id;
      for (const auto& r : p->regressions) {
        Json rj = to_json(r);
        rj["open"] = r.to_round == last_round;
        regressions.push_back(std::move(rj));
      }
    }
    e["history"] = std::move(history);
    e["regressions"] = std::move(regressions);
    entries.push_back(std::move(e));
  }

  Json report{{"tools", entries}};
  report["round_id"] = latest ? Json(latest->round_id) : Json(nullptr);
  report["suite_version"] = latest ? Json(latest->suite_version) : Json(nullptr);
  return report;
}

void refresh_accuracy_summaries(runtime::ToolRegistry& registry,
                                const std::map<std::string, ReliabilityProfile>& profiles,
                                const std::string& evaluated_at) {
  for (const auto& name : registry.names()) {
    auto it = profiles.find(name);
    if (it == profiles.end() || !it->second.current_accuracy) {
      registry.set_accuracy_summary(name, std::nullopt);
      continue;
    }
    const auto& p = it->second;
    registry.set_accuracy_summary(name, schema::AccuracySummary{*p.current_accuracy, p.history.back().n_cases,
                                                                evaluated_at});
  }
}

RoundOutcome run_round(runtime::ToolRegistry& registry, RoundStore& store, const RoundOptions& options) {
  std::lock_guard lock(store.round_mutex());
  const auto all_cases = store.load_all_cases();

  std::map<std::string, std::vector<TestCase>> accepted;
  std::vector<TestCase> flat;
  for (const auto& [tool, cases] : all_cases) {
    for (const auto& c : cases) {
      if (c.status != verification::CaseStatus::accepted) continue;
      accepted[tool].push_back(c);
      flat.push_back(c);
    }
  }
  if (flat.empty()) throw NoAcceptedCasesError();

  auto previous = store.load_rounds();
  RoundOutcome out;
  out.round.round_id = previous.empty() ? 1 : previous.back().round_id + 1;
  out.round.started_at = now_iso8601();
  out.round.suite_version = suite_version(flat);
  for (const auto& [tool, cases] : accepted) {
    auto run = verification::run_suite(registry, cases, options.parallelism, options.check_context, options.budget);
    out.round.per_tool[tool] = {run.summary, suite_version(cases)};
    out.checks[tool] = std::move(run.results);
  }
  out.round.finished_at = now_iso8601();

  previous.push_back(out.round);
  out.profiles = build_profiles(previous, options.threshold);
  store.commit_round(out.round, out.checks, out.profiles);
  refresh_accuracy_summaries(registry, out.profiles, out.round.finished_at);
  return out;
}

}  // namespace toolhub::reliability
