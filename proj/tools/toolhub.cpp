// Command-line front end. Exit codes: 0 ok, 1 usage, 2 validation failure,
// 3 runtime or tool failure, 4 state corruption.

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include "toolhub/service.hpp"
#include "toolhub/workspace.hpp"

namespace {

using namespace toolhub;

enum Exit { kOk = 0, kUsage = 1, kValidation = 2, kRuntime = 3, kCorrupt = 4 };

struct Globals {
  std::string state_dir;
  std::string format = "human";
  bool json() const { return format == "json"; }
};

// Exit path for a failed command: one JSON document in json mode, a message
// on stderr otherwise.
int fail(const Globals& g, int code, const std::string& message, const std::vector<Violation>& vs = {}) {
  if (g.json()) {
    Json doc{{"ok", false}, {"exit_code", code}, {"message", message}};
    if (!vs.empty()) doc["violations"] = to_json(vs);
    std::cout << doc.dump() << "\n";
  } else {
    std::cerr << "error: " << message << "\n";
    for (const auto& v : vs) std::cerr << "  " << (v.field.empty() ? "" : v.field + ": ") << v.reason << "\n";
  }
  return code;
}

void emit(const Globals& g, const Json& doc, const std::string& human) {
  if (g.json()) {
    std::cout << doc.dump() << "\n";
  } else {
    std::cout << human;
  }
}

std::string fmt_rate(const Json& v) {
  if (!v.is_number()) return "-";
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.3f", v.get<double>());
  return buf;
}

std::string pad(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);) {
    if (!trim(item).empty()) out.push_back(trim(item));
  }
  return out;
}

Json read_json_file(const std::string& path) {
  Json doc = Json::parse(read_file(path), nullptr, false);
  if (doc.is_discarded()) throw std::invalid_argument(path + ": not valid JSON");
  return doc;
}

std::unique_ptr<workspace::Workspace> open(const Globals& g) {
  workspace::WorkspaceOptions opts;
  opts.state_dir = g.state_dir;
  return std::make_unique<workspace::Workspace>(opts);
}

std::string report_table(const Json& report) {
  std::ostringstream os;
  os << pad("TOOL", 20) << pad("CATEGORY", 11) << pad("STATUS", 13) << pad("ACCURACY", 10) << pad("AVAIL", 8)
     << pad("CASES", 7) << "REGRESSIONS\n";
  for (const auto& t : report["tools"]) {
    int open_regressions = 0;
    for (const auto& r : t["regressions"]) open_regressions += r.value("open", false) ? 1 : 0;
    os << pad(t["name"].get<std::string>(), 20) << pad(t["category"].get<std::string>(), 11)
       << pad(t["status"].get<std::string>(), 13) << pad(fmt_rate(t.value("accuracy", Json())), 10)
       << pad(fmt_rate(t.value("availability", Json())), 8) << pad(std::to_string(t["suite_size"].get<int>()), 7)
       << t["regressions"].size() << (open_regressions ? " (" + std::to_string(open_regressions) + " open)" : "")
       << "\n";
  }
  if (report["round_id"].is_null()) {
    os << "no evaluation rounds yet\n";
  } else {
    os << "round " << report["round_id"].get<long long>() << ", suite " << report["suite_version"].get<std::string>()
       << "\n";
  }
  return os.str();
}

service::Service* g_service = nullptr;

extern "C" void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tool registry, reliability evaluation and agent runner"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  if (const char* env = std::getenv("OPENTOOLS_STATE_DIR"); env && *env) {
    g.state_dir = env;
  } else {
    g.state_dir = ".toolhub";
  }
  app.add_option("--state", g.state_dir, "State directory (env OPENTOOLS_STATE_DIR)");
  app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"human", "json"}));

  int code = kOk;

  // init
  bool force = false;
  auto* init = app.add_subcommand("init", "Create the state layout from the seed");
  init->add_flag("--force", force, "Overwrite seed files that already exist");
  init->callback([&] {
    store::FileStore::initialize(g.state_dir, workspace::default_seed_dir(), force);
    emit(g, {{"ok", true}, {"state_dir", g.state_dir}}, "initialized " + g.state_dir + "\n");
  });

  // tools
  auto* tools = app.add_subcommand("tools", "Inspect and validate tools");
  tools->require_subcommand(1);
  auto* tools_list = tools->add_subcommand("list", "List registered tools");
  tools_list->callback([&] {
    auto ws = open(g);
    Json cards = Json::array();
    std::ostringstream os;
    for (const auto& d : ws->registry().descriptors()) {
      Json card = to_json(d);
      card["accuracy_summary"] = d.accuracy_summary ? to_json(*d.accuracy_summary) : Json(nullptr);
      cards.push_back(card);
      os << pad(d.name, 20) << pad(std::string(schema::to_string(d.category)), 11)
         << pad(d.accuracy_summary ? fmt_rate(d.accuracy_summary->accuracy) : "unevaluated", 13) << d.description
         << "\n";
    }
    emit(g, cards, os.str());
  });
  std::string manifest_path;
  auto* tools_validate = tools->add_subcommand("validate", "Validate a tool manifest file");
  tools_validate->add_option("manifest", manifest_path, "Manifest file")->required();
  tools_validate->callback([&] {
    std::string raw;
    try {
      raw = read_file(manifest_path);
    } catch (const StoreError& e) {
      code = fail(g, kUsage, e.what());
      return;
    }
    auto d = schema::validate_manifest(std::string_view(raw));
    if (!d) {
      code = fail(g, kValidation, manifest_path + " is not a valid manifest", d.error());
      return;
    }
    emit(g, {{"ok", true}, {"descriptor", to_json(*d)}}, d->name + " " + d->version + ": valid\n");
  });

  // tests submit
  auto* tests = app.add_subcommand("tests", "Contribute test cases");
  tests->require_subcommand(1);
  std::string tests_file;
  std::string submitter = "cli";
  auto* tests_submit = tests->add_subcommand("submit", "Submit test cases from a JSON file (object or array)");
  tests_submit->add_option("file", tests_file, "Test case file")->required();
  tests_submit->add_option("--submitter", submitter, "Contributor name");
  tests_submit->callback([&] {
    Json doc;
    try {
      doc = read_json_file(tests_file);
    } catch (const std::exception& e) {
      code = fail(g, kUsage, e.what());
      return;
    }
    auto ws = open(g);
    Json out = Json::array();
    std::ostringstream os;
    std::vector<Violation> all;
    const Json items = doc.is_array() ? doc : Json::array({doc});
    for (std::size_t i = 0; i < items.size(); ++i) {
      auto sub = ws->hub().submit(community::SubmissionKind::test_case, items[i], submitter);
      if (!sub) {
        for (auto v : sub.error()) {
          v.field = "[" + std::to_string(i) + "]." + v.field;
          all.push_back(std::move(v));
        }
        continue;
      }
      out.push_back(community::to_json(*sub));
      os << sub->id << " pending\n";
    }
    if (!all.empty()) {
      code = fail(g, kValidation, std::to_string(out.size()) + " of " + std::to_string(items.size()) +
                                      " test cases submitted; the rest were rejected",
                  all);
      return;
    }
    emit(g, out, os.str());
  });

  // submissions list
  auto* subs = app.add_subcommand("submissions", "List submissions");
  std::string sub_status;
  subs->add_option("--status", sub_status, "pending, accepted or rejected");
  subs->callback([&] {
    std::optional<verification::CaseStatus> status;
    if (!sub_status.empty()) {
      status = verification::parse_case_status(sub_status);
      if (!status) {
        code = fail(g, kUsage, "--status must be pending, accepted or rejected");
        return;
      }
    }
    auto ws = open(g);
    Json out = Json::array();
    std::ostringstream os;
    for (const auto& s : ws->hub().submissions(status)) {
      out.push_back(community::to_json(s));
      os << pad(s.id, 12) << pad(std::string(community::to_string(s.kind)), 15)
         << pad(std::string(verification::to_string(s.status)), 10) << s.submitter << "\n";
    }
    emit(g, out, os.str());
  });

  // review
  auto* review = app.add_subcommand("review", "Accept or reject a submission");
  std::string review_id;
  bool accept = false;
  bool reject = false;
  std::string reviewer;
  std::string reason;
  review->add_option("id", review_id, "Submission id")->required();
  auto* accept_flag = review->add_flag("--accept", accept, "Accept the submission");
  auto* reject_flag = review->add_flag("--reject", reject, "Reject the submission");
  accept_flag->excludes(reject_flag);
  review->add_option("--reviewer", reviewer, "Reviewer name")->required();
  review->add_option("--reason", reason, "Reason recorded in the audit log");
  review->callback([&] {
    if (!accept && !reject) {
      code = fail(g, kUsage, "one of --accept or --reject is required");
      return;
    }
    auto ws = open(g);
    auto out = ws->hub().review(review_id, accept ? community::Decision::accept : community::Decision::reject,
                                reviewer, reason);
    if (!out) {
      const int c = out.error().kind == community::ReviewError::Kind::invalid ? kValidation : kRuntime;
      code = fail(g, c, out.error().message, out.error().violations);
      return;
    }
    emit(g, community::to_json(*out),
         out->id + " " + std::string(verification::to_string(out->status)) + " by " + reviewer + "\n");
  });

  // eval run
  auto* eval = app.add_subcommand("eval", "Evaluation rounds");
  eval->require_subcommand(1);
  int parallelism = 4;
  auto* eval_run = eval->add_subcommand("run", "Run every accepted suite as one round");
  eval_run->add_option("--parallelism", parallelism, "Concurrent cases per tool")->check(CLI::PositiveNumber);
  eval_run->callback([&] {
    auto ws = open(g);
    try {
      auto outcome = ws->run_round(parallelism);
      std::ostringstream os;
      os << "round " << outcome.round.round_id << " committed (" << outcome.round.per_tool.size() << " tools)\n";
      for (const auto& [tool, s] : outcome.round.per_tool) {
        os << "  " << pad(tool, 20) << s.summary.n_pass << " pass, " << s.summary.n_fail << " fail, "
           << s.summary.n_error << " error\n";
      }
      emit(g, reliability::to_json(outcome.round), os.str());
    } catch (const reliability::NoAcceptedCasesError& e) {
      code = fail(g, kRuntime, e.what());
    }
  });

  // report
  auto* report = app.add_subcommand("report", "Reliability report");
  std::string report_tool;
  report->add_option("--tool", report_tool, "Single tool");
  report->callback([&] {
    auto ws = open(g);
    Json doc = ws->report();
    if (!report_tool.empty()) {
      auto entry = ws->tool_report(report_tool);
      if (!entry) {
        code = fail(g, kValidation, "unknown tool '" + report_tool + "'");
        return;
      }
      doc["tools"] = Json::array({*entry});
    }
    emit(g, doc, report_table(doc));
  });

  // agent run
  auto* agent = app.add_subcommand("agent", "Agent runs");
  agent->require_subcommand(1);
  auto* agent_run = agent->add_subcommand("run", "Run one query through a policy");
  std::string policy = "react";
  std::string query;
  std::string tool_list;
  std::string select;
  std::string mock_script;
  std::string backend_id;
  int max_steps = 0;
  agent_run->add_option("--policy", policy, "Policy kind");
  agent_run->add_option("--query", query, "Query text")->required();
  agent_run->add_option("--tools", tool_list, "Comma-separated toolbox");
  agent_run->add_option("--select", select, "Tool selection, e.g. k=3,mode=lexical");
  agent_run->add_option("--mock-script", mock_script, "Scripted backend replies (JSON file)");
  agent_run->add_option("--backend", backend_id, "Backend id");
  agent_run->add_option("--max-steps", max_steps, "Step budget")->check(CLI::PositiveNumber);
  agent_run->callback([&] {
    workspace::AgentRunSpec spec;
    spec.query = query;
    spec.policy_config = {{"kind", policy}};
    if (max_steps > 0) spec.policy_config["max_steps"] = max_steps;
    if (!backend_id.empty()) spec.policy_config["backend_id"] = backend_id;
    spec.tool_names = split(tool_list, ',');
    if (!select.empty()) {
      for (const auto& part : split(select, ',')) {
        const auto eq = part.find('=');
        const std::string key = part.substr(0, eq);
        const std::string value = eq == std::string::npos ? "" : part.substr(eq + 1);
        if (key == "k") {
          auto k = parse_number(value);
          if (!k || *k < 1 || *k != static_cast<double>(static_cast<long long>(*k))) {
            code = fail(g, kUsage, "--select k must be a positive integer");
            return;
          }
          spec.select_k = static_cast<std::size_t>(*k);
        } else if (key == "mode") {
          spec.select_mode = value;
        } else {
          code = fail(g, kUsage, "--select accepts k=K,mode=M");
          return;
        }
      }
      if (!spec.select_k) {
        code = fail(g, kUsage, "--select needs k=K");
        return;
      }
    }
    if (!mock_script.empty()) {
      try {
        spec.mock_script = read_json_file(mock_script);
      } catch (const std::exception& e) {
        code = fail(g, kUsage, e.what());
        return;
      }
    }
    auto ws = open(g);
    auto out = ws->run_agent(spec);
    if (!out) {
      code = fail(g, kValidation, "invalid agent run request", out.error());
      return;
    }
    Json doc = workspace::to_json(*out);
    if (out->run.backend_failure) doc["backend_failure"] = *out->run.backend_failure;
    if (g.json()) {
      std::cout << doc.dump() << "\n";
    } else {
      std::cout << out->run.answer << "\n";
      std::cerr << out->run.run_id << ": " << agents::to_string(out->run.status) << ", " << out->run.invocations
                << " invocation(s), trace " << out->trace_url << "\n";
    }
    if (out->run.status != agents::RunStatus::completed) code = kRuntime;
  });

  // serve
  auto* serve = app.add_subcommand("serve", "Serve the REST API");
  int port = 8080;
  std::string host = "127.0.0.1";
  serve->add_option("--port", port, "Port")->check(CLI::Range(1, 65535));
  serve->add_option("--host", host, "Bind address");
  serve->callback([&] {
    auto ws = open(g);
    service::ServiceConfig cfg;
    if (const char* tok = std::getenv("OPENTOOLS_AUTH_TOKEN"); tok && *tok) cfg.auth_token = tok;
    service::Service svc(*ws, cfg);
    g_service = &svc;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "serving " << g.state_dir << " on http://" << host << ":" << port << "\n";
    try {
      svc.run(host, port);
    } catch (const std::exception& e) {
      g_service = nullptr;
      code = fail(g, kRuntime, e.what());
      return;
    }
    g_service = nullptr;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  } catch (const trace::TraceFormatError& e) {
    return fail(g, kCorrupt, e.what());
  } catch (const StoreError& e) {
    return fail(g, kCorrupt, e.what());
  } catch (const std::exception& e) {
    return fail(g, kRuntime, e.what());
  }
  return code;
}
