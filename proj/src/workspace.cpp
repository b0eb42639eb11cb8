#include "toolhub/workspace.hpp"

#include <cstdio>
#include <cstdlib>

#ifndef TOOLHUB_DEFAULT_SEED_DIR
#define TOOLHUB_DEFAULT_SEED_DIR "seed"
#endif

namespace toolhub::workspace {

fs::path default_seed_dir() {
  const char* env = std::getenv("TOOLHUB_SEED_DIR");
  return env && *env ? fs::path(env) : fs::path(TOOLHUB_DEFAULT_SEED_DIR);
}

Json to_json(const AgentRunOutcome& o) {
  return {{"run_id", o.run.run_id},
          {"answer", o.run.answer},
          {"status", agents::to_string(o.run.status)},
          {"trace_url", o.trace_url},
          {"invocations", o.run.invocations}};
}

Workspace::Workspace(WorkspaceOptions options) {
  if (!store::FileStore::is_initialized(options.state_dir)) {
    if (!options.auto_init) throw StoreError("state directory is not initialized: " + options.state_dir.string());
    store::FileStore::initialize(options.state_dir, options.seed_dir);
  }
  store_ = std::make_unique<store::FileStore>(options.state_dir);
  registry_ = std::make_unique<runtime::ToolRegistry>();

  // An explicit TOOLHUB_STUB_URL wins; the registry reads it from the process environment.
  const char* external_stub = std::getenv("TOOLHUB_STUB_URL");
  if (auto routes_doc = store_->load_stub_routes(); routes_doc && !(external_stub && *external_stub)) {
    auto routes = stub::parse_routes(*routes_doc);
    if (!routes) throw StoreError("stub/routes.json: " + routes.error().front().reason);
    stub_ = std::make_unique<stub::StubServer>(std::move(routes.value()));
    stub_->start();
    registry_->set_env({{"TOOLHUB_STUB_URL", stub_->base_url()}});
  }
  configure_backends();

  for (auto& t : store_->load_tools()) {
    auto r = registry_->register_tool(std::move(t.descriptor), std::move(t.binding));
    if (!r) throw StoreError("cannot register stored tool: " + r.error().message);
  }
  const auto rounds = store_->load_rounds();
  if (!rounds.empty()) {
    reliability::refresh_accuracy_summaries(*registry_, reliability::build_profiles(rounds), rounds.back().finished_at);
  }
  hub_ = std::make_unique<community::CommunityHub>(*store_, *registry_);
  next_run_ = store_->next_run_number();
}

Workspace::~Workspace() {
  if (stub_) stub_->stop();
}

void Workspace::configure_backends() {
  const Json doc = store_->load_backends();
  auto& backends = *registry_->backends();
  for (const auto& [id, spec] : doc.items()) {
    const std::string kind = spec.value("kind", "");
    if (kind == "scripted") {
      const fs::path script = store_->root() / spec.value("script", "");
      backends.add(id, llm::ScriptedBackend::from_json(Json::parse(read_file(script))));
    } else if (kind == "openai") {
      // Skipped silently when LLM_BASE_URL is unset: hermetic runs never need it.
      if (auto cfg = llm::OpenAIBackend::config_from_env()) backends.add(id, std::make_shared<llm::OpenAIBackend>(*cfg));
    } else {
      throw StoreError("backends.json: backend '" + id + "' has unknown kind '" + kind + "'");
    }
  }
  if (auto cfg = llm::OpenAIBackend::config_from_env(); cfg && !backends.find("openai")) {
    backends.add("openai", std::make_shared<llm::OpenAIBackend>(*cfg));
  }
}

std::optional<std::string> Workspace::stub_url() const {
  if (!stub_) return std::nullopt;
  return stub_->base_url();
}

verification::CheckContext Workspace::check_context() const {
  verification::CheckContext ctx;
  ctx.judges = registry_->backends().get();
  ctx.judge_template = agents::TemplateSet::defaults().get("semantic_judge");
  return ctx;
}

reliability::RoundOutcome Workspace::run_round(int parallelism) {
  reliability::RoundOptions opts;
  opts.parallelism = parallelism;
  opts.check_context = check_context();
  return reliability::run_round(*registry_, *store_, opts);
}

std::map<std::string, reliability::ReliabilityProfile> Workspace::profiles() const {
  return reliability::build_profiles(store_->load_rounds());
}

Json Workspace::report() const {
  const auto rounds = store_->load_rounds();
  std::optional<reliability::EvaluationRound> latest;
  if (!rounds.empty()) latest = rounds.back();
  return reliability::generate_report(registry_->descriptors(), reliability::build_profiles(rounds), latest);
}

std::optional<Json> Workspace::tool_report(const std::string& name) const {
  if (!registry_->contains(name)) return std::nullopt;
  const Json doc = report();
  for (const auto& entry : doc.at("tools")) {
    if (entry["name"] == name) return std::optional<Json>(entry);
  }
  return std::nullopt;
}

Expected<AgentRunOutcome, std::vector<Violation>> Workspace::run_agent(const AgentRunSpec& spec) {
  using R = Expected<AgentRunOutcome, std::vector<Violation>>;
  std::vector<Violation> vs;
  if (trim(spec.query).empty()) vs.push_back({"query", "must be non-empty"});
  auto policy = agents::parse_policy_config(spec.policy_config);
  if (!policy) {
    for (auto v : policy.error()) {
      v.field = "policy_config." + v.field;
      vs.push_back(std::move(v));
    }
  }
  for (const auto& name : spec.tool_names) {
    if (!registry_->contains(name)) vs.push_back({"tool_names", "unknown tool '" + name + "'"});
  }
  std::optional<agents::SelectionRequest> selection;
  if (spec.select_k) {
    agents::SelectionRequest sel;
    sel.k = *spec.select_k;
    auto mode = agents::parse_selection_mode(spec.select_mode);
    if (!mode) vs.push_back({"selection.mode", "must be lexical or llm_ranked"});
    sel.mode = mode.value_or(agents::SelectionMode::lexical);
    const std::size_t pool = spec.tool_names.empty() ? registry_->size() : spec.tool_names.size();
    if (sel.k < 1 || sel.k > pool) {
      vs.push_back({"selection.k", "must be between 1 and " + std::to_string(pool)});
    }
    selection = sel;
  }
  if (spec.mock_script) {
    try {
      (void)llm::ScriptedBackend::parse_script(*spec.mock_script);
    } catch (const std::exception& e) {
      vs.push_back({"mock_script", e.what()});
    }
  }
  if (!vs.empty()) return R::failure(std::move(vs));

  char buf[32];
  const auto n = next_run_.fetch_add(1);
  std::snprintf(buf, sizeof buf, "run-%06lld", static_cast<long long>(n));
  agents::RunRequest req;
  req.run_id = buf;
  std::snprintf(buf, sizeof buf, "trace-%06lld", static_cast<long long>(n));
  req.trace_id = buf;
  req.query = spec.query;
  req.toolbox = spec.tool_names.empty() ? registry_->names() : spec.tool_names;
  req.policy = policy.value();

  const std::string mock_id = "mock:" + req.run_id;
  if (spec.mock_script) {
    registry_->backends()->add(mock_id, llm::ScriptedBackend::from_json(*spec.mock_script));
    req.policy.backend_id = mock_id;
  }
  if (selection) {
    selection->backend_id = req.policy.backend_id;
    req.selection = selection;
  }

  auto result = agents::run_agent(*registry_, req);
  if (spec.mock_script) registry_->backends()->remove(mock_id);

  AgentRunOutcome out{result.run, "/v1/traces/" + req.trace_id};
  store_->save_trace(result.trace);
  Json doc = agents::to_json(result.run);
  doc["trace_url"] = out.trace_url;
  store_->save_run(req.run_id, doc);
  return out;
}

}  // namespace toolhub::workspace
