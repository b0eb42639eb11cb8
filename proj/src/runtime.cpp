#include "toolhub/runtime.hpp"

#include <httplib.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <random>
#include <thread>

#include "http_util.hpp"

namespace toolhub::runtime {

using schema::Category;
using schema::OutputKind;

// --- Bindings ----------------------------------------------------------------

schema::Category category_of(const ToolBinding& binding) {
  switch (binding.index()) {
    case 0:
      return Category::program;
    case 1:
      return Category::api;
    default:
      return Category::prompting;
  }
}

Json to_json(const ToolBinding& binding) {
  if (const auto* p = std::get_if<ProgramBinding>(&binding)) {
    return Json{{"kind", "program"}, {"function", p->function}};
  }
  if (const auto* a = std::get_if<ApiBinding>(&binding)) {
    return Json{{"kind", "api"},           {"url", a->url},
                {"method", a->method},     {"headers", a->headers},
                {"timeout_ms", a->timeout_ms}, {"max_retries", a->max_retries}};
  }
  const auto& p = std::get<PromptBinding>(binding);
  return Json{{"kind", "prompting"},
              {"template", p.prompt_template},
              {"backend", p.backend_id},
              {"temperature", p.decoding.temperature},
              {"max_tokens", p.decoding.max_tokens}};
}

Expected<ToolBinding, std::vector<Violation>> parse_binding(const Json& doc) {
  using R = Expected<ToolBinding, std::vector<Violation>>;
  if (!doc.is_object()) return R::failure({{"", "binding must be an object"}});
  const std::string kind = doc.value("kind", "");
  std::vector<Violation> vs;
  auto str = [&](const char* key, std::string& out, bool required) {
    auto it = doc.find(key);
    if (it == doc.end()) {
      if (required) vs.push_back({key, "missing required field"});
      return;
    }
    if (!it->is_string()) {
      vs.push_back({key, "must be a string"});
      return;
    }
    out = it->get<std::string>();
  };
  auto integer = [&](const char* key, int& out, int min) {
    auto it = doc.find(key);
    if (it == doc.end()) return;
    if (!it->is_number_integer() || it->get<long long>() < min) {
      vs.push_back({key, "must be an integer >= " + std::to_string(min)});
      return;
    }
    out = it->get<int>();
  };
  if (kind == "program") {
    ProgramBinding b;
    str("function", b.function, true);
    if (vs.empty()) return ToolBinding{b};
  } else if (kind == "api") {
    ApiBinding b;
    str("url", b.url, true);
    str("method", b.method, false);
    if (b.method != "GET" && b.method != "POST") vs.push_back({"method", "must be GET or POST"});
    if (auto it = doc.find("headers"); it != doc.end()) {
      if (!it->is_object()) {
        vs.push_back({"headers", "must be an object of strings"});
      } else {
        for (const auto& [k, v] : it->items()) {
          if (!v.is_string()) {
            vs.push_back({"headers." + k, "must be a string"});
          } else {
            b.headers[k] = v.get<std::string>();
          }
        }
      }
    }
    integer("timeout_ms", b.timeout_ms, 1);
    integer("max_retries", b.max_retries, 0);
    if (vs.empty()) return ToolBinding{b};
  } else if (kind == "prompting") {
    PromptBinding b;
    str("template", b.prompt_template, true);
    str("backend", b.backend_id, false);
    if (auto it = doc.find("temperature"); it != doc.end()) {
      if (!it->is_number()) {
        vs.push_back({"temperature", "must be a number"});
      } else {
        b.decoding.temperature = it->get<double>();
      }
    }
    integer("max_tokens", b.decoding.max_tokens, 1);
    if (vs.empty()) return ToolBinding{b};
  } else {
    vs.push_back({"kind", "binding kind must be program, api or prompting"});
  }
  return R::failure(std::move(vs));
}

// --- Outcomes ----------------------------------------------------------------

namespace {
constexpr std::array<std::pair<ErrorClass, std::string_view>, 6> kErrorClasses{{
    {ErrorClass::validation, "validation"},
    {ErrorClass::execution, "execution"},
    {ErrorClass::timeout, "timeout"},
    {ErrorClass::rate_limited, "rate_limited"},
    {ErrorClass::unavailable, "unavailable"},
    {ErrorClass::contract_violation, "contract_violation"},
}};
}  // namespace

std::string_view to_string(ErrorClass c) {
  for (const auto& [e, s] : kErrorClasses) {
    if (e == c) return s;
  }
  return "execution";
}

std::optional<ErrorClass> parse_error_class(std::string_view s) {
  for (const auto& [e, name] : kErrorClasses) {
    if (name == s) return e;
  }
  return std::nullopt;
}

bool is_retryable(ErrorClass c) {
  return c == ErrorClass::timeout || c == ErrorClass::rate_limited || c == ErrorClass::unavailable;
}

std::string output_text(const Json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number()) return format_number(value.get<double>());
  if (value.is_boolean()) return value.get<bool>() ? "true" : "false";
  if (value.is_null()) return "";
  return value.dump();
}

std::string Observation::text() const { return output_text(output_value); }

Json to_json(const Observation& o) {
  return Json{{"tool_name", o.tool_name},
              {"arguments", o.arguments},
              {"output_kind", schema::to_string(o.output_kind)},
              {"output_value", o.output_value},
              {"latency_ms", o.latency_ms},
              {"attempt_count", o.attempt_count}};
}

Json to_json(const ToolError& e) {
  Json j{{"class", to_string(e.error_class)},
         {"message", e.message},
         {"tool_name", e.tool_name},
         {"attempt_count", e.attempt_count}};
  if (!e.violations.empty()) j["violations"] = toolhub::to_json(e.violations);
  return j;
}

Json to_json(const Outcome& o) {
  if (const auto* obs = std::get_if<Observation>(&o)) return Json{{"observation", to_json(*obs)}};
  return Json{{"error", to_json(std::get<ToolError>(o))}};
}

Observation observation_from_json(const Json& j) {
  Observation o;
  o.tool_name = j.at("tool_name").get<std::string>();
  o.arguments = j.at("arguments");
  o.output_kind = schema::parse_output_kind(j.at("output_kind").get<std::string>()).value_or(OutputKind::text);
  o.output_value = j.at("output_value");
  o.latency_ms = j.value("latency_ms", 0.0);
  o.attempt_count = j.value("attempt_count", 0);
  return o;
}

ToolError tool_error_from_json(const Json& j) {
  ToolError e;
  e.error_class = parse_error_class(j.at("class").get<std::string>()).value_or(ErrorClass::execution);
  e.message = j.value("message", "");
  e.tool_name = j.value("tool_name", "");
  e.attempt_count = j.value("attempt_count", 0);
  if (auto it = j.find("violations"); it != j.end()) {
    for (const auto& v : *it) e.violations.push_back({v.value("field", ""), v.value("reason", "")});
  }
  return e;
}

Expected<Json, std::string> check_output_contract(const schema::ToolDescriptor& descriptor, const Json& raw) {
  using R = Expected<Json, std::string>;
  switch (descriptor.output.kind) {
    case OutputKind::text:
      return Json(output_text(raw));
    case OutputKind::number:
      if (raw.is_number()) return raw;
      if (raw.is_string()) {
        if (auto x = parse_number(raw.get<std::string>())) return Json(*x);
        return R::failure("expected a number, got text '" + raw.get<std::string>().substr(0, 60) + "'");
      }
      return R::failure("expected a number, got " + std::string(raw.type_name()));
    case OutputKind::json_object: {
      if (raw.is_object()) return raw;
      if (raw.is_string()) {
        Json parsed = Json::parse(raw.get<std::string>(), nullptr, false);
        if (!parsed.is_discarded() && parsed.is_object()) return parsed;
      }
      return R::failure("expected a JSON object");
    }
    case OutputKind::file_reference:
      if (raw.is_string() && !raw.get<std::string>().empty()) return raw;
      return R::failure("expected a non-empty file reference string");
  }
  return R::failure("unknown output kind");
}

// --- Program catalog ---------------------------------------------------------

void ProgramCatalog::add(std::string name, ProgramFunction fn) { functions_[std::move(name)] = std::move(fn); }

const ProgramFunction* ProgramCatalog::find(const std::string& name) const {
  auto it = functions_.find(name);
  return it == functions_.end() ? nullptr : &it->second;
}

// --- Registry ----------------------------------------------------------------

ToolRegistry::ToolRegistry(ProgramCatalog programs, std::shared_ptr<llm::BackendRegistry> backends)
    : programs_(std::move(programs)), backends_(std::move(backends)) {}

Expected<std::monostate, RegistryError> ToolRegistry::register_tool(schema::ToolDescriptor descriptor,
                                                                    ToolBinding binding) {
  using R = Expected<std::monostate, RegistryError>;
  if (category_of(binding) != descriptor.category) {
    return R::failure({RegistryError::Kind::binding_mismatch,
                       "binding kind does not match category '" + std::string(schema::to_string(descriptor.category)) +
                           "'"});
  }
  if (const auto* p = std::get_if<ProgramBinding>(&binding); p && !programs_.find(p->function)) {
    return R::failure({RegistryError::Kind::unknown_program, "no built-in program named '" + p->function + "'"});
  }
  std::unique_lock lock(mu_);
  if (entries_.contains(descriptor.name)) {
    return R::failure({RegistryError::Kind::duplicate_name, "tool '" + descriptor.name + "' is already registered"});
  }
  std::string name = descriptor.name;
  entries_.emplace(std::move(name), Entry{std::move(descriptor), std::move(binding)});
  return std::monostate{};
}

bool ToolRegistry::contains(const std::string& name) const {
  std::shared_lock lock(mu_);
  return entries_.contains(name);
}

std::size_t ToolRegistry::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

std::optional<schema::ToolDescriptor> ToolRegistry::descriptor(const std::string& name) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(name);
  if (it == entries_.end()) return std::nullopt;
  return it->second.descriptor;
}

std::optional<ToolBinding> ToolRegistry::binding(const std::string& name) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(name);
  if (it == entries_.end()) return std::nullopt;
  return it->second.binding;
}

std::vector<schema::ToolDescriptor> ToolRegistry::descriptors() const {
  std::shared_lock lock(mu_);
  std::vector<schema::ToolDescriptor> out;
  for (const auto& [_, e] : entries_) out.push_back(e.descriptor);
  return out;
}

std::vector<std::string> ToolRegistry::names() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

void ToolRegistry::set_accuracy_summary(const std::string& name, std::optional<schema::AccuracySummary> summary) {
  std::unique_lock lock(mu_);
  auto it = entries_.find(name);
  if (it == entries_.end()) throw UnknownToolError(name);
  it->second.descriptor.accuracy_summary = std::move(summary);
}

void ToolRegistry::set_env(std::map<std::string, std::string> overrides) {
  std::unique_lock lock(mu_);
  env_overrides_ = std::move(overrides);
}

std::optional<std::string> ToolRegistry::env(const std::string& name) const {
  {
    std::shared_lock lock(mu_);
    if (auto it = env_overrides_.find(name); it != env_overrides_.end()) return it->second;
  }
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

Outcome ToolRegistry::invoke(const std::string& tool_name, const Json& args, const Budget& budget) const {
  Entry entry;
  {
    std::shared_lock lock(mu_);
    auto it = entries_.find(tool_name);
    if (it == entries_.end()) throw UnknownToolError(tool_name);
    entry = it->second;
  }
  const auto start = std::chrono::steady_clock::now();

  if (auto violations = schema::validate_arguments(entry.descriptor, args); !violations.empty()) {
    std::string msg = "invalid arguments:";
    for (const auto& v : violations) msg += " " + (v.field.empty() ? std::string("<args>") : v.field) + ": " + v.reason + ";";
    return ToolError{ErrorClass::validation, msg, tool_name, 0, std::move(violations)};
  }

  int timeout_ms = 30000;
  int max_retries = 2;
  if (const auto* api = std::get_if<ApiBinding>(&entry.binding)) {
    timeout_ms = api->timeout_ms;
    max_retries = api->max_retries;
  }
  if (budget.timeout_ms) timeout_ms = *budget.timeout_ms;
  if (budget.max_retries) max_retries = *budget.max_retries;

  thread_local std::mt19937 rng{std::random_device{}()};
  std::uniform_real_distribution<double> jitter(1.0 - retry_.jitter, 1.0 + retry_.jitter);

  int attempts = 0;
  Attempt last;
  while (true) {
    ++attempts;
    executions_.fetch_add(1);
    last = run_binding(entry, args, timeout_ms);
    if (last.raw || !is_retryable(last.error_class) || attempts > max_retries) break;
    const double delay = retry_.base_ms * std::pow(retry_.factor, attempts - 1) * jitter(rng);
    std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(delay));
  }

  if (!last.raw) return ToolError{last.error_class, last.message, tool_name, attempts, {}};
  auto conformant = check_output_contract(entry.descriptor, *last.raw);
  if (!conformant) return ToolError{ErrorClass::contract_violation, conformant.error(), tool_name, attempts, {}};

  Observation obs;
  obs.tool_name = tool_name;
  obs.arguments = args;
  obs.output_kind = entry.descriptor.output.kind;
  obs.output_value = std::move(conformant.value());
  obs.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  obs.attempt_count = attempts;
  return obs;
}

ToolRegistry::Attempt ToolRegistry::run_binding(const Entry& entry, const Json& args, int timeout_ms) const {
  return std::visit(
      [&](const auto& b) -> Attempt {
        using B = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<B, ProgramBinding>) {
          return run_program(b, args);
        } else if constexpr (std::is_same_v<B, ApiBinding>) {
          return run_api(b, args, timeout_ms);
        } else {
          return run_prompt(b, args);
        }
      },
      entry.binding);
}

ToolRegistry::Attempt ToolRegistry::run_program(const ProgramBinding& b, const Json& args) const {
  const ProgramFunction* fn = programs_.find(b.function);
  if (!fn) return {std::nullopt, ErrorClass::unavailable, "no built-in program named '" + b.function + "'"};
  try {
    return {(*fn)(args), ErrorClass::execution, ""};
  } catch (const std::exception& e) {
    return {std::nullopt, ErrorClass::execution, e.what()};
  }
}

namespace {

// Expands ${VAR} placeholders; returns the first missing variable name on failure.
Expected<std::string, std::string> expand_env(const std::string& text, const ToolRegistry& registry) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text.compare(i, 2, "${") == 0) {
      const auto close = text.find('}', i + 2);
      if (close != std::string::npos) {
        const std::string var = text.substr(i + 2, close - i - 2);
        auto value = registry.env(var);
        if (!value) return Expected<std::string, std::string>::failure(var);
        out += *value;
        i = close + 1;
        continue;
      }
    }
    out.push_back(text[i++]);
  }
  return out;
}

std::string query_value(const Json& v) {
  if (v.is_array()) {
    std::string s;
    for (const auto& e : v) {
      if (!s.empty()) s += ",";
      s += output_text(e);
    }
    return s;
  }
  return output_text(v);
}

}  // namespace

ToolRegistry::Attempt ToolRegistry::run_api(const ApiBinding& b, const Json& args, int timeout_ms) const {
  auto url = expand_env(b.url, *this);
  if (!url) return {std::nullopt, ErrorClass::unavailable, "missing environment variable '" + url.error() + "'"};
  httplib::Headers headers;
  for (const auto& [k, v] : b.headers) {
    auto value = expand_env(v, *this);
    if (!value) return {std::nullopt, ErrorClass::unavailable, "missing environment variable '" + value.error() + "'"};
    headers.emplace(k, *value);
  }

  std::vector<std::pair<std::string, std::string>> path_args;
  for (const auto& [k, v] : args.items()) path_args.emplace_back(k, detail::url_encode(query_value(v)));
  const auto split = detail::split_url(fill_template(*url, path_args));

  httplib::Client client(split.origin);
  const auto timeout = std::chrono::milliseconds(timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  const auto start = std::chrono::steady_clock::now();
  httplib::Result res;
  if (b.method == "GET") {
    std::string path = split.path;
    char sep = path.find('?') == std::string::npos ? '?' : '&';
    for (const auto& [k, v] : args.items()) {
      path += sep + detail::url_encode(k) + "=" + detail::url_encode(query_value(v));
      sep = '&';
    }
    res = client.Get(path, headers);
  } else {
    res = client.Post(split.path, headers, args.dump(), "application/json");
  }

  if (!res) {
    const auto elapsed = std::chrono::steady_clock::now() - start;
    const auto err = res.error();
    if (err == httplib::Error::ConnectionTimeout ||
        (err == httplib::Error::Read && elapsed >= timeout * 9 / 10)) {
      return {std::nullopt, ErrorClass::timeout, "no response within " + std::to_string(timeout_ms) + " ms"};
    }
    return {std::nullopt, ErrorClass::unavailable, "request failed: " + httplib::to_string(err)};
  }
  const int status = res->status;
  if (status >= 200 && status < 300) return {Json(res->body), ErrorClass::execution, ""};
  const std::string msg = "HTTP " + std::to_string(status);
  if (status == 429) return {std::nullopt, ErrorClass::rate_limited, msg};
  if (status == 408 || status == 504) return {std::nullopt, ErrorClass::timeout, msg};
  if (status == 502 || status == 503) return {std::nullopt, ErrorClass::unavailable, msg};
  return {std::nullopt, ErrorClass::execution, msg + ": " + res->body.substr(0, 200)};
}

ToolRegistry::Attempt ToolRegistry::run_prompt(const PromptBinding& b, const Json& args) const {
  std::vector<std::pair<std::string, std::string>> values;
  for (const auto& [k, v] : args.items()) {
    if (v.is_array()) {
      std::string joined;
      for (const auto& e : v) joined += (joined.empty() ? "" : "\n") + output_text(e);
      values.emplace_back(k, joined);
    } else {
      values.emplace_back(k, output_text(v));
    }
  }
  llm::ChatRequest request;
  request.backend_id = b.backend_id;
  request.decoding = b.decoding;
  request.messages.push_back({llm::Role::user, fill_template(b.prompt_template, values), std::nullopt, ""});
  auto response = backends_->complete(request);
  if (response) return {Json(response->content), ErrorClass::execution, ""};
  const auto& err = response.error();
  switch (err.kind) {
    case llm::BackendErrorKind::network:
    case llm::BackendErrorKind::unknown_backend:
      return {std::nullopt, ErrorClass::unavailable, err.message};
    case llm::BackendErrorKind::http_status:
      if (err.message.find("429") != std::string::npos) return {std::nullopt, ErrorClass::rate_limited, err.message};
      return {std::nullopt, ErrorClass::unavailable, err.message};
    default:
      return {std::nullopt, ErrorClass::execution, err.message};
  }
}

}  // namespace toolhub::runtime
