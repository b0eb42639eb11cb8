#include "toolhub/llm.hpp"

#include <httplib.h>

#include <chrono>
#include <cstdlib>

#include "http_util.hpp"

namespace toolhub::llm {

namespace {

CompletionResult fail(BackendErrorKind kind, std::string message) {
  return CompletionResult::failure(BackendError{kind, std::move(message)});
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

ToolCall parse_tool_call(const Json& j) {
  ToolCall call;
  call.tool_name = j.at("name").get<std::string>();
  if (auto it = j.find("arguments"); it != j.end()) call.arguments = *it;
  if (auto it = j.find("id"); it != j.end()) call.id = it->get<std::string>();
  return call;
}

}  // namespace

std::string_view to_string(Role r) {
  switch (r) {
    case Role::system:
      return "system";
    case Role::user:
      return "user";
    case Role::assistant:
      return "assistant";
    case Role::tool:
      return "tool";
  }
  return "user";
}

std::optional<Role> parse_role(std::string_view s) {
  for (Role r : {Role::system, Role::user, Role::assistant, Role::tool}) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

std::optional<std::string> check_request(const ChatRequest& request) {
  if (request.messages.empty()) return "request has no messages";
  const Role first = request.messages.front().role;
  if (first != Role::system && first != Role::user) return "first message must be system or user";
  return std::nullopt;
}

// --- ScriptedBackend ---------------------------------------------------------

ScriptedBackend::ScriptedBackend(std::vector<ScriptedReply> script)
    : script_(std::move(script)), consumed_(script_.size(), false) {}

std::vector<ScriptedReply> ScriptedBackend::parse_script(const Json& doc) {
  const Json& items = doc.is_object() ? doc.at("responses") : doc;
  if (!items.is_array()) throw std::invalid_argument("mock script must be an array of replies");
  std::vector<ScriptedReply> out;
  for (const auto& item : items) {
    ScriptedReply reply;
    if (item.is_string()) {
      reply.content = item.get<std::string>();
    } else if (item.is_object()) {
      reply.content = item.value("content", "");
      if (auto it = item.find("tool_call"); it != item.end()) reply.tool_call = parse_tool_call(*it);
      if (auto it = item.find("match"); it != item.end()) reply.match = it->get<std::string>();
      reply.repeat = item.value("repeat", false);
    } else {
      throw std::invalid_argument("mock reply must be a string or an object");
    }
    out.push_back(std::move(reply));
  }
  return out;
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_json(const Json& doc) {
  return std::make_shared<ScriptedBackend>(parse_script(doc));
}

CompletionResult ScriptedBackend::complete(const ChatRequest& request) {
  const auto start = std::chrono::steady_clock::now();
  if (auto problem = check_request(request)) return fail(BackendErrorKind::invalid_request, *problem);
  std::lock_guard lock(mu_);
  captured_.push_back(request);
  const std::string& last = request.messages.back().content;
  for (std::size_t i = 0; i < script_.size(); ++i) {
    if (consumed_[i]) continue;
    const ScriptedReply& reply = script_[i];
    if (reply.match && last.find(*reply.match) == std::string::npos) continue;
    if (!reply.repeat) consumed_[i] = true;
    ChatResponse response;
    response.content = reply.content;
    response.tool_call = reply.tool_call;
    if (response.tool_call && response.tool_call->id.empty()) {
      response.tool_call->id = "call_" + std::to_string(captured_.size());
    }
    response.usage.prompt_tokens = static_cast<int>(last.size() / 4);
    response.usage.completion_tokens = static_cast<int>(reply.content.size() / 4);
    response.latency_ms = elapsed_ms(start);
    return response;
  }
  return fail(BackendErrorKind::exhausted,
              "scripted backend exhausted after " + std::to_string(captured_.size() - 1) + " call(s)");
}

std::vector<ChatRequest> ScriptedBackend::captured() const {
  std::lock_guard lock(mu_);
  return captured_;
}

std::size_t ScriptedBackend::remaining() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (std::size_t i = 0; i < script_.size(); ++i) n += consumed_[i] ? 0 : 1;
  return n;
}

// --- OpenAIBackend -----------------------------------------------------------

OpenAIBackend::OpenAIBackend(OpenAIConfig config) : config_(std::move(config)) {}

std::optional<OpenAIConfig> OpenAIBackend::config_from_env() {
  const char* base = std::getenv("LLM_BASE_URL");
  if (!base || !*base) return std::nullopt;
  OpenAIConfig c;
  c.base_url = base;
  if (const char* key = std::getenv("LLM_API_KEY")) c.api_key = key;
  const char* model = std::getenv("LLM_MODEL");
  c.model = model && *model ? model : "gpt-4o-mini";
  return c;
}

OrderedJson OpenAIBackend::request_body(const ChatRequest& request) const {
  OrderedJson messages = OrderedJson::array();
  for (const auto& m : request.messages) {
    OrderedJson msg{{"role", to_string(m.role)}, {"content", m.content}};
    if (m.role == Role::assistant && m.tool_call) {
      msg["tool_calls"] = OrderedJson::array({OrderedJson{
          {"id", m.tool_call->id},
          {"type", "function"},
          {"function", {{"name", m.tool_call->tool_name}, {"arguments", m.tool_call->arguments.dump()}}}}});
    }
    if (m.role == Role::tool) msg["tool_call_id"] = m.tool_call_id;
    messages.push_back(std::move(msg));
  }
  OrderedJson body{{"model", config_.model},
                   {"messages", std::move(messages)},
                   {"temperature", request.decoding.temperature},
                   {"max_tokens", request.decoding.max_tokens}};
  if (!request.tool_declarations.empty()) body["tools"] = request.tool_declarations;
  return body;
}

CompletionResult OpenAIBackend::parse_response(const Json& body) {
  try {
    const Json& message = body.at("choices").at(0).at("message");
    ChatResponse r;
    if (auto it = message.find("content"); it != message.end() && it->is_string()) r.content = it->get<std::string>();
    if (auto it = message.find("tool_calls"); it != message.end() && it->is_array() && !it->empty()) {
      const Json& call = (*it)[0];
      const Json& fn = call.at("function");
      ToolCall tc;
      tc.tool_name = fn.at("name").get<std::string>();
      tc.id = call.value("id", "");
      const Json& args = fn.at("arguments");
      tc.arguments = args.is_string() ? Json::parse(args.get<std::string>()) : args;
      r.tool_call = std::move(tc);
    }
    if (auto it = body.find("usage"); it != body.end() && it->is_object()) {
      r.usage.prompt_tokens = it->value("prompt_tokens", 0);
      r.usage.completion_tokens = it->value("completion_tokens", 0);
    }
    return r;
  } catch (const std::exception& e) {
    return fail(BackendErrorKind::invalid_request, std::string("malformed completion body: ") + e.what());
  }
}

CompletionResult OpenAIBackend::complete(const ChatRequest& request) {
  const auto start = std::chrono::steady_clock::now();
  if (auto problem = check_request(request)) return fail(BackendErrorKind::invalid_request, *problem);
  const auto url = detail::split_url(config_.base_url);
  std::string path = url.path == "/" ? "" : url.path;
  while (!path.empty() && path.back() == '/') path.pop_back();
  path += "/chat/completions";

  httplib::Client client(url.origin);
  const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  auto res = client.Post(path, headers, request_body(request).dump(), "application/json");
  if (!res) return fail(BackendErrorKind::network, "chat completion request failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) {
    return fail(BackendErrorKind::http_status, "chat completion returned HTTP " + std::to_string(res->status));
  }
  Json body = Json::parse(res->body, nullptr, false);
  if (body.is_discarded()) return fail(BackendErrorKind::invalid_request, "chat completion body is not JSON");
  auto parsed = parse_response(body);
  if (parsed) parsed->latency_ms = elapsed_ms(start);
  return parsed;
}

// --- BackendRegistry ---------------------------------------------------------

void BackendRegistry::add(std::string id, std::shared_ptr<Backend> backend) {
  std::unique_lock lock(mu_);
  backends_[std::move(id)] = std::move(backend);
}

void BackendRegistry::remove(const std::string& id) {
  std::unique_lock lock(mu_);
  backends_.erase(id);
}

std::shared_ptr<Backend> BackendRegistry::find(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = backends_.find(id);
  return it == backends_.end() ? nullptr : it->second;
}

std::vector<std::string> BackendRegistry::ids() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, _] : backends_) out.push_back(id);
  return out;
}

CompletionResult BackendRegistry::complete(const ChatRequest& request) const {
  auto backend = find(request.backend_id);
  if (!backend) return fail(BackendErrorKind::unknown_backend, "unknown backend '" + request.backend_id + "'");
  return backend->complete(request);
}

// --- Declarations ------------------------------------------------------------

OrderedJson project_tool_declaration(const schema::ToolDescriptor& d) {
  using schema::ParamType;
  OrderedJson properties = OrderedJson::object();
  OrderedJson required = OrderedJson::array();
  for (const auto& p : d.arguments.parameters) {
    OrderedJson prop = OrderedJson::object();
    switch (p.type) {
      case ParamType::string:
        prop["type"] = "string";
        break;
      case ParamType::integer:
        prop["type"] = "integer";
        break;
      case ParamType::number:
        prop["type"] = "number";
        break;
      case ParamType::boolean:
        prop["type"] = "boolean";
        break;
      case ParamType::string_list:
        prop["type"] = "array";
        prop["items"] = {{"type", "string"}};
        break;
      case ParamType::file_reference:
        prop["type"] = "string";
        prop["format"] = "file-reference";
        break;
    }
    prop["description"] = p.description;
    if (p.allowed) {
      OrderedJson values = OrderedJson::array();
      for (const auto& v : *p.allowed) values.push_back(OrderedJson::parse(v.dump()));
      prop["enum"] = std::move(values);
    }
    if (p.minimum) prop["minimum"] = *p.minimum;
    if (p.maximum) prop["maximum"] = *p.maximum;
    properties[p.name] = std::move(prop);
    if (p.required) required.push_back(p.name);
  }
  return OrderedJson{{"type", "function"},
                     {"function",
                      {{"name", d.name},
                       {"description", d.description},
                       {"parameters",
                        {{"type", "object"},
                         {"properties", std::move(properties)},
                         {"required", std::move(required)},
                         {"additionalProperties", false}}}}}};
}

OrderedJson project_tool_declarations(const std::vector<schema::ToolDescriptor>& descriptors) {
  OrderedJson out = OrderedJson::array();
  for (const auto& d : descriptors) out.push_back(project_tool_declaration(d));
  return out;
}

}  // namespace toolhub::llm
