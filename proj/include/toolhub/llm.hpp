#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "toolhub/common.hpp"
#include "toolhub/schema.hpp"

namespace toolhub::llm {

enum class Role { system, user, assistant, tool };
std::string_view to_string(Role r);
std::optional<Role> parse_role(std::string_view s);

struct ToolCall {
  std::string tool_name;
  Json arguments = Json::object();
  std::string id;

  bool operator==(const ToolCall&) const = default;
};

struct Message {
  Role role = Role::user;
  std::string content;
  std::optional<ToolCall> tool_call;  // assistant turns that requested a tool
  std::string tool_call_id;           // tool turns answering a request

  bool operator==(const Message&) const = default;
};

struct Decoding {
  double temperature = 0.0;
  int max_tokens = 1024;
};

struct ChatRequest {
  std::string backend_id;
  std::vector<Message> messages;
  Decoding decoding;
  OrderedJson tool_declarations = OrderedJson::array();
};

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

struct ChatResponse {
  std::string content;
  std::optional<ToolCall> tool_call;
  Usage usage;
  double latency_ms = 0.0;
};

enum class BackendErrorKind { network, http_status, exhausted, invalid_request, unknown_backend };

struct BackendError {
  BackendErrorKind kind = BackendErrorKind::network;
  std::string message;
};

using CompletionResult = Expected<ChatResponse, BackendError>;

/// Checks the request-shape invariants: non-empty, first role system or user.
std::optional<std::string> check_request(const ChatRequest& request);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual CompletionResult complete(const ChatRequest& request) = 0;
};

// One scripted reply. A reply with `match` is only eligible when the request's
// last message contains that substring; `repeat` replies are never consumed.
struct ScriptedReply {
  std::string content;
  std::optional<ToolCall> tool_call;
  std::optional<std::string> match;
  bool repeat = false;
};

/// Deterministic backend that replays a script. Calls observe a total order;
/// running out of eligible replies is an error so tests catch unexpected calls.
class ScriptedBackend final : public Backend {
 public:
  explicit ScriptedBackend(std::vector<ScriptedReply> script);

  /// Accepts either an array of replies or {"responses": [...]}. A reply is a
  /// bare string, or an object with content / tool_call{name, arguments} /
  /// match / repeat.
  static std::shared_ptr<ScriptedBackend> from_json(const Json& doc);
  static std::vector<ScriptedReply> parse_script(const Json& doc);

  CompletionResult complete(const ChatRequest& request) override;

  std::vector<ChatRequest> captured() const;
  std::size_t remaining() const;

 private:
  mutable std::mutex mu_;
  std::vector<ScriptedReply> script_;
  std::vector<bool> consumed_;
  std::vector<ChatRequest> captured_;
};

struct OpenAIConfig {
  std::string base_url;  // e.g. https://api.openai.com/v1
  std::string api_key;
  std::string model;
  int timeout_ms = 60000;
};

/// OpenAI-compatible chat-completions client.
class OpenAIBackend final : public Backend {
 public:
  explicit OpenAIBackend(OpenAIConfig config);

  /// Reads LLM_BASE_URL / LLM_API_KEY / LLM_MODEL; nullopt when LLM_BASE_URL is unset.
  static std::optional<OpenAIConfig> config_from_env();

  CompletionResult complete(const ChatRequest& request) override;

  /// Request body sent to {base_url}/chat/completions.
  OrderedJson request_body(const ChatRequest& request) const;
  static CompletionResult parse_response(const Json& body);

 private:
  OpenAIConfig config_;
};

class BackendRegistry {
 public:
  void add(std::string id, std::shared_ptr<Backend> backend);
  void remove(const std::string& id);
  std::shared_ptr<Backend> find(const std::string& id) const;
  std::vector<std::string> ids() const;

  /// Dispatches on request.backend_id.
  CompletionResult complete(const ChatRequest& request) const;

 private:
  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<Backend>> backends_;
};

/// Projects tool descriptors into OpenAI function-declaration objects.
/// Parameter order and enum values are preserved as declared.
OrderedJson project_tool_declarations(const std::vector<schema::ToolDescriptor>& descriptors);
OrderedJson project_tool_declaration(const schema::ToolDescriptor& descriptor);

}  // namespace toolhub::llm
