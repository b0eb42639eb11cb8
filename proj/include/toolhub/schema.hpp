#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "toolhub/common.hpp"

namespace toolhub::schema {

enum class Category { program, api, prompting };
enum class ParamType { string, integer, number, boolean, string_list, file_reference };
enum class OutputKind { text, number, json_object, file_reference };

std::string_view to_string(Category c);
std::string_view to_string(ParamType t);
std::string_view to_string(OutputKind k);
std::optional<Category> parse_category(std::string_view s);
std::optional<ParamType> parse_param_type(std::string_view s);
std::optional<OutputKind> parse_output_kind(std::string_view s);

struct ParameterSpec {
  std::string name;
  ParamType type = ParamType::string;
  bool required = false;
  std::string description;
  std::optional<std::vector<Json>> allowed;  // enum constraint
  std::optional<double> minimum;
  std::optional<double> maximum;

  bool operator==(const ParameterSpec&) const = default;
};

struct ArgumentSchema {
  std::vector<ParameterSpec> parameters;  // declaration order

  const ParameterSpec* find(std::string_view name) const;
  bool operator==(const ArgumentSchema&) const = default;
};

struct OutputContract {
  OutputKind kind = OutputKind::text;
  std::string description;
  std::vector<std::string> fields;  // advisory structure hints for json-object

  bool operator==(const OutputContract&) const = default;
};

struct AccuracySummary {
  double accuracy = 0.0;
  int suite_size = 0;
  std::string evaluated_at;

  bool operator==(const AccuracySummary&) const = default;
};

/// The standardized interface record for a tool. Immutable once validated.
struct ToolDescriptor {
  std::string name;
  std::string version;
  std::string description;
  Category category = Category::program;
  ArgumentSchema arguments;
  OutputContract output;
  std::optional<AccuracySummary> accuracy_summary;
  std::vector<std::string> tags;

  bool operator==(const ToolDescriptor&) const = default;
};

Json to_json(const ParameterSpec& p);
Json to_json(const ArgumentSchema& s);
Json to_json(const OutputContract& c);
Json to_json(const AccuracySummary& a);
Json to_json(const ToolDescriptor& d);

/// Validates a raw manifest document. Collects every violation rather than
/// stopping at the first one.
Expected<ToolDescriptor, std::vector<Violation>> validate_manifest(std::string_view raw_manifest);
Expected<ToolDescriptor, std::vector<Violation>> validate_manifest(const Json& manifest);

/// Empty result means the arguments are valid. Never throws.
std::vector<Violation> validate_arguments(const ToolDescriptor& descriptor, const Json& args);

/// Sorted keys, no insignificant whitespace, LF-terminated.
std::string canonical_serialize(const ToolDescriptor& descriptor);

bool is_valid_tool_name(std::string_view name);
bool is_valid_semver(std::string_view version);

}  // namespace toolhub::schema
