#include "toolhub/schema.hpp"

#include <algorithm>
#include <array>
#include <regex>
#include <set>

namespace toolhub::schema {

namespace {

constexpr std::array<std::pair<Category, std::string_view>, 3> kCategories{{
    {Category::program, "program"},
    {Category::api, "api"},
    {Category::prompting, "prompting"},
}};

constexpr std::array<std::pair<ParamType, std::string_view>, 6> kParamTypes{{
    {ParamType::string, "string"},
    {ParamType::integer, "integer"},
    {ParamType::number, "number"},
    {ParamType::boolean, "boolean"},
    {ParamType::string_list, "string-list"},
    {ParamType::file_reference, "file-reference"},
}};

constexpr std::array<std::pair<OutputKind, std::string_view>, 4> kOutputKinds{{
    {OutputKind::text, "text"},
    {OutputKind::number, "number"},
    {OutputKind::json_object, "json-object"},
    {OutputKind::file_reference, "file-reference"},
}};

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E value) {
  for (const auto& [e, s] : table) {
    if (e == value) return s;
  }
  return "?";
}

template <typename E, std::size_t N>
std::optional<E> value_of(const std::array<std::pair<E, std::string_view>, N>& table, std::string_view name) {
  for (const auto& [e, s] : table) {
    if (s == name) return e;
  }
  return std::nullopt;
}

bool type_matches(ParamType type, const Json& v) {
  switch (type) {
    case ParamType::string:
      return v.is_string();
    case ParamType::integer:
      return v.is_number_integer();
    case ParamType::number:
      return v.is_number();
    case ParamType::boolean:
      return v.is_boolean();
    case ParamType::string_list:
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const Json& e) { return e.is_string(); });
    case ParamType::file_reference:
      return v.is_string() && !v.get_ref<const std::string&>().empty();
  }
  return false;
}

bool is_numeric(ParamType t) { return t == ParamType::integer || t == ParamType::number; }

const std::set<std::string, std::less<>> kManifestKeys{"name",      "version", "description", "category",
                                                       "arguments", "output",  "tags",        "accuracy_summary"};
const std::set<std::string, std::less<>> kParamKeys{"name", "type", "required", "description",
                                                    "enum", "minimum", "maximum"};

class ManifestReader {
 public:
  explicit ManifestReader(const Json& doc) : doc_(doc) {}

  Expected<ToolDescriptor, std::vector<Violation>> read() {
    if (!doc_.is_object()) {
      return fail({{"", "manifest must be a JSON object"}});
    }
    for (const auto& [key, _] : doc_.items()) {
      if (!kManifestKeys.contains(key)) add(key, "unknown manifest key");
    }
    ToolDescriptor d;
    read_name(d);
    read_version(d);
    read_description(d);
    read_category(d);
    read_arguments(d);
    read_output(d);
    read_tags(d);
    read_accuracy(d);
    if (!violations_.empty()) return fail(std::move(violations_));
    return d;
  }

 private:
  static Expected<ToolDescriptor, std::vector<Violation>> fail(std::vector<Violation> vs) {
    return Expected<ToolDescriptor, std::vector<Violation>>::failure(std::move(vs));
  }

  void add(std::string field, std::string reason) { violations_.push_back({std::move(field), std::move(reason)}); }

  const Json* required(std::string_view key) {
    auto it = doc_.find(key);
    if (it == doc_.end()) {
      add(std::string(key), "missing required field");
      return nullptr;
    }
    return &*it;
  }

  void read_name(ToolDescriptor& d) {
    const Json* v = required("name");
    if (!v) return;
    if (!v->is_string() || !is_valid_tool_name(v->get_ref<const std::string&>())) {
      add("name", "must be a non-empty string matching [a-z0-9_]+");
      return;
    }
    d.name = v->get<std::string>();
  }

  void read_version(ToolDescriptor& d) {
    const Json* v = required("version");
    if (!v) return;
    if (!v->is_string() || !is_valid_semver(v->get_ref<const std::string&>())) {
      add("version", "malformed version: expected semantic version MAJOR.MINOR.PATCH");
      return;
    }
    d.version = v->get<std::string>();
  }

  void read_description(ToolDescriptor& d) {
    const Json* v = required("description");
    if (!v) return;
    if (!v->is_string() || trim(v->get_ref<const std::string&>()).empty()) {
      add("description", "must be a non-empty string");
      return;
    }
    d.description = v->get<std::string>();
  }

  void read_category(ToolDescriptor& d) {
    const Json* v = required("category");
    if (!v) return;
    std::optional<Category> c;
    if (v->is_string()) c = parse_category(v->get_ref<const std::string&>());
    if (!c) {
      add("category", "unknown category: expected one of program, api, prompting");
      return;
    }
    d.category = *c;
  }

  void read_arguments(ToolDescriptor& d) {
    const Json* v = required("arguments");
    if (!v) return;
    if (!v->is_array()) {
      add("arguments", "must be an array of parameter objects");
      return;
    }
    std::set<std::string> seen;
    for (std::size_t i = 0; i < v->size(); ++i) {
      const std::string at = "arguments[" + std::to_string(i) + "]";
      auto p = read_parameter((*v)[i], at);
      if (!p) continue;
      if (!seen.insert(p->name).second) {
        add(at + ".name", "duplicate parameter name '" + p->name + "'");
        continue;
      }
      d.arguments.parameters.push_back(std::move(*p));
    }
  }

  std::optional<ParameterSpec> read_parameter(const Json& p, const std::string& at) {
    if (!p.is_object()) {
      add(at, "parameter must be an object");
      return std::nullopt;
    }
    const std::size_t before = violations_.size();
    for (const auto& [key, _] : p.items()) {
      if (!kParamKeys.contains(key)) add(at + "." + key, "unknown parameter key");
    }
    ParameterSpec spec;
    if (auto it = p.find("name"); it == p.end() || !it->is_string() || it->get_ref<const std::string&>().empty()) {
      add(at + ".name", "parameter name must be a non-empty string");
    } else {
      spec.name = it->get<std::string>();
    }
    bool type_ok = false;
    if (auto it = p.find("type"); it == p.end() || !it->is_string()) {
      add(at + ".type", "missing parameter type");
    } else if (auto t = parse_param_type(it->get_ref<const std::string&>()); !t) {
      add(at + ".type", "unknown parameter type '" + it->get<std::string>() + "'");
    } else {
      spec.type = *t;
      type_ok = true;
    }
    if (auto it = p.find("required"); it != p.end()) {
      if (!it->is_boolean()) {
        add(at + ".required", "must be a boolean");
      } else {
        spec.required = it->get<bool>();
      }
    }
    if (auto it = p.find("description"); it != p.end()) {
      if (!it->is_string()) {
        add(at + ".description", "must be a string");
      } else {
        spec.description = it->get<std::string>();
      }
    }
    if (auto it = p.find("enum"); it != p.end()) {
      if (!it->is_array() || it->empty()) {
        add(at + ".enum", "enum must be a non-empty array");
      } else {
        std::vector<Json> values(it->begin(), it->end());
        if (type_ok && !std::all_of(values.begin(), values.end(),
                                    [&](const Json& e) { return type_matches(spec.type, e); })) {
          add(at + ".enum", "enum values must match the parameter type");
        }
        spec.allowed = std::move(values);
      }
    }
    for (const char* bound : {"minimum", "maximum"}) {
      auto it = p.find(bound);
      if (it == p.end()) continue;
      if (!it->is_number()) {
        add(at + "." + bound, "must be a number");
        continue;
      }
      if (type_ok && !is_numeric(spec.type)) {
        add(at + "." + bound, "numeric range only applies to integer or number parameters");
        continue;
      }
      (std::string_view(bound) == "minimum" ? spec.minimum : spec.maximum) = it->get<double>();
    }
    if (spec.minimum && spec.maximum && *spec.minimum > *spec.maximum) {
      add(at + ".minimum", "minimum exceeds maximum");
    }
    if (violations_.size() != before) return std::nullopt;
    return spec;
  }

  void read_output(ToolDescriptor& d) {
    const Json* v = required("output");
    if (!v) return;
    if (!v->is_object()) {
      add("output", "must be an object");
      return;
    }
    for (const auto& [key, _] : v->items()) {
      if (key != "kind" && key != "description" && key != "fields") add("output." + key, "unknown output key");
    }
    if (auto it = v->find("kind"); it == v->end() || !it->is_string()) {
      add("output.kind", "missing output kind");
    } else if (auto k = parse_output_kind(it->get_ref<const std::string&>()); !k) {
      add("output.kind", "unknown output kind: expected text, number, json-object or file-reference");
    } else {
      d.output.kind = *k;
    }
    if (auto it = v->find("description"); it != v->end()) {
      if (!it->is_string()) {
        add("output.description", "must be a string");
      } else {
        d.output.description = it->get<std::string>();
      }
    }
    if (auto it = v->find("fields"); it != v->end()) {
      if (!it->is_array() || !std::all_of(it->begin(), it->end(), [](const Json& e) { return e.is_string(); })) {
        add("output.fields", "must be an array of strings");
      } else {
        d.output.fields = it->get<std::vector<std::string>>();
      }
    }
  }

  void read_tags(ToolDescriptor& d) {
    auto it = doc_.find("tags");
    if (it == doc_.end()) return;
    if (!it->is_array() || !std::all_of(it->begin(), it->end(), [](const Json& e) { return e.is_string(); })) {
      add("tags", "must be an array of strings");
      return;
    }
    d.tags = it->get<std::vector<std::string>>();
  }

  void read_accuracy(ToolDescriptor& d) {
    auto it = doc_.find("accuracy_summary");
    if (it == doc_.end()) return;
    if (!it->is_object()) {
      add("accuracy_summary", "must be an object");
      return;
    }
    AccuracySummary s;
    bool ok = true;
    if (auto a = it->find("accuracy"); a == it->end() || !a->is_number() || a->get<double>() < 0.0 ||
                                       a->get<double>() > 1.0) {
      add("accuracy_summary.accuracy", "must be a number in [0,1]");
      ok = false;
    } else {
      s.accuracy = a->get<double>();
    }
    if (auto n = it->find("suite_size"); n == it->end() || !n->is_number_integer() || n->get<long long>() < 1) {
      add("accuracy_summary.suite_size", "must be an integer >= 1");
      ok = false;
    } else {
      s.suite_size = n->get<int>();
    }
    if (auto t = it->find("evaluated_at"); t == it->end() || !t->is_string()) {
      add("accuracy_summary.evaluated_at", "must be a timestamp string");
      ok = false;
    } else {
      s.evaluated_at = t->get<std::string>();
    }
    if (ok) d.accuracy_summary = s;
  }

  const Json& doc_;
  std::vector<Violation> violations_;
};

std::string describe(const Json& v) {
  std::string s = v.dump();
  if (s.size() > 40) s = s.substr(0, 37) + "...";
  return s;
}

}  // namespace

std::string_view to_string(Category c) { return name_of(kCategories, c); }
std::string_view to_string(ParamType t) { return name_of(kParamTypes, t); }
std::string_view to_string(OutputKind k) { return name_of(kOutputKinds, k); }
std::optional<Category> parse_category(std::string_view s) { return value_of(kCategories, s); }
std::optional<ParamType> parse_param_type(std::string_view s) { return value_of(kParamTypes, s); }
std::optional<OutputKind> parse_output_kind(std::string_view s) { return value_of(kOutputKinds, s); }

const ParameterSpec* ArgumentSchema::find(std::string_view name) const {
  auto it = std::find_if(parameters.begin(), parameters.end(), [&](const ParameterSpec& p) { return p.name == name; });
  return it == parameters.end() ? nullptr : &*it;
}

bool is_valid_tool_name(std::string_view name) {
  static const std::regex re("[a-z0-9_]+");
  return std::regex_match(name.begin(), name.end(), re);
}

bool is_valid_semver(std::string_view version) {
  static const std::regex re(R"((0|[1-9]\d*)\.(0|[1-9]\d*)\.(0|[1-9]\d*)(-[0-9A-Za-z.-]+)?(\+[0-9A-Za-z.-]+)?)");
  return std::regex_match(version.begin(), version.end(), re);
}

Json to_json(const ParameterSpec& p) {
  Json j{{"name", p.name}, {"type", to_string(p.type)}, {"required", p.required}, {"description", p.description}};
  if (p.allowed) j["enum"] = *p.allowed;
  if (p.minimum) j["minimum"] = *p.minimum;
  if (p.maximum) j["maximum"] = *p.maximum;
  return j;
}

Json to_json(const ArgumentSchema& s) {
  Json out = Json::array();
  for (const auto& p : s.parameters) out.push_back(to_json(p));
  return out;
}

Json to_json(const OutputContract& c) {
  Json j{{"kind", to_string(c.kind)}, {"description", c.description}};
  if (!c.fields.empty()) j["fields"] = c.fields;
  return j;
}

Json to_json(const AccuracySummary& a) {
  return Json{{"accuracy", a.accuracy}, {"suite_size", a.suite_size}, {"evaluated_at", a.evaluated_at}};
}

Json to_json(const ToolDescriptor& d) {
  Json j{{"name", d.name},
         {"version", d.version},
         {"description", d.description},
         {"category", to_string(d.category)},
         {"arguments", to_json(d.arguments)},
         {"output", to_json(d.output)},
         {"tags", d.tags}};
  if (d.accuracy_summary) j["accuracy_summary"] = to_json(*d.accuracy_summary);
  return j;
}

Expected<ToolDescriptor, std::vector<Violation>> validate_manifest(const Json& manifest) {
  return ManifestReader(manifest).read();
}

Expected<ToolDescriptor, std::vector<Violation>> validate_manifest(std::string_view raw_manifest) {
  Json doc = Json::parse(raw_manifest.begin(), raw_manifest.end(), nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) {
    return Expected<ToolDescriptor, std::vector<Violation>>::failure({{"", "parse failure: not a valid JSON document"}});
  }
  return validate_manifest(doc);
}

std::vector<Violation> validate_arguments(const ToolDescriptor& descriptor, const Json& args) {
  std::vector<Violation> out;
  if (!args.is_object()) {
    out.push_back({"", "arguments must be a JSON object"});
    return out;
  }
  for (const auto& p : descriptor.arguments.parameters) {
    auto it = args.find(p.name);
    if (it == args.end()) {
      if (p.required) out.push_back({p.name, "missing required parameter"});
      continue;
    }
    const Json& v = *it;
    if (!type_matches(p.type, v)) {
      out.push_back({p.name, "expected " + std::string(to_string(p.type)) + ", got " + describe(v)});
      continue;
    }
    if (p.allowed && std::find(p.allowed->begin(), p.allowed->end(), v) == p.allowed->end()) {
      out.push_back({p.name, "value " + describe(v) + " is not one of the allowed values"});
    }
    if (is_numeric(p.type)) {
      const double x = v.get<double>();
      if ((p.minimum && x < *p.minimum) || (p.maximum && x > *p.maximum)) {
        out.push_back({p.name, "value " + describe(v) + " outside range [" +
                                   (p.minimum ? format_number(*p.minimum) : std::string("-inf")) + ", " +
                                   (p.maximum ? format_number(*p.maximum) : std::string("inf")) + "]"});
      }
    }
  }
  for (const auto& [key, _] : args.items()) {
    if (!descriptor.arguments.find(key)) out.push_back({key, "unknown parameter"});
  }
  return out;
}

std::string canonical_serialize(const ToolDescriptor& descriptor) { return to_json(descriptor).dump() + "\n"; }

}  // namespace toolhub::schema
