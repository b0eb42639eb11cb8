#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace toolhub {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

// Minimal value-or-error holder (std::expected is not available in C++20).
template <typename T, typename E>
class Expected {
 public:
  Expected(T value) : data_(std::in_place_index<0>, std::move(value)) {}  // NOLINT
  static Expected failure(E error) { return Expected(std::in_place_index<1>, std::move(error)); }

  bool ok() const { return data_.index() == 0; }
  explicit operator bool() const { return ok(); }

  T& value() & { return std::get<0>(data_); }
  const T& value() const& { return std::get<0>(data_); }
  T&& value() && { return std::get<0>(std::move(data_)); }
  E& error() & { return std::get<1>(data_); }
  const E& error() const& { return std::get<1>(data_); }

  T* operator->() { return &value(); }
  const T* operator->() const { return &value(); }
  T& operator*() & { return value(); }
  const T& operator*() const& { return value(); }

 private:
  template <std::size_t I, typename U>
  Expected(std::in_place_index_t<I> tag, U&& u) : data_(tag, std::forward<U>(u)) {}
  std::variant<T, E> data_;
};

// A single schema/contract violation: where it happened and why.
struct Violation {
  std::string field;
  std::string reason;

  bool operator==(const Violation&) const = default;
};

Json to_json(const Violation& v);
Json to_json(const std::vector<Violation>& vs);

// Raised by persistence when the on-disk state cannot be read or written.
class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// UTC timestamp in ISO-8601 with millisecond precision, e.g. 2024-05-01T12:00:00.123Z.
std::string now_iso8601();
std::int64_t now_unix_ms();

std::string sha256_hex(std::string_view data);

std::string trim(std::string_view s);
std::string trim_right(std::string_view s);
std::string to_lower(std::string_view s);

// Replaces every `{key}` whose key appears in `values`; other braces are left untouched.
std::string fill_template(std::string_view tmpl, const std::vector<std::pair<std::string, std::string>>& values);

// Parses the whole of `text` (surrounding whitespace allowed) as a finite double.
std::optional<double> parse_number(std::string_view text);

// Integral values print without a fraction; others with 12 significant digits.
std::string format_number(double value);

std::string read_file(const std::filesystem::path& path);
// Writes via a sibling temp file and rename so readers never observe a torn file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace toolhub
