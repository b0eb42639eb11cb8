// Built-in deterministic program tools.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <deque>
#include <map>
#include <numbers>
#include <sstream>

#include "toolhub/runtime.hpp"

namespace toolhub::runtime {

namespace {

// Recursive-descent evaluator.
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/' | '%') unary)*
//   unary   := ('+' | '-') unary | power
//   power   := primary (('^' | '**') unary)?
//   primary := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
class ExpressionParser {
 public:
  explicit ExpressionParser(std::string_view src) : src_(src) {}

  double evaluate() {
    const double v = expr();
    skip_ws();
    if (pos_ != src_.size()) fail("unexpected '" + std::string(1, src_[pos_]) + "' at position " + std::to_string(pos_));
    if (!std::isfinite(v)) fail("result is not a finite number");
    return v;
  }

 private:
  [[noreturn]] static void fail(const std::string& msg) { throw ExecutionFailure(msg); }

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool eat(std::string_view token) {
    skip_ws();
    if (src_.substr(pos_, token.size()) == token) {
      pos_ += token.size();
      return true;
    }
    return false;
  }

  double expr() {
    double v = term();
    while (true) {
      if (eat("+")) {
        v += term();
      } else if (eat("-")) {
        v -= term();
      } else {
        return v;
      }
    }
  }

  double term() {
    double v = unary();
    while (true) {
      if (eat("*")) {
        v *= unary();
      } else if (eat("/")) {
        const double d = unary();
        if (d == 0.0) fail("division by zero");
        v /= d;
      } else if (eat("%")) {
        const double d = unary();
        if (d == 0.0) fail("modulo by zero");
        v = std::fmod(v, d);
      } else {
        return v;
      }
    }
  }

  double unary() {
    if (eat("-")) return -unary();
    if (eat("+")) return unary();
    return power();
  }

  double power() {
    const double base = primary();
    if (eat("**") || eat("^")) return std::pow(base, unary());
    return base;
  }

  double primary() {
    skip_ws();
    if (pos_ >= src_.size()) fail("unexpected end of expression");
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      const double v = expr();
      if (!eat(")")) fail("missing ')'");
      return v;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c))) return named();
    fail("unexpected '" + std::string(1, c) + "' at position " + std::to_string(pos_));
  }

  double number() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.')) ++pos_;
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) ++p;
      if (p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]))) {
        pos_ = p;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      }
    }
    auto v = parse_number(src_.substr(start, pos_ - start));
    if (!v) fail("malformed number '" + std::string(src_.substr(start, pos_ - start)) + "'");
    return *v;
  }

  double named() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) ++pos_;
    const std::string name = to_lower(src_.substr(start, pos_ - start));
    if (!eat("(")) {
      if (name == "pi") return std::numbers::pi;
      if (name == "e") return std::numbers::e;
      fail("unknown identifier '" + name + "'");
    }
    std::vector<double> args{expr()};
    while (eat(",")) args.push_back(expr());
    if (!eat(")")) fail("missing ')' after arguments to " + name);
    return call(name, args);
  }

  static double call(const std::string& name, const std::vector<double>& a) {
    auto arity = [&](std::size_t n) {
      if (a.size() != n) fail(name + " expects " + std::to_string(n) + " argument(s)");
    };
    static const std::map<std::string, double (*)(double)> unary_fns{
        {"sin", [](double x) { return std::sin(x); }},     {"cos", [](double x) { return std::cos(x); }},
        {"tan", [](double x) { return std::tan(x); }},     {"asin", [](double x) { return std::asin(x); }},
        {"acos", [](double x) { return std::acos(x); }},   {"atan", [](double x) { return std::atan(x); }},
        {"exp", [](double x) { return std::exp(x); }},     {"abs", [](double x) { return std::fabs(x); }},
        {"floor", [](double x) { return std::floor(x); }}, {"ceil", [](double x) { return std::ceil(x); }},
        {"round", [](double x) { return std::round(x); }},
    };
    if (auto it = unary_fns.find(name); it != unary_fns.end()) {
      arity(1);
      return it->second(a[0]);
    }
    if (name == "sqrt") {
      arity(1);
      if (a[0] < 0) fail("sqrt of a negative number");
      return std::sqrt(a[0]);
    }
    if (name == "ln" || name == "log" || name == "log2") {
      arity(1);
      if (a[0] <= 0) fail(name + " of a non-positive number");
      return name == "ln" ? std::log(a[0]) : name == "log" ? std::log10(a[0]) : std::log2(a[0]);
    }
    if (name == "pow") {
      arity(2);
      return std::pow(a[0], a[1]);
    }
    if (name == "min" || name == "max") {
      if (a.empty()) fail(name + " expects at least one argument");
      return name == "min" ? *std::min_element(a.begin(), a.end()) : *std::max_element(a.begin(), a.end());
    }
    fail("unknown function '" + name + "'");
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

Json calculator(const Json& args) {
  const double v = ExpressionParser(args.at("expression").get<std::string>()).evaluate();
  return format_number(v);
}

// Linear units: factor to the dimension's base unit.
struct Unit {
  std::string dimension;
  double factor;
};

const std::map<std::string, Unit>& linear_units() {
  static const std::map<std::string, Unit> units{
      {"m", {"length", 1.0}},          {"km", {"length", 1000.0}},       {"cm", {"length", 0.01}},
      {"mm", {"length", 0.001}},       {"mi", {"length", 1609.344}},     {"ft", {"length", 0.3048}},
      {"in", {"length", 0.0254}},      {"yd", {"length", 0.9144}},       {"kg", {"mass", 1.0}},
      {"g", {"mass", 0.001}},          {"lb", {"mass", 0.45359237}},     {"oz", {"mass", 0.028349523125}},
      {"s", {"time", 1.0}},            {"min", {"time", 60.0}},          {"h", {"time", 3600.0}},
      {"day", {"time", 86400.0}},      {"l", {"volume", 1.0}},           {"ml", {"volume", 0.001}},
      {"gal", {"volume", 3.785411784}},
  };
  return units;
}

double to_kelvin(double v, const std::string& unit) {
  if (unit == "c") return v + 273.15;
  if (unit == "f") return (v - 32.0) * 5.0 / 9.0 + 273.15;
  return v;
}

double from_kelvin(double k, const std::string& unit) {
  if (unit == "c") return k - 273.15;
  if (unit == "f") return (k - 273.15) * 9.0 / 5.0 + 32.0;
  return k;
}

Json unit_converter(const Json& args) {
  const double value = args.at("value").get<double>();
  const std::string from = args.at("from").get<std::string>();
  const std::string to = args.at("to").get<std::string>();
  const auto is_temp = [](const std::string& u) { return u == "c" || u == "f" || u == "k"; };
  if (is_temp(from) || is_temp(to)) {
    if (!(is_temp(from) && is_temp(to))) throw ExecutionFailure("cannot convert between " + from + " and " + to);
    return from_kelvin(to_kelvin(value, from), to);
  }
  const auto& units = linear_units();
  auto f = units.find(from);
  auto t = units.find(to);
  if (f == units.end() || t == units.end()) throw ExecutionFailure("unsupported unit");
  if (f->second.dimension != t->second.dimension) {
    throw ExecutionFailure("cannot convert " + f->second.dimension + " to " + t->second.dimension);
  }
  return value * f->second.factor / t->second.factor;
}

Json date_calculator(const Json& args) {
  using namespace std::chrono;
  const std::string base = args.at("base").get<std::string>();
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  char dash1 = 0;
  char dash2 = 0;
  std::istringstream in(base);
  if (base.size() != 10 || !(in >> y >> dash1 >> m >> dash2 >> d) || dash1 != '-' || dash2 != '-') {
    throw ExecutionFailure("base must be a date in YYYY-MM-DD form");
  }
  const year_month_day start{year{y}, month{m}, day{d}};
  if (!start.ok()) throw ExecutionFailure("'" + base + "' is not a valid calendar date");
  const year_month_day result{sys_days{start} + days{args.at("add_days").get<long long>()}};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(result.year()),
                static_cast<unsigned>(result.month()), static_cast<unsigned>(result.day()));
  return std::string(buf);
}

Json string_transformer(const Json& args) {
  std::string text = args.at("text").get<std::string>();
  const std::string op = args.at("operation").get<std::string>();
  if (op == "upper") {
    std::transform(text.begin(), text.end(), text.begin(), [](unsigned char c) { return std::toupper(c); });
    return text;
  }
  if (op == "lower") return to_lower(text);
  if (op == "reverse") return std::string(text.rbegin(), text.rend());
  if (op == "trim") return trim(text);
  if (op == "length") return std::to_string(text.size());
  if (op == "word_count") {
    std::istringstream words(text);
    std::size_t n = 0;
    for (std::string w; words >> w;) ++n;
    return std::to_string(n);
  }
  if (op == "title") {
    bool start = true;
    for (char& c : text) {
      const auto u = static_cast<unsigned char>(c);
      c = static_cast<char>(start ? std::toupper(u) : std::tolower(u));
      start = std::isspace(u) != 0;
    }
    return text;
  }
  throw ExecutionFailure("unsupported operation '" + op + "'");
}

// Breadth-first search on a character grid: 'S' start, 'E' exit, '#' wall.
Json maze_solver(const Json& args) {
  const auto rows = args.at("maze").get<std::vector<std::string>>();
  int sr = -1, sc = -1, er = -1, ec = -1;
  for (int r = 0; r < static_cast<int>(rows.size()); ++r) {
    for (int c = 0; c < static_cast<int>(rows[r].size()); ++c) {
      if (rows[r][c] == 'S') sr = r, sc = c;
      if (rows[r][c] == 'E') er = r, ec = c;
    }
  }
  if (sr < 0 || er < 0) throw ExecutionFailure("maze must contain one 'S' and one 'E'");
  auto open = [&](int r, int c) {
    return r >= 0 && r < static_cast<int>(rows.size()) && c >= 0 && c < static_cast<int>(rows[r].size()) &&
           rows[r][c] != '#';
  };
  struct Move {
    int dr, dc;
    char name;
  };
  constexpr Move kMoves[] = {{-1, 0, 'U'}, {1, 0, 'D'}, {0, -1, 'L'}, {0, 1, 'R'}};
  std::map<std::pair<int, int>, std::pair<std::pair<int, int>, char>> parent;
  std::deque<std::pair<int, int>> queue{{sr, sc}};
  parent[{sr, sc}] = {{-1, -1}, 0};
  while (!queue.empty()) {
    auto [r, c] = queue.front();
    queue.pop_front();
    if (r == er && c == ec) break;
    for (const auto& mv : kMoves) {
      const std::pair<int, int> next{r + mv.dr, c + mv.dc};
      if (!open(next.first, next.second) || parent.contains(next)) continue;
      parent[next] = {{r, c}, mv.name};
      queue.push_back(next);
    }
  }
  if (!parent.contains({er, ec})) return Json{{"solvable", false}, {"steps", 0}, {"path", ""}};
  std::string path;
  for (std::pair<int, int> at{er, ec}; at != std::pair<int, int>{sr, sc}; at = parent[at].first) {
    path.push_back(parent[at].second);
  }
  std::reverse(path.begin(), path.end());
  return Json{{"solvable", true}, {"steps", path.size()}, {"path", path}};
}

}  // namespace

ProgramCatalog builtin_programs() {
  ProgramCatalog catalog;
  catalog.add("calculator", calculator);
  catalog.add("unit_converter", unit_converter);
  catalog.add("date_calculator", date_calculator);
  catalog.add("string_transformer", string_transformer);
  catalog.add("maze_solver", maze_solver);
  return catalog;
}

}  // namespace toolhub::runtime
