#include "toolhub/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>

namespace toolhub::store {

namespace {

Json parse_file(const fs::path& path) {
  Json doc = Json::parse(read_file(path), nullptr, false);
  if (doc.is_discarded()) throw StoreError(path.string() + ": not a valid JSON document");
  return doc;
}

std::string describe(const std::vector<Violation>& vs) {
  std::string out;
  for (const auto& v : vs) out += (out.empty() ? "" : "; ") + (v.field.empty() ? "" : v.field + ": ") + v.reason;
  return out;
}

std::vector<fs::path> json_files(const fs::path& dir, const std::string& ext = ".json") {
  std::vector<fs::path> out;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Largest N among files named <prefix>NNNNNN<ext>.
std::int64_t max_sequence(const fs::path& dir, const std::string& prefix, const std::string& ext) {
  std::int64_t best = 0;
  for (const auto& p : json_files(dir, ext)) {
    const std::string stem = p.stem().string();
    if (stem.rfind(prefix, 0) != 0) continue;
    if (auto n = parse_number(stem.substr(prefix.size()))) best = std::max(best, static_cast<std::int64_t>(*n));
  }
  return best;
}

bool safe_id(const std::string& id) {
  return !id.empty() && id.find('/') == std::string::npos && id.find('\\') == std::string::npos &&
         id.find("..") == std::string::npos;
}

}  // namespace

FileStore::FileStore(fs::path root) : root_(std::move(root)) {}

void FileStore::initialize(const fs::path& root, const fs::path& seed_dir, bool overwrite) {
  std::error_code ec;
  if (!fs::is_directory(seed_dir, ec)) throw StoreError("seed directory not found: " + seed_dir.string());
  fs::create_directories(root);
  const auto opts = fs::copy_options::recursive |
                    (overwrite ? fs::copy_options::overwrite_existing : fs::copy_options::skip_existing);
  fs::copy(seed_dir, root, opts);
  for (const char* sub : {"tools", "bindings", "tests", "state/checks", "state/profiles", "state/submissions",
                          "state/traces/blobs", "state/runs"}) {
    fs::create_directories(root / sub);
  }
}

bool FileStore::is_initialized(const fs::path& root) {
  std::error_code ec;
  return fs::is_directory(root / "tools", ec) && fs::is_directory(root / "state", ec);
}

// --- Tools -------------------------------------------------------------------

std::vector<StoredTool> FileStore::load_tools() const {
  std::vector<StoredTool> out;
  for (const auto& path : json_files(root_ / "tools")) {
    auto d = schema::validate_manifest(std::string_view(read_file(path)));
    if (!d) throw StoreError(path.string() + ": " + describe(d.error()));
    const fs::path bpath = root_ / "bindings" / (d->name + ".json");
    std::error_code ec;
    if (!fs::exists(bpath, ec)) throw StoreError(bpath.string() + ": missing binding for tool " + d->name);
    auto b = runtime::parse_binding(parse_file(bpath));
    if (!b) throw StoreError(bpath.string() + ": " + describe(b.error()));
    out.push_back({std::move(d.value()), std::move(b.value())});
  }
  return out;
}

void FileStore::save_tool(const schema::ToolDescriptor& descriptor, const runtime::ToolBinding& binding) {
  schema::ToolDescriptor stored = descriptor;
  stored.accuracy_summary.reset();  // derived from the round log, never persisted
  write_file_atomic(root_ / "bindings" / (descriptor.name + ".json"), runtime::to_json(binding).dump(2) + "\n");
  write_file_atomic(root_ / "tools" / (descriptor.name + ".json"), schema::canonical_serialize(stored));
}

// --- Cases -------------------------------------------------------------------

std::vector<verification::TestCase> FileStore::load_cases(const std::string& tool) const {
  const fs::path path = root_ / "tests" / (tool + ".json");
  std::error_code ec;
  if (!fs::exists(path, ec)) return {};
  const Json doc = parse_file(path);
  if (!doc.is_array()) throw StoreError(path.string() + ": expected an array of test cases");
  std::vector<verification::TestCase> cases;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    auto c = verification::parse_test_case(doc[i], tool);
    if (!c) throw StoreError(path.string() + " [" + std::to_string(i) + "]: " + describe(c.error()));
    cases.push_back(std::move(c.value()));
  }
  return cases;
}

std::map<std::string, std::vector<verification::TestCase>> FileStore::load_all_cases() const {
  std::map<std::string, std::vector<verification::TestCase>> out;
  for (const auto& path : json_files(root_ / "tests")) {
    const std::string tool = path.stem().string();
    out[tool] = load_cases(tool);
  }
  return out;
}

void FileStore::save_cases(const std::string& tool, const std::vector<verification::TestCase>& cases) {
  Json doc = Json::array();
  for (const auto& c : cases) doc.push_back(verification::to_json(c));
  write_file_atomic(root_ / "tests" / (tool + ".json"), doc.dump(2) + "\n");
}

// --- Rounds ------------------------------------------------------------------

void FileStore::append_line(const fs::path& path, const std::string& line) {
  fs::create_directories(path.parent_path());
  std::error_code ec;
  if (fs::exists(path, ec)) {
    // Drop the tail of an interrupted append so the new line starts clean.
    const std::string content = read_file(path);
    if (!content.empty() && content.back() != '\n') {
      const auto last_nl = content.rfind('\n');
      fs::resize_file(path, last_nl == std::string::npos ? 0 : last_nl + 1);
    }
  }
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw StoreError("cannot open " + path.string());
  const std::string data = line + "\n";
  const auto written = ::write(fd, data.data(), data.size());
  const bool synced = ::fsync(fd) == 0;
  ::close(fd);
  if (written != static_cast<ssize_t>(data.size()) || !synced) throw StoreError("short append to " + path.string());
}

std::vector<Json> FileStore::read_jsonl(const fs::path& path) {
  std::vector<Json> out;
  std::error_code ec;
  if (!fs::exists(path, ec)) return out;
  const std::string content = read_file(path);
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < content.size()) {
    const auto nl = content.find('\n', pos);
    if (nl == std::string::npos) break;  // interrupted append
    ++line_no;
    const std::string_view line(content.data() + pos, nl - pos);
    pos = nl + 1;
    if (trim(line).empty()) continue;
    Json j = Json::parse(line.begin(), line.end(), nullptr, false);
    if (j.is_discarded()) throw StoreError(path.string() + ": line " + std::to_string(line_no) + " is corrupt");
    out.push_back(std::move(j));
  }
  return out;
}

std::vector<reliability::EvaluationRound> FileStore::load_rounds() const {
  std::vector<reliability::EvaluationRound> rounds;
  for (const auto& j : read_jsonl(state_dir() / "rounds.jsonl")) {
    try {
      rounds.push_back(reliability::round_from_json(j));
    } catch (const std::exception& e) {
      throw StoreError("rounds.jsonl: malformed round: " + std::string(e.what()));
    }
  }
  return rounds;
}

std::optional<reliability::EvaluationRound> FileStore::load_round(std::int64_t round_id) const {
  for (auto& r : load_rounds()) {
    if (r.round_id == round_id) return r;
  }
  return std::nullopt;
}

std::map<std::string, std::vector<verification::CheckResult>> FileStore::load_checks(std::int64_t round_id) const {
  std::map<std::string, std::vector<verification::CheckResult>> out;
  if (!load_round(round_id)) return out;
  const fs::path path = state_dir() / "checks" / (std::to_string(round_id) + ".json");
  std::error_code ec;
  if (!fs::exists(path, ec)) return out;
  const Json doc = parse_file(path);
  for (const auto& [tool, results] : doc.items()) {
    for (const auto& r : results) out[tool].push_back(verification::check_result_from_json(r));
  }
  return out;
}

void FileStore::fault(std::string_view step) const {
  if (fault_hook_) fault_hook_(step);
}

void FileStore::commit_round(const reliability::EvaluationRound& round,
                             const std::map<std::string, std::vector<verification::CheckResult>>& checks,
                             const std::map<std::string, reliability::ReliabilityProfile>& profiles) {
  // Checks land first under the round's id; they are unreachable until the
  // round line is appended, and a retried round id overwrites them.
  fault("checks");
  Json checks_doc = Json::object();
  for (const auto& [tool, results] : checks) {
    Json arr = Json::array();
    for (const auto& r : results) arr.push_back(verification::to_json(r));
    checks_doc[tool] = std::move(arr);
  }
  write_file_atomic(state_dir() / "checks" / (std::to_string(round.round_id) + ".json"), checks_doc.dump(2) + "\n");

  fault("commit");
  append_line(state_dir() / "rounds.jsonl", reliability::to_json(round).dump());

  // Past the commit point the profiles are a cache; a failure here is repaired
  // by the next commit since reads rebuild from the log.
  try {
    fault("profiles");
    for (const auto& [tool, p] : profiles) {
      write_file_atomic(state_dir() / "profiles" / (tool + ".json"), reliability::to_json(p).dump(2) + "\n");
    }
  } catch (const std::exception&) {
  }
}

// --- Submissions -------------------------------------------------------------

std::vector<Json> FileStore::load_submissions() const {
  std::vector<Json> out;
  for (const auto& path : json_files(state_dir() / "submissions")) out.push_back(parse_file(path));
  return out;
}

std::optional<Json> FileStore::load_submission(const std::string& id) const {
  if (!safe_id(id)) return std::nullopt;
  const fs::path path = state_dir() / "submissions" / (id + ".json");
  std::error_code ec;
  if (!fs::exists(path, ec)) return std::nullopt;
  return parse_file(path);
}

void FileStore::save_submission(const std::string& id, const Json& doc) {
  write_file_atomic(state_dir() / "submissions" / (id + ".json"), doc.dump(2) + "\n");
}

std::string FileStore::next_submission_id() const {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sub-%06lld",
                static_cast<long long>(max_sequence(state_dir() / "submissions", "sub-", ".json") + 1));
  return buf;
}

void FileStore::append_audit(const Json& record) { append_line(state_dir() / "audit.jsonl", record.dump()); }

std::vector<Json> FileStore::load_audit() const { return read_jsonl(state_dir() / "audit.jsonl"); }

// --- Traces and runs ---------------------------------------------------------

void FileStore::save_trace(const trace::ExecutionTrace& t) {
  for (const auto& [digest, content] : t.blobs()) {
    write_file_atomic(state_dir() / "traces" / "blobs" / digest, content);
  }
  write_file_atomic(state_dir() / "traces" / (t.trace_id() + ".jsonl"), trace::serialize_jsonl(t));
}

std::optional<std::string> FileStore::load_trace_jsonl(const std::string& trace_id) const {
  if (!has_trace(trace_id)) return std::nullopt;
  return read_file(state_dir() / "traces" / (trace_id + ".jsonl"));
}

bool FileStore::has_trace(const std::string& trace_id) const {
  std::error_code ec;
  return safe_id(trace_id) && fs::exists(state_dir() / "traces" / (trace_id + ".jsonl"), ec);
}

std::optional<std::string> FileStore::load_blob(const std::string& digest) const {
  const fs::path path = state_dir() / "traces" / "blobs" / digest;
  std::error_code ec;
  if (!safe_id(digest) || !fs::exists(path, ec)) return std::nullopt;
  return read_file(path);
}

void FileStore::save_run(const std::string& run_id, const Json& doc) {
  write_file_atomic(state_dir() / "runs" / (run_id + ".json"), doc.dump(2) + "\n");
}

std::optional<Json> FileStore::load_run(const std::string& run_id) const {
  const fs::path path = state_dir() / "runs" / (run_id + ".json");
  std::error_code ec;
  if (!safe_id(run_id) || !fs::exists(path, ec)) return std::nullopt;
  return parse_file(path);
}

std::int64_t FileStore::next_run_number() const { return max_sequence(state_dir() / "runs", "run-", ".json") + 1; }

Json FileStore::load_backends() const {
  const fs::path path = root_ / "backends.json";
  std::error_code ec;
  if (!fs::exists(path, ec)) return Json::object();
  return parse_file(path);
}

std::optional<Json> FileStore::load_stub_routes() const {
  const fs::path path = root_ / "stub" / "routes.json";
  std::error_code ec;
  if (!fs::exists(path, ec)) return std::nullopt;
  return parse_file(path);
}

std::string hash_tree(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string acc;
  for (const auto& f : files) {
    acc += fs::relative(f, root).generic_string();
    acc += '\0';
    acc += sha256_hex(read_file(f));
    acc += '\n';
  }
  return sha256_hex(acc);
}

}  // namespace toolhub::store
