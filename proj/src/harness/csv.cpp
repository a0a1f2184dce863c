#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <tuple>

#include "demi/errors.hpp"
#include "demi/harness.hpp"

namespace demi::harness {

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(std::string_view s, std::size_t line, const char* column) {
  T v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw ConfigError("csv line " + std::to_string(line) + ": bad " + column + " '" +
                      std::string(s) + "'");
  return v;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = {
      "estimator", "critic_mode", "target_mi", "dims", "K", "step",
      "bound_nats", "stderr_nats", "cap_nats", "seed", "wall_ms"};
  return cols;
}

std::string csv_header() {
  std::string h;
  for (const auto& c : csv_columns()) h += (h.empty() ? "" : ",") + c;
  return h;
}

std::string to_csv_line(const CsvRow& r) {
  std::string s;
  s += r.estimator + ',' + r.critic_mode + ',' + format_double(r.target_mi) + ',';
  s += std::to_string(r.dims) + ',' + std::to_string(r.k) + ',' + std::to_string(r.step) + ',';
  s += format_double(r.bound_nats) + ',' + format_double(r.stderr_nats) + ',';
  s += format_double(r.cap_nats) + ',' + std::to_string(r.seed) + ',' + format_double(r.wall_ms);
  return s;
}

std::vector<CsvRow> parse_csv(const std::string& text) {
  std::vector<CsvRow> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != csv_header()) throw ConfigError("csv line 1: unexpected header '" + line + "'");
      header_seen = true;
      continue;
    }
    const auto f = split(line);
    if (f.size() != csv_columns().size())
      throw ConfigError("csv line " + std::to_string(n) + ": expected " +
                        std::to_string(csv_columns().size()) + " fields, got " +
                        std::to_string(f.size()));
    CsvRow r;
    r.estimator = std::string(f[0]);
    r.critic_mode = std::string(f[1]);
    if (r.estimator.empty()) throw ConfigError("csv line " + std::to_string(n) + ": empty estimator");
    r.target_mi = parse_number<double>(f[2], n, "target_mi");
    r.dims = parse_number<std::size_t>(f[3], n, "dims");
    r.k = parse_number<std::size_t>(f[4], n, "K");
    r.step = parse_number<std::size_t>(f[5], n, "step");
    r.bound_nats = parse_number<double>(f[6], n, "bound_nats");
    r.stderr_nats = parse_number<double>(f[7], n, "stderr_nats");
    r.cap_nats = parse_number<double>(f[8], n, "cap_nats");
    r.seed = parse_number<std::uint64_t>(f[9], n, "seed");
    r.wall_ms = parse_number<double>(f[10], n, "wall_ms");
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<CsvRow> read_csv(const std::string& path) { return parse_csv(slurp(path)); }

void append_csv(const std::string& path, const std::vector<CsvRow>& rows) {
  bool fresh = true;
  if (std::filesystem::exists(path) && std::filesystem::file_size(path) > 0) {
    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    if (!first.empty() && first.back() == '\r') first.pop_back();
    if (first != csv_header()) throw ConfigError(path + ": existing file has a different header");
    fresh = false;
  }
  std::ofstream f(path, std::ios::app | std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path);
  if (fresh) f << csv_header() << '\n';
  for (const auto& r : rows) f << to_csv_line(r) << '\n';
}

void write_csv(const std::string& path, const std::vector<CsvRow>& rows) {
  std::ofstream f(path, std::ios::trunc | std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path);
  f << csv_header() << '\n';
  for (const auto& r : rows) f << to_csv_line(r) << '\n';
}

std::vector<CsvRow> curve_rows(const RunConfig& config, const TrainResult& result,
                               bool with_wall_time) {
  std::vector<CsvRow> rows;
  for (const auto& p : result.curve) {
    CsvRow r;
    r.estimator = to_string(config.estimator);
    r.critic_mode = to_string(config.critic);
    r.target_mi = config.target_mi;
    r.dims = config.dims;
    r.k = config.k;
    r.step = p.step;
    r.bound_nats = p.estimate.mean;
    r.stderr_nats = p.estimate.std_error;
    r.cap_nats = p.estimate.cap;
    r.seed = config.seed;
    r.wall_ms = with_wall_time ? p.wall_ms : 0.0;
    rows.push_back(std::move(r));
  }
  return rows;
}

bool sweep_order(const CsvRow& a, const CsvRow& b) {
  return std::tie(a.estimator, a.target_mi, a.k, a.seed, a.critic_mode, a.dims, a.step) <
         std::tie(b.estimator, b.target_mi, b.k, b.seed, b.critic_mode, b.dims, b.step);
}

}  // namespace demi::harness
