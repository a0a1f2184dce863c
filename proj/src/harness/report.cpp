#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <tuple>

#include "demi/errors.hpp"
#include "demi/estimators/bounds.hpp"
#include "demi/harness.hpp"

namespace demi::harness {

namespace {

constexpr double kCapSlack = 1e-9;

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string column_label(const CsvRow& r) {
  return r.critic_mode == "learned" ? r.estimator : r.estimator + " (" + r.critic_mode + ")";
}

}  // namespace

std::vector<CapViolation> check_caps(const std::vector<CsvRow>& rows) {
  std::vector<CapViolation> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (!std::isfinite(r.bound_nats)) {
      out.push_back({i + 1, "non-finite bound"});
      continue;
    }
    if (r.bound_nats > r.cap_nats + kCapSlack)
      out.push_back({i + 1, r.estimator + " K=" + std::to_string(r.k) + ": bound " +
                                fmt("%.6f", r.bound_nats) + " exceeds cap " +
                                fmt("%.6f", r.cap_nats)});
    try {
      const double expected = estimate_cap(parse_estimator_kind(r.estimator), r.k);
      if (std::abs(expected - r.cap_nats) > kCapSlack)
        out.push_back({i + 1, r.estimator + " K=" + std::to_string(r.k) + ": cap_nats " +
                                  fmt("%.6f", r.cap_nats) + " differs from " +
                                  fmt("%.6f", expected)});
    } catch (const ConfigError&) {
      // Unknown estimator names only get the bound check.
    }
  }
  return out;
}

std::string render_report(const std::vector<CsvRow>& rows) {
  // Last step of every run.
  using RunKey = std::tuple<double, std::string, std::size_t, std::size_t, std::uint64_t>;
  std::map<RunKey, const CsvRow*> last;
  for (const auto& r : rows) {
    const RunKey key{r.target_mi, column_label(r), r.dims, r.k, r.seed};
    auto it = last.find(key);
    if (it == last.end() || it->second->step <= r.step) last[key] = &r;
  }

  std::map<double, std::map<std::size_t, std::map<std::string, std::vector<double>>>> cells;
  std::map<double, std::set<std::string>> labels;
  for (const auto& [key, row] : last) {
    cells[row->target_mi][row->k][column_label(*row)].push_back(row->bound_nats);
    labels[row->target_mi].insert(column_label(*row));
  }

  std::string s;
  for (const auto& [mi, by_k] : cells) {
    if (!s.empty()) s += '\n';
    s += "## target MI " + fmt("%g", mi) + " nats\n\n| K |";
    for (const auto& l : labels[mi]) s += ' ' + l + " |";
    s += " log K | 2 log(K/2) | 2 log K |\n|---|";
    for (std::size_t i = 0; i < labels[mi].size() + 3; ++i) s += "---|";
    s += '\n';
    for (const auto& [k, by_label] : by_k) {
      s += "| " + std::to_string(k) + " |";
      for (const auto& l : labels[mi]) {
        const auto it = by_label.find(l);
        if (it == by_label.end()) {
          s += " |";
          continue;
        }
        const auto& v = it->second;
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double se = 0.0;
        if (v.size() > 1) {
          double ss = 0.0;
          for (double x : v) ss += (x - mean) * (x - mean);
          se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
        }
        s += ' ' + fmt("%.3f", mean) + " ± " + fmt("%.3f", se) + " (n=" +
             std::to_string(v.size()) + ") |";
      }
      const std::string split = k >= 2 ? fmt("%.3f", split_cap(k)) : std::string("n/a");
      s += ' ' + fmt("%.3f", single_cap(k)) + " | " + split + " | " + fmt("%.3f", shared_cap(k)) +
           " |\n";
    }
  }
  return s;
}

}  // namespace demi::harness
