#include "demi/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "demi/errors.hpp"

namespace demi::oracles {

namespace {

constexpr int kFormatVersion = 1;

// log N(v; mean, var) without the 2 pi constant, which cancels in every
// ratio below.
double log_gauss(double v, double mean, double var, double half_log_var) {
  const double d = v - mean;
  return -0.5 * d * d / var - half_log_var;
}

double log_sum_exp(const std::vector<double>& l) {
  const double m = *std::max_element(l.begin(), l.end());
  double acc = 0.0;
  for (double v : l) acc += std::exp(v - m);
  return m + std::log(acc);
}

/// Index drawn from the categorical with the given cumulative weights.
std::size_t draw_index(const std::vector<double>& cumulative, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, cumulative.back());
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u(rng));
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()),
                               cumulative.size() - 1);
}

/// Cumulative normalized weights exp(l - max(l)).
std::vector<double> cumulative_weights(const std::vector<double>& log_w) {
  const double m = *std::max_element(log_w.begin(), log_w.end());
  std::vector<double> c(log_w.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < log_w.size(); ++i) {
    acc += std::exp(log_w[i] - m);
    c[i] = acc;
  }
  return c;
}

}  // namespace

std::string OracleReport::to_json_line() const {
  nlohmann::json j;
  j["format_version"] = kFormatVersion;
  j["quantity"] = quantity;
  j["value"] = value;
  j["stderr"] = std_error;
  j["n"] = n;
  j["reference"] = reference;
  j["tolerance"] = tolerance;
  j["pass"] = pass;
  return j.dump();
}

OracleReport make_report(std::string quantity, double value, double std_error, std::size_t n,
                         double reference, double tolerance) {
  OracleReport r{std::move(quantity), value, std_error, n, reference, tolerance, false};
  r.pass = std::isfinite(value) && std::abs(value - reference) <= tolerance;
  return r;
}

MeanStderr mean_stderr(const std::vector<double>& v) {
  MeanStderr out;
  if (v.empty()) return out;
  double sum = 0.0;
  for (double x : v) sum += x;
  out.mean = sum / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.std_error = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return out;
}

std::string to_string(MiKind k) {
  switch (k) {
    case MiKind::joint: return "joint";
    case MiKind::marginal: return "marginal";
    case MiKind::conditional: return "conditional";
  }
  return "unknown";
}

OracleReport mc_mi(const GaussianWorld& world, MiKind which, std::size_t n, Rng& rng) {
  if (n < 1000) throw ConfigError("mc_mi: n must be >= 1000");
  const JointSamples s = world.sample_joint(n, rng);
  std::vector<double> pmi(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto i = static_cast<Eigen::Index>(r);
    const double psi = world.optimal_psi(s.xp.row(i), s.y.row(i));
    const double phi = world.optimal_phi(s.xp.row(i), s.x.row(i), s.y.row(i));
    pmi[r] = which == MiKind::marginal ? psi : which == MiKind::conditional ? phi : psi + phi;
  }
  const auto ms = mean_stderr(pmi);
  const double ref = which == MiKind::joint      ? world.mi_joint()
                     : which == MiKind::marginal ? world.mi_marg()
                                                 : world.mi_cond();
  return make_report("mc_mi/" + to_string(which), ms.mean, ms.std_error, n, ref, 3.0 * ms.std_error);
}

OracleReport mc_chain_rule(const GaussianWorld& world, std::size_t n, Rng& rng) {
  if (n < 1000) throw ConfigError("mc_chain_rule: n must be >= 1000");
  const JointSamples s = world.sample_joint(n, rng);
  std::vector<double> gap(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto i = static_cast<Eigen::Index>(r);
    gap[r] = world.optimal_joint(s.x.row(i), s.xp.row(i), s.y.row(i)) -
             world.optimal_psi(s.xp.row(i), s.y.row(i)) -
             world.optimal_phi(s.xp.row(i), s.x.row(i), s.y.row(i));
  }
  const auto ms = mean_stderr(gap);
  return make_report("mc_chain_rule", ms.mean, ms.std_error, n, 0.0, 3.0 * ms.std_error + 1e-12);
}

GaussianLogRatios::GaussianLogRatios(const GaussianWorld& world) {
  for (std::size_t i = 0; i < world.dims(); ++i) {
    const Eigen::Matrix3d& s = world.cov(i).matrix();
    Dim d{};
    d.var_y = s(2, 2);
    d.b_xp = s(1, 2) / s(1, 1);
    d.var_xp = s(2, 2) - s(1, 2) * s(1, 2) / s(1, 1);
    const Eigen::Matrix2d a = s.topLeftCorner<2, 2>();
    const Eigen::Vector2d c = s.block<2, 1>(0, 2);
    const Eigen::Vector2d coef = a.ldlt().solve(c);
    d.c_x = coef(0);
    d.c_xp = coef(1);
    d.var_joint = s(2, 2) - c.dot(coef);
    d.h_xp = 0.5 * std::log(d.var_xp);
    d.h_joint = 0.5 * std::log(d.var_joint);
    d.h_y = 0.5 * std::log(d.var_y);
    dims_.push_back(d);
  }
}

double GaussianLogRatios::unconditional(const RowRef& xp, const RowRef& y) const {
  double t = 0.0;
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    const auto& d = dims_[i];
    const auto k = static_cast<Eigen::Index>(i);
    t += log_gauss(y(k), d.b_xp * xp(k), d.var_xp, d.h_xp) -
         log_gauss(y(k), 0.0, d.var_y, d.h_y);
  }
  return t;
}

double GaussianLogRatios::conditional(const RowRef& x, const RowRef& xp, const RowRef& y) const {
  double t = 0.0;
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    const auto& d = dims_[i];
    const auto k = static_cast<Eigen::Index>(i);
    t += log_gauss(y(k), d.c_x * x(k) + d.c_xp * xp(k), d.var_joint, d.h_joint) -
         log_gauss(y(k), d.b_xp * xp(k), d.var_xp, d.h_xp);
  }
  return t;
}

double GaussianLogRatios::total(const RowRef& x, const RowRef& xp, const RowRef& y) const {
  double t = 0.0;
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    const auto& d = dims_[i];
    const auto k = static_cast<Eigen::Index>(i);
    t += log_gauss(y(k), d.c_x * x(k) + d.c_xp * xp(k), d.var_joint, d.h_joint) -
         log_gauss(y(k), 0.0, d.var_y, d.h_y);
  }
  return t;
}

std::string to_string(BoundKind k) {
  switch (k) {
    case BoundKind::nce: return "nce";
    case BoundKind::nce_marginal: return "nce_marginal";
    case BoundKind::cnce: return "cnce";
    case BoundKind::importance: return "is";
    case BoundKind::boosted: return "bo";
    case BoundKind::sir: return "sir";
  }
  return "unknown";
}

OracleReport mc_bound(BoundKind kind, const GaussianWorld& world, std::size_t k,
                      std::size_t n_rows, double tolerance, Rng& rng, BoundOracleOptions opts) {
  if (k < 1) throw ConfigError("mc_bound: K must be >= 1");
  if (n_rows < 1) throw ConfigError("mc_bound: need at least one row");
  const GaussianLogRatios lr(world);
  const std::size_t pool_size = opts.sir_pool ? opts.sir_pool : 10 * k;
  if (kind == BoundKind::sir && pool_size < k) throw ConfigError("mc_bound: SIR pool smaller than K");
  const double log_k = std::log(static_cast<double>(k));
  const auto neg = static_cast<std::size_t>(k - 1);

  std::vector<double> values;
  values.reserve(n_rows);
  std::vector<double> l(k), psi_neg(neg), terms;
  const std::size_t chunk = 1000;
  for (std::size_t done = 0; done < n_rows; done += chunk) {
    const std::size_t rows = std::min(chunk, n_rows - done);
    const JointSamples s = world.sample_joint(rows, rng);
    for (std::size_t r = 0; r < rows; ++r) {
      const auto i = static_cast<Eigen::Index>(r);
      const auto x = s.x.row(i), xp = s.xp.row(i), y = s.y.row(i);
      Matrix cands;
      if (kind == BoundKind::cnce) {
        cands = world.sample_y_given_xp(xp, neg, rng);
      } else if (kind == BoundKind::sir) {
        const Matrix pool = world.sample_marginal_y(pool_size, rng);
        std::vector<double> log_w(pool_size);
        for (std::size_t m = 0; m < pool_size; ++m)
          log_w[m] = lr.unconditional(xp, pool.row(static_cast<Eigen::Index>(m)));
        const auto cum = cumulative_weights(log_w);
        cands.resize(static_cast<Eigen::Index>(neg), pool.cols());
        for (std::size_t j = 0; j < neg; ++j)
          cands.row(static_cast<Eigen::Index>(j)) = pool.row(static_cast<Eigen::Index>(draw_index(cum, rng)));
      } else {
        cands = world.sample_marginal_y(neg, rng);
      }

      const auto score = [&](const RowRef& c) {
        switch (kind) {
          case BoundKind::nce: return lr.total(x, xp, c);
          case BoundKind::nce_marginal: return lr.unconditional(xp, c);
          case BoundKind::boosted: return lr.unconditional(xp, c) + lr.conditional(x, xp, c);
          default: return lr.conditional(x, xp, c);
        }
      };
      l[0] = score(y);
      for (std::size_t j = 0; j < neg; ++j) l[j + 1] = score(cands.row(static_cast<Eigen::Index>(j)));

      if (kind == BoundKind::importance && neg > 0) {
        // log[(1/K)(e^{l_1} + (K-1) sum_k w_k e^{l_k})], w = softmax(psi*) over negatives.
        for (std::size_t j = 0; j < neg; ++j)
          psi_neg[j] = lr.unconditional(xp, cands.row(static_cast<Eigen::Index>(j)));
        const double log_norm = log_sum_exp(psi_neg);
        terms.assign(1, l[0]);
        for (std::size_t j = 0; j < neg; ++j)
          terms.push_back(std::log(static_cast<double>(neg)) + (psi_neg[j] - log_norm) + l[j + 1]);
        values.push_back(l[0] - (log_sum_exp(terms) - log_k));
      } else {
        values.push_back(l[0] - (log_sum_exp(l) - log_k));
      }
    }
  }
  const auto ms = mean_stderr(values);
  const bool conditional_target = kind == BoundKind::cnce || kind == BoundKind::importance ||
                                  kind == BoundKind::sir;
  const double target = conditional_target              ? world.mi_cond()
                        : kind == BoundKind::nce_marginal ? world.mi_marg()
                                                          : world.mi_joint();
  return make_report("mc_bound/" + to_string(kind) + "/K=" + std::to_string(k), ms.mean,
                     ms.std_error, n_rows, std::min(target, log_k), tolerance);
}

SirMomentReport sir_moment_check(const GaussianWorld& world, std::size_t m, std::size_t k,
                                 std::size_t n_anchor, double tolerance, Rng& rng) {
  const GaussianLogRatios lr(world);
  return sir_moment_check(
      world, [&lr](const RowRef& xp, const RowRef& y) { return lr.unconditional(xp, y); }, m, k,
      n_anchor, tolerance, rng);
}

SirMomentReport sir_moment_check(const GaussianWorld& world,
                                 const std::function<double(const RowRef&, const RowRef&)>& log_w,
                                 std::size_t m, std::size_t k, std::size_t n_anchor,
                                 double tolerance, Rng& rng, Proposal target) {
  if (k < 1 || m < 10 * k) throw ConfigError("sir_moment_check: need M >= 10 K and K >= 1");
  if (n_anchor < 1) throw ConfigError("sir_moment_check: need at least one anchor");
  const auto d = static_cast<Eigen::Index>(world.dims());
  Vector mean(d), sd(d);
  double sum = 0.0, sum_sq = 0.0;
  std::size_t count = 0;
  std::vector<double> lw(m);
  for (std::size_t a = 0; a < n_anchor; ++a) {
    const RowVector xp = world.sample_joint(1, rng).xp.row(0);
    for (Eigen::Index i = 0; i < d; ++i) {
      const Eigen::Matrix3d& s = world.cov(static_cast<std::size_t>(i)).matrix();
      if (target == Proposal::conditional) {
        mean(i) = s(1, 2) / s(1, 1) * xp(i);
        sd(i) = std::sqrt(s(2, 2) - s(1, 2) * s(1, 2) / s(1, 1));
      } else {
        mean(i) = 0.0;
        sd(i) = std::sqrt(s(2, 2));
      }
    }
    const Matrix pool = world.sample_marginal_y(m, rng);
    for (std::size_t j = 0; j < m; ++j) lw[j] = log_w(xp, pool.row(static_cast<Eigen::Index>(j)));
    const auto cum = cumulative_weights(lw);
    for (std::size_t j = 0; j < k; ++j) {
      const auto row = pool.row(static_cast<Eigen::Index>(draw_index(cum, rng)));
      for (Eigen::Index i = 0; i < d; ++i) {
        const double z = (row(i) - mean(i)) / sd(i);
        sum += z;
        sum_sq += z * z;
        ++count;
      }
    }
  }
  const double n = static_cast<double>(count);
  const double mz = sum / n;
  const double vz = sum_sq / n - mz * mz;
  SirMomentReport out;
  out.mean = make_report("sir_moment/mean_z", mz, std::sqrt(std::max(vz, 0.0) / n), count, 0.0, tolerance);
  out.variance = make_report("sir_moment/var_z", vz, std::sqrt(2.0 / n), count, 1.0, tolerance);
  return out;
}

OracleReport normalization_check(
    const GaussianWorld& world,
    const std::function<double(const RowRef& x, const RowRef& xp, const RowRef& y)>& critic,
    Proposal proposal, std::size_t k, std::size_t trials, Rng& rng, std::string name) {
  if (trials < 10000) throw ConfigError("normalization_check: trials must be >= 10^4");
  if (k < 1) throw ConfigError("normalization_check: K must be >= 1");
  std::vector<double> v(trials), l(k);
  for (std::size_t t = 0; t < trials; ++t) {
    const JointSamples anchor = world.sample_joint(1, rng);
    const auto x = anchor.x.row(0), xp = anchor.xp.row(0);
    const Matrix cands = proposal == Proposal::marginal ? world.sample_marginal_y(k, rng)
                                                        : world.sample_y_given_xp(xp, k, rng);
    for (std::size_t j = 0; j < k; ++j) l[j] = critic(x, xp, cands.row(static_cast<Eigen::Index>(j)));
    const double top = *std::max_element(l.begin(), l.end());
    double acc = 0.0;
    for (double s : l) acc += std::exp(s - top);
    v[t] = static_cast<double>(k) * std::exp(l[0] - top) / acc;
  }
  const auto ms = mean_stderr(v);
  return make_report(std::move(name), ms.mean, ms.std_error, trials, 1.0, 3.0 * ms.std_error);
}

}  // namespace demi::oracles
