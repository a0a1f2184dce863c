#include "demi/cov_search.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "demi/errors.hpp"

namespace demi {

namespace {

constexpr double kMinPivot = 1e-10;

}  // namespace

void CovarianceTarget::validate() const {
  if (!(total_mi > 0.0)) throw ConfigError("target: total_mi must be positive");
  if (per_dim_mi.empty()) throw ConfigError("target: no dimensions");
  if (per_dim_alpha.size() != per_dim_mi.size())
    throw ConfigError("target: per_dim_alpha and per_dim_mi differ in length");
  double sum = 0.0;
  for (double m : per_dim_mi) {
    if (!(m > 0.0)) throw ConfigError("target: per-dimension MI must be positive");
    sum += m;
  }
  if (std::abs(sum - total_mi) > 1e-9) throw ConfigError("target: per-dimension MI must sum to total");
  for (double a : per_dim_alpha) {
    if (!(a > 0.1 && a < 0.9)) throw ConfigError("target: alpha must lie in (0.1, 0.9)");
  }
}

std::vector<double> split_total_mi(double total_mi, std::size_t d, Rng& rng) {
  if (!(total_mi > 0.0)) throw ConfigError("split_total_mi: total must be positive");
  if (d == 0) throw ConfigError("split_total_mi: need at least one dimension");
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> w(d);
  for (auto& v : w) {
    do {
      v = expo(rng);
    } while (!(v > 0.0));
  }
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& v : w) v = total_mi * (v / sum);
  return w;
}

TriCov project_posdef(const CovParams& params) {
  for (double p : params) {
    if (!std::isfinite(p)) throw DegenerateParams("project_posdef: non-finite parameter");
  }
  Eigen::Matrix3d l = Eigen::Matrix3d::Zero();
  l(0, 0) = params[0];
  l(1, 0) = params[1];
  l(1, 1) = params[2];
  l(2, 0) = params[3];
  l(2, 1) = params[4];
  l(2, 2) = params[5];
  for (int r = 0; r < 3; ++r) {
    const double norm = l.row(r).norm();
    if (!(norm > 0.0)) throw DegenerateParams("project_posdef: zero row in factor");
    l.row(r) /= norm;
    if (!(std::abs(l(r, r)) > kMinPivot)) throw DegenerateParams("project_posdef: zero pivot");
  }
  Eigen::Matrix3d cov = l * l.transpose();
  // Rows have unit norm; pin the diagonal to exactly 1 and symmetrize.
  cov = 0.5 * (cov + cov.transpose()).eval();
  cov.diagonal().setOnes();
  try {
    return TriCov(cov);
  } catch (const InvariantError& e) {
    throw DegenerateParams(std::string("project_posdef: ") + e.what());
  }
}

double residual(const CovParams& params, double mi, double alpha) {
  try {
    const TriMi got = analytical_mi(project_posdef(params));
    const double a = got.joint - mi;
    const double b = got.marginal - alpha * mi;
    return a * a + b * b;
  } catch (const DegenerateParams&) {
    return std::numeric_limits<double>::infinity();
  } catch (const InvariantError&) {
    return std::numeric_limits<double>::infinity();
  }
}

CovFit fit_cov(double mi, double alpha, Rng& rng, const CovSearchOptions& opts) {
  if (!(mi > 0.0)) throw ConfigError("sample_cov: mi must be positive");
  const double goal = opts.tol * opts.tol;
  std::normal_distribution<double> normal;
  CovFit best;
  best.alpha = alpha;
  best.residual = std::numeric_limits<double>::infinity();
  CovParams best_params{};

  const auto objective = [&](const std::vector<double>& v) {
    CovParams p;
    std::copy(v.begin(), v.end(), p.begin());
    return residual(p, mi, alpha);
  };

  for (std::size_t attempt = 0; attempt < opts.restarts; ++attempt) {
    std::vector<double> start(6);
    for (auto& s : start) s = normal(rng);
    const NelderMeadResult r = nelder_mead(objective, start, opts.nelder_mead);
    if (r.f < best.residual) {
      best.residual = r.f;
      std::copy(r.x.begin(), r.x.end(), best_params.begin());
    }
    best.best_residual_history.push_back(best.residual);
    if (best.residual < goal) {
      best.cov = project_posdef(best_params);
      return best;
    }
  }
  throw TargetUnreachable("sample_cov: target unreachable at tolerance", best.residual);
}

CovFit sample_cov(double mi, Rng& rng, const CovSearchOptions& opts) {
  std::uniform_real_distribution<double> uniform(0.1, 0.9);
  double alpha = uniform(rng);
  // The open interval excludes its lower end.
  while (!(alpha > 0.1)) alpha = uniform(rng);
  return fit_cov(mi, alpha, rng, opts);
}

CovarianceTarget make_target(double total_mi, std::size_t d, Rng& rng) {
  CovarianceTarget t;
  t.total_mi = total_mi;
  t.per_dim_mi = split_total_mi(total_mi, d, rng);
  std::uniform_real_distribution<double> uniform(0.1, 0.9);
  t.per_dim_alpha.resize(d);
  for (auto& a : t.per_dim_alpha) {
    do {
      a = uniform(rng);
    } while (!(a > 0.1));
  }
  // Normalized weights may miss the total by an ulp or two; push the
  // remainder into the largest entry.
  const double sum = std::accumulate(t.per_dim_mi.begin(), t.per_dim_mi.end(), 0.0);
  auto largest = std::max_element(t.per_dim_mi.begin(), t.per_dim_mi.end());
  *largest += total_mi - sum;
  return t;
}

GaussianWorld build_world(const CovarianceTarget& target, std::uint64_t seed,
                          const CovSearchOptions& opts) {
  target.validate();
  std::vector<TriCov> covs;
  covs.reserve(target.per_dim_mi.size());
  for (std::size_t i = 0; i < target.per_dim_mi.size(); ++i) {
    Rng rng(derive_seed(seed, "cov_search/dim", i));
    try {
      covs.push_back(fit_cov(target.per_dim_mi[i], target.per_dim_alpha[i], rng, opts).cov);
    } catch (const TargetUnreachable& e) {
      throw TargetUnreachable("build_world: dimension " + std::to_string(i) + ": " + e.what(),
                              e.best_residual(), static_cast<long>(i));
    }
  }
  WorldMetadata meta;
  meta.target_mi = target.total_mi;
  meta.per_dim_mi = target.per_dim_mi;
  meta.per_dim_alpha = target.per_dim_alpha;
  meta.seed = seed;
  return GaussianWorld(std::move(covs), std::move(meta));
}

GaussianWorld synthesize_world(double total_mi, std::size_t d, std::uint64_t seed,
                               const CovSearchOptions& opts) {
  Rng rng(derive_seed(seed, {"cov_search", "target"}));
  return build_world(make_target(total_mi, d, rng), seed, opts);
}

}  // namespace demi
