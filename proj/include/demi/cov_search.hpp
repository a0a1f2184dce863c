#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "demi/gaussian_world.hpp"
#include "demi/nelder_mead.hpp"
#include "demi/rng.hpp"

namespace demi {

using CovParams = std::array<double, 6>;

/// Parameters whose lower-triangular factor has a (numerically) zero row or
/// pivot. Retriable: draw new parameters.
class DegenerateParams : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Covariance search ran out of restarts before hitting its tolerance.
class TargetUnreachable : public std::runtime_error {
 public:
  TargetUnreachable(const std::string& what, double best_residual, long dim = -1)
      : std::runtime_error(what), best_residual_(best_residual), dim_(dim) {}
  double best_residual() const noexcept { return best_residual_; }
  /// Index of the failing dimension inside build_world, -1 otherwise.
  long dim() const noexcept { return dim_; }

 private:
  double best_residual_;
  long dim_;
};

/// Per-dimension MI budget for a synthesized world.
struct CovarianceTarget {
  double total_mi = 0.0;
  std::vector<double> per_dim_mi;
  std::vector<double> per_dim_alpha;

  /// Throws ConfigError unless the entries are positive, sum to total_mi
  /// (1e-9) and every alpha lies strictly inside (0.1, 0.9).
  void validate() const;
};

struct CovSearchOptions {
  std::size_t restarts = 10;
  /// Per-component tolerance on (mi_joint, alpha * mi); success requires
  /// residual < tol^2.
  double tol = 1e-3;
  NelderMeadOptions nelder_mead{};
};

/// Outcome of one covariance fit, including the best residual after each
/// restart.
struct CovFit {
  TriCov cov = TriCov::identity();
  double alpha = 0.0;
  double residual = 0.0;
  std::vector<double> best_residual_history;
};

/// Positive entries summing to total_mi (flat Dirichlet via normalized
/// exponentials).
std::vector<double> split_total_mi(double total_mi, std::size_t d, Rng& rng);

/// Fills a lower-triangular factor with `params`, normalizes each row to unit
/// length, returns L L^T. Throws DegenerateParams for a zero row or pivot.
TriCov project_posdef(const CovParams& params);

/// (I(x,x';y) - mi)^2 + (I(x';y) - alpha mi)^2 of the projected matrix;
/// +inf when the projection is rejected.
double residual(const CovParams& params, double mi, double alpha);

/// Nelder-Mead with random restarts for a fixed alpha.
CovFit fit_cov(double mi, double alpha, Rng& rng, const CovSearchOptions& opts = {});

/// Draws alpha ~ U(0.1, 0.9) and fits a covariance for it.
CovFit sample_cov(double mi, Rng& rng, const CovSearchOptions& opts = {});

/// Random target: split of total_mi over d dimensions plus one alpha per
/// dimension.
CovarianceTarget make_target(double total_mi, std::size_t d, Rng& rng);

/// Fits every dimension independently; dimension i draws from a stream keyed
/// by (seed, i), so results do not depend on evaluation order.
GaussianWorld build_world(const CovarianceTarget& target, std::uint64_t seed,
                          const CovSearchOptions& opts = {});

/// make_target + build_world from a single root seed.
GaussianWorld synthesize_world(double total_mi, std::size_t d, std::uint64_t seed,
                               const CovSearchOptions& opts = {});

}  // namespace demi
