#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "demi/rng.hpp"
#include "demi/types.hpp"

namespace demi {

/// Joint and marginal mutual information of one (x, x', y) dimension, nats.
struct TriMi {
  double joint = 0.0;     // I(x, x'; y)
  double marginal = 0.0;  // I(x'; y)
};

/// 3x3 symmetric positive-definite covariance over (x, x', y) with unit
/// diagonal. Construction validates all invariants and throws
/// InvariantError otherwise.
class TriCov {
 public:
  static constexpr double kSymmetryTol = 1e-12;
  static constexpr double kDiagonalTol = 1e-12;

  explicit TriCov(const Eigen::Matrix3d& m);

  /// Entries in numpy tril_indices(3) order: (0,0) (1,0) (1,1) (2,0) (2,1) (2,2).
  static TriCov from_lower(const std::array<double, 6>& lower);
  std::array<double, 6> lower() const;

  static TriCov identity() { return TriCov(Eigen::Matrix3d::Identity()); }
  /// All three off-diagonal correlations equal to rho.
  static TriCov equicorrelated(double rho);

  const Eigen::Matrix3d& matrix() const { return m_; }
  const Eigen::Matrix3d& cholesky() const { return chol_; }
  double operator()(int i, int j) const { return m_(i, j); }

 private:
  Eigen::Matrix3d m_;
  Eigen::Matrix3d chol_;  // lower factor, m_ = chol_ * chol_^T
};

/// Determinant formula for the MI of a 3-covariate Gaussian. Accepts any SPD
/// matrix (MI is scale invariant); throws InvariantError on a non-positive
/// determinant.
TriMi analytical_mi(const Eigen::Matrix3d& cov);
inline TriMi analytical_mi(const TriCov& cov) { return analytical_mi(cov.matrix()); }

/// Regression form of the two conditionals of y in one dimension:
///   p(y | x')    = N(slope_xp * x', exp(log_var_xp))
///   p(y | x, x') = N(joint_slope_x * x + joint_slope_xp * x', exp(log_var_joint))
/// Standard deviations are derived from the log variances so that any other
/// Gaussian stored in log-scale (VariationalGaussian) can reproduce them bit
/// for bit.
struct ConditionalParams {
  double var_y = 1.0;
  double slope_xp = 0.0;
  double log_var_xp = 0.0;
  double var_xp = 1.0;
  double sd_xp = 1.0;
  double joint_slope_x = 0.0;
  double joint_slope_xp = 0.0;
  double log_var_joint = 0.0;
  double var_joint = 1.0;

  static ConditionalParams from_cov(const TriCov& cov);

  /// I(x; y | x') from the residual variances.
  double conditional_mi() const { return 0.5 * (log_var_xp - log_var_joint); }
};

/// Joint samples as three n x D matrices (one row per draw).
struct JointSamples {
  Matrix x;
  Matrix xp;
  Matrix y;

  std::size_t size() const { return static_cast<std::size_t>(y.rows()); }
};

/// One row of a JointSamples, copied out.
struct SampleTriple {
  RowVector x;
  RowVector xp;
  RowVector y;
};

/// Provenance recorded alongside a synthesized world.
struct WorldMetadata {
  std::optional<double> target_mi;
  std::vector<double> per_dim_mi;
  std::vector<double> per_dim_alpha;
  std::optional<std::uint64_t> seed;
};

/// D independent TriCov dimensions with cached analytic MI and conditional
/// parameters. Immutable after construction; safe to share across threads.
class GaussianWorld {
 public:
  explicit GaussianWorld(std::vector<TriCov> dims, WorldMetadata meta = {});

  std::size_t dims() const { return covs_.size(); }
  const TriCov& cov(std::size_t i) const { return covs_.at(i); }
  const ConditionalParams& cond(std::size_t i) const { return cond_.at(i); }
  const std::vector<TriMi>& per_dim_mi() const { return mi_; }
  const WorldMetadata& metadata() const { return meta_; }

  double mi_joint() const { return mi_joint_; }
  double mi_marg() const { return mi_marg_; }
  double mi_cond() const { return mi_cond_; }

  JointSamples sample_joint(std::size_t n, Rng& rng) const;
  /// n draws of y from p(y | x') for a fixed x'; returns n x D.
  Matrix sample_y_given_xp(const RowRef& xp, std::size_t n, Rng& rng) const;
  /// n draws of y from the marginal p(y); returns n x D.
  Matrix sample_marginal_y(std::size_t n, Rng& rng) const;

  /// log p(y | x') / p(y).
  double optimal_psi(const RowRef& xp, const RowRef& y) const;
  /// log p(y | x, x') / p(y | x').
  double optimal_phi(const RowRef& xp, const RowRef& x, const RowRef& y) const;
  /// log p(y | x, x') / p(y).
  double optimal_joint(const RowRef& x, const RowRef& xp, const RowRef& y) const;

  std::string to_json() const;
  /// Parses a world document, re-derives every cached quantity and
  /// re-validates invariants.
  static GaussianWorld from_json(const std::string& text);

  void save(const std::string& path) const;
  static GaussianWorld load(const std::string& path);

 private:
  std::vector<TriCov> covs_;
  std::vector<ConditionalParams> cond_;
  std::vector<TriMi> mi_;
  WorldMetadata meta_;
  double mi_joint_ = 0.0;
  double mi_marg_ = 0.0;
  double mi_cond_ = 0.0;
};

/// Log density of N(mean, var) at v.
double log_normal_pdf(double v, double mean, double var);

/// World with every dimension equal to `cov`.
GaussianWorld uniform_world(const TriCov& cov, std::size_t dims);

}  // namespace demi
