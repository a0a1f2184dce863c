#pragma once

#include <cstddef>
#include <vector>

#include "demi/gaussian_world.hpp"
#include "demi/nn/adam.hpp"
#include "demi/rng.hpp"
#include "demi/types.hpp"

namespace demi {

/// Per-dimension linear-Gaussian proposal
///   q(y_i | x'_i) = N(a_i x'_i + c_i, s_i^2),
/// with s_i stored as log s_i so it stays positive under unconstrained updates.
class VariationalGaussian {
 public:
  /// a = 0, c = 0, s = 1.
  explicit VariationalGaussian(std::size_t dims);
  /// Throws ShapeError on mismatched lengths, InvariantError on non-finite
  /// entries.
  VariationalGaussian(Vector a, Vector c, Vector log_s);

  /// q equal to p(y | x'). log s_i is half the world's log variance, so draws
  /// reproduce the world's conditional sampler exactly.
  static VariationalGaussian from_conditional(const GaussianWorld& world);
  /// q equal to the marginal p(y).
  static VariationalGaussian from_marginal(const GaussianWorld& world);

  std::size_t dims() const { return static_cast<std::size_t>(a_.size()); }
  const Vector& slope() const { return a_; }
  const Vector& offset() const { return c_; }
  const Vector& log_sd() const { return log_s_; }

  /// Sum over dimensions of log q(y_i | x'_i).
  double log_density(const RowRef& xp, const RowRef& y) const;
  /// n draws from q(. | xp); n x D.
  Matrix sample(const RowRef& xp, std::size_t n, Rng& rng) const;

 private:
  Vector a_;
  Vector c_;
  Vector log_s_;
};

/// E_{p(x')} KL(p(y | x') || q(y | x')), summed over dimensions, in closed
/// form. Throws InvariantError when the result is not finite.
double expected_kl(const GaussianWorld& world, const VariationalGaussian& q);

/// Per-dimension terms of expected_kl.
Vector expected_kl_per_dim(const GaussianWorld& world, const VariationalGaussian& q);

/// Mean negative log-likelihood of q on the (x', y) columns of `rows`.
double mean_nll(const VariationalGaussian& q, const JointSamples& rows);

struct VariationalTrainOptions {
  std::size_t steps = 5000;
  std::size_t batch = 128;
  /// The first term of the variational bound carries no gradient into q, so
  /// q only sees the likelihood. Its learning rate is independent of the
  /// critic's.
  nn::AdamConfig adam{.lr = 5e-3};
  std::size_t heldout_rows = 4096;
  /// Held-out NLL is recorded every `eval_every` steps and after the last.
  std::size_t eval_every = 250;
};

struct VariationalFit {
  VariationalGaussian q;
  std::vector<double> heldout_nll;
};

/// State for updating q one step at a time inside a larger training loop.
class VariationalTrainer {
 public:
  VariationalTrainer(std::size_t dims, nn::AdamConfig adam);

  /// One Adam step on the NLL of the (x', y) columns of `rows`; returns the
  /// loss before the update. Throws NumericalError on a non-finite loss.
  double step(const JointSamples& rows);
  const VariationalGaussian& q() const { return q_; }

 private:
  VariationalGaussian q_;
  nn::AdamState adam_;
};

/// Fits q by Adam on the NLL of joint (x', y) samples. Throws ConfigError
/// when steps or batch is zero.
VariationalFit train_variational(const GaussianWorld& world, const VariationalTrainOptions& opts,
                                 Rng& rng);

}  // namespace demi
