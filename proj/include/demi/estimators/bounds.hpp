#pragma once

#include <cstddef>

#include "demi/estimators/batch.hpp"
#include "demi/estimators/critics.hpp"
#include "demi/estimators/variational.hpp"
#include "demi/types.hpp"

namespace demi {

/// Monte-Carlo estimate of a bound, in nats.
struct BoundEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
  std::size_t k = 0;
  double cap = 0.0;
};

/// Mean and standard error of per-sample values. Throws InvariantError when
/// the mean exceeds cap + 1e-9.
BoundEstimate summarize(const Vector& values, std::size_t k, double cap);

/// log K: the cap of a single contrastive term.
double single_cap(std::size_t k);
/// 2 log(K/2): DEMI with the negatives split between its two terms.
double split_cap(std::size_t k_total);
/// 2 log K: two terms sharing one set of K negatives.
double shared_cap(std::size_t k);

/// Additive logit shift turning the nce-form softmax into the importance
/// weighted one: column 0 is 0, column k >= 1 is log w_k + log(K-1) with
/// w = softmax of psi over the negatives. A constant psi gives exactly 0.
Matrix importance_shift(const Matrix& psi_logits);

/// Values from precomputed logits (column 0 = positive).
Vector is_values_from_logits(const Matrix& phi_logits, const Matrix& psi_logits);
Vector bo_values_from_logits(const Matrix& phi_logits, const Matrix& psi_logits);

/// I_NCE per-row values. Requires marginal negatives.
Vector nce_values(const Critic& psi, const ContrastiveBatch& batch);
/// I_CNCE per-row values. Requires negatives from p(y | x').
Vector cnce_values(const Critic& phi, const ContrastiveBatch& batch);
/// Softmax values over SIR-resampled negatives.
Vector sir_values(const Critic& phi, const ContrastiveBatch& batch);
/// Importance-sampled values; psi_star is treated as fixed. Requires
/// marginal negatives.
Vector is_values(const Critic& phi, const Critic& psi_star, const ContrastiveBatch& batch);
/// Boosted-critic values over psi_star + phi; bound on the total MI.
/// Requires marginal negatives.
Vector bo_values(const Critic& phi, const Critic& psi_star, const ContrastiveBatch& batch);

struct VariationalBound {
  /// cnce-form values over the q negatives.
  Vector values;
  /// E_{p(x')} KL(p(y | x') || q), analytic.
  double kl = 0.0;
  /// mean(values) - kl, with the stderr of the first term.
  BoundEstimate estimate;
};

/// Variational bound with q negatives. Requires NegativeSource::variational_q.
VariationalBound var_bound(const Critic& phi, const VariationalGaussian& q,
                           const GaussianWorld& world, const ContrastiveBatch& batch);

}  // namespace demi
