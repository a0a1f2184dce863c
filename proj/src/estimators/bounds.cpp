#include "demi/estimators/bounds.hpp"

#include <cmath>

#include "demi/errors.hpp"
#include "demi/nn/graph.hpp"

namespace demi {

namespace {

void require_source(const ContrastiveBatch& batch, NegativeSource want, const char* who) {
  if (batch.source() != want) {
    throw SourceMismatch(std::string(who) + ": expected " + to_string(want) + " negatives, got " +
                         to_string(batch.source()));
  }
}

}  // namespace

BoundEstimate summarize(const Vector& values, std::size_t k, double cap) {
  BoundEstimate e;
  e.n = static_cast<std::size_t>(values.size());
  e.k = k;
  e.cap = cap;
  if (e.n == 0) return e;
  e.mean = values.mean();
  if (e.n > 1) {
    const double var = (values.array() - e.mean).square().sum() / static_cast<double>(e.n - 1);
    e.std_error = std::sqrt(var / static_cast<double>(e.n));
  }
  if (!std::isfinite(e.mean)) throw NumericalError("summarize: non-finite bound");
  if (e.mean > cap + 1e-9) throw InvariantError("summarize: bound mean exceeds its cap");
  return e;
}

double single_cap(std::size_t k) { return std::log(static_cast<double>(k)); }

double split_cap(std::size_t k_total) { return 2.0 * std::log(static_cast<double>(k_total / 2)); }

double shared_cap(std::size_t k) { return 2.0 * std::log(static_cast<double>(k)); }

Matrix importance_shift(const Matrix& psi_logits) {
  const Eigen::Index k = psi_logits.cols();
  Matrix shift = Matrix::Zero(psi_logits.rows(), k);
  if (k < 2) return shift;
  const double log_negatives = std::log(static_cast<double>(k - 1));
  for (Eigen::Index b = 0; b < psi_logits.rows(); ++b) {
    const auto neg = psi_logits.row(b).tail(k - 1);
    const double top = neg.maxCoeff();
    double acc = 0.0;
    for (Eigen::Index j = 0; j < k - 1; ++j) acc += std::exp(neg(j) - top);
    const double log_acc = std::log(acc);
    for (Eigen::Index j = 0; j < k - 1; ++j)
      shift(b, j + 1) = ((neg(j) - top) - log_acc) + log_negatives;
  }
  return shift;
}

Vector is_values_from_logits(const Matrix& phi_logits, const Matrix& psi_logits) {
  if (phi_logits.rows() != psi_logits.rows() || phi_logits.cols() != psi_logits.cols())
    throw ShapeError("is_values: logit shapes differ");
  return nn::contrastive_log_ratio(phi_logits + importance_shift(psi_logits));
}

Vector bo_values_from_logits(const Matrix& phi_logits, const Matrix& psi_logits) {
  if (phi_logits.rows() != psi_logits.rows() || phi_logits.cols() != psi_logits.cols())
    throw ShapeError("bo_values: logit shapes differ");
  return nn::contrastive_log_ratio(psi_logits + phi_logits);
}

Vector nce_values(const Critic& psi, const ContrastiveBatch& batch) {
  require_source(batch, NegativeSource::marginal, "nce_values");
  return nn::contrastive_log_ratio(psi.logits(batch));
}

Vector cnce_values(const Critic& phi, const ContrastiveBatch& batch) {
  require_source(batch, NegativeSource::conditional_on_xp, "cnce_values");
  return nn::contrastive_log_ratio(phi.logits(batch));
}

Vector sir_values(const Critic& phi, const ContrastiveBatch& batch) {
  require_source(batch, NegativeSource::sir_resampled, "sir_values");
  return nn::contrastive_log_ratio(phi.logits(batch));
}

Vector is_values(const Critic& phi, const Critic& psi_star, const ContrastiveBatch& batch) {
  require_source(batch, NegativeSource::marginal, "is_values");
  return is_values_from_logits(phi.logits(batch), psi_star.logits(batch));
}

Vector bo_values(const Critic& phi, const Critic& psi_star, const ContrastiveBatch& batch) {
  require_source(batch, NegativeSource::marginal, "bo_values");
  return bo_values_from_logits(phi.logits(batch), psi_star.logits(batch));
}

VariationalBound var_bound(const Critic& phi, const VariationalGaussian& q,
                           const GaussianWorld& world, const ContrastiveBatch& batch) {
  require_source(batch, NegativeSource::variational_q, "var_bound");
  VariationalBound out;
  out.values = nn::contrastive_log_ratio(phi.logits(batch));
  out.kl = expected_kl(world, q);
  out.estimate = summarize(out.values, batch.k(), single_cap(batch.k()));
  out.estimate.mean -= out.kl;
  return out;
}

}  // namespace demi
