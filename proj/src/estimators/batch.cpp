#include "demi/estimators/batch.hpp"

#include <cmath>
#include <vector>

#include "demi/errors.hpp"
#include "demi/estimators/variational.hpp"

namespace demi {

namespace {

void require_rows(const JointSamples& rows) {
  if (rows.size() == 0) throw ConfigError("contrastive batch: need at least one row");
}

void require_k(std::size_t k) {
  if (k < 1) throw ConfigError("contrastive batch: K must be >= 1");
}

/// Candidate matrix with the positives in slot 0 of every row.
Matrix with_positives(const Matrix& y, std::size_t k) {
  const auto kk = static_cast<Eigen::Index>(k);
  Matrix c(y.rows() * kk, y.cols());
  for (Eigen::Index b = 0; b < y.rows(); ++b) c.row(b * kk) = y.row(b);
  return c;
}

/// Fills negatives of row b with slope * x'_b + offset + sd * z, drawing in
/// (row, candidate, dim) order. Shared by the conditional and variational
/// factories so equal parameters give bit-identical draws.
void fill_linear_gaussian(Matrix& c, const Matrix& xp, std::size_t k, const Vector& slope,
                          const Vector& offset, const Vector& sd, Rng& rng) {
  std::normal_distribution<double> normal;
  const auto kk = static_cast<Eigen::Index>(k);
  for (Eigen::Index b = 0; b < xp.rows(); ++b) {
    for (Eigen::Index j = 1; j < kk; ++j) {
      for (Eigen::Index i = 0; i < xp.cols(); ++i) {
        const double mean = slope(i) * xp(b, i) + offset(i);
        c(b * kk + j, i) = mean + sd(i) * normal(rng);
      }
    }
  }
}

}  // namespace

std::string to_string(NegativeSource s) {
  switch (s) {
    case NegativeSource::marginal: return "marginal";
    case NegativeSource::conditional_on_xp: return "conditional_on_xp";
    case NegativeSource::variational_q: return "variational_q";
    case NegativeSource::sir_resampled: return "sir_resampled";
  }
  return "unknown";
}

ContrastiveBatch::ContrastiveBatch(Matrix x, Matrix xp, Matrix candidates, std::size_t k,
                                   NegativeSource s)
    : x_(std::move(x)), xp_(std::move(xp)), candidates_(std::move(candidates)), k_(k), source_(s) {
  if (x_.rows() != xp_.rows() || x_.cols() != xp_.cols() || candidates_.cols() != x_.cols() ||
      candidates_.rows() != x_.rows() * static_cast<Eigen::Index>(k_)) {
    throw ShapeError("ContrastiveBatch: inconsistent shapes");
  }
}

Matrix ContrastiveBatch::positives() const {
  Matrix p(x_.rows(), x_.cols());
  const auto kk = static_cast<Eigen::Index>(k_);
  for (Eigen::Index b = 0; b < x_.rows(); ++b) p.row(b) = candidates_.row(b * kk);
  return p;
}

Matrix ContrastiveBatch::negatives(std::size_t b) const {
  const auto kk = static_cast<Eigen::Index>(k_);
  return candidates_.middleRows(static_cast<Eigen::Index>(b) * kk + 1, kk - 1);
}

ContrastiveBatch make_marginal_batch(const GaussianWorld& world, const JointSamples& rows,
                                     std::size_t k, Rng& rng, NegativeSharing sharing) {
  require_rows(rows);
  if (static_cast<std::size_t>(rows.y.cols()) != world.dims())
    throw ShapeError("make_marginal_batch: rows do not match the world");
  if (sharing == NegativeSharing::in_batch) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    Matrix c(n * n, rows.y.cols());
    for (Eigen::Index b = 0; b < n; ++b)
      for (Eigen::Index j = 0; j < n; ++j) c.row(b * n + j) = rows.y.row((b + j) % n);
    return ContrastiveBatch(rows.x, rows.xp, std::move(c), rows.size(), NegativeSource::marginal);
  }
  require_k(k);
  Matrix c = with_positives(rows.y, k);
  const auto kk = static_cast<Eigen::Index>(k);
  std::normal_distribution<double> normal;
  for (Eigen::Index b = 0; b < rows.y.rows(); ++b) {
    for (Eigen::Index j = 1; j < kk; ++j) {
      for (Eigen::Index i = 0; i < rows.y.cols(); ++i) {
        c(b * kk + j, i) = std::sqrt(world.cond(static_cast<std::size_t>(i)).var_y) * normal(rng);
      }
    }
  }
  return ContrastiveBatch(rows.x, rows.xp, std::move(c), k, NegativeSource::marginal);
}

ContrastiveBatch make_conditional_batch(const GaussianWorld& world, const JointSamples& rows,
                                        std::size_t k, Rng& rng) {
  require_rows(rows);
  require_k(k);
  const auto d = static_cast<Eigen::Index>(world.dims());
  if (rows.y.cols() != d) throw ShapeError("make_conditional_batch: rows do not match the world");
  Vector slope(d), offset = Vector::Zero(d), sd(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto& c = world.cond(static_cast<std::size_t>(i));
    slope(i) = c.slope_xp;
    sd(i) = c.sd_xp;
  }
  Matrix c = with_positives(rows.y, k);
  fill_linear_gaussian(c, rows.xp, k, slope, offset, sd, rng);
  return ContrastiveBatch(rows.x, rows.xp, std::move(c), k, NegativeSource::conditional_on_xp);
}

ContrastiveBatch make_variational_batch(const VariationalGaussian& q, const JointSamples& rows,
                                        std::size_t k, Rng& rng) {
  require_rows(rows);
  require_k(k);
  if (static_cast<std::size_t>(rows.y.cols()) != q.dims())
    throw ShapeError("make_variational_batch: rows do not match q");
  Vector sd = q.log_sd().array().exp();
  Matrix c = with_positives(rows.y, k);
  fill_linear_gaussian(c, rows.xp, k, q.slope(), q.offset(), sd, rng);
  return ContrastiveBatch(rows.x, rows.xp, std::move(c), k, NegativeSource::variational_q);
}

Vector sir_weights(const std::function<double(const RowRef&, const RowRef&)>& psi,
                   const RowRef& xp, const Matrix& pool) {
  Vector logw(pool.rows());
  for (Eigen::Index m = 0; m < pool.rows(); ++m) logw(m) = psi(xp, pool.row(m));
  if (!logw.allFinite()) throw NumericalError("sir_weights: non-finite critic value");
  const double top = logw.maxCoeff();
  Vector w = (logw.array() - top).exp();
  return w / w.sum();
}

Matrix sir_negatives(const std::function<double(const RowRef&, const RowRef&)>& psi,
                     const RowRef& xp, const Matrix& pool, std::size_t k, Rng& rng) {
  require_k(k);
  if (static_cast<std::size_t>(pool.rows()) < k) throw ConfigError("sir_negatives: need M >= K");
  const Vector w = sir_weights(psi, xp, pool);
  std::discrete_distribution<Eigen::Index> pick(w.data(), w.data() + w.size());
  Matrix out(static_cast<Eigen::Index>(k) - 1, pool.cols());
  for (Eigen::Index j = 0; j < out.rows(); ++j) out.row(j) = pool.row(pick(rng));
  return out;
}

ContrastiveBatch make_sir_batch(const std::function<double(const RowRef&, const RowRef&)>& psi,
                                const JointSamples& rows, const Matrix& pool, std::size_t k,
                                Rng& rng) {
  require_rows(rows);
  require_k(k);
  if (pool.cols() != rows.y.cols()) throw ShapeError("make_sir_batch: pool width mismatch");
  Matrix c = with_positives(rows.y, k);
  const auto kk = static_cast<Eigen::Index>(k);
  for (Eigen::Index b = 0; b < rows.y.rows(); ++b) {
    if (kk > 1) c.middleRows(b * kk + 1, kk - 1) = sir_negatives(psi, rows.xp.row(b), pool, k, rng);
  }
  return ContrastiveBatch(rows.x, rows.xp, std::move(c), k, NegativeSource::sir_resampled);
}

ContrastiveBatch make_marginal_batch(const GaussianWorld& world, std::size_t n, std::size_t k,
                                     Rng& rng) {
  return make_marginal_batch(world, world.sample_joint(n, rng), k, rng);
}

ContrastiveBatch make_conditional_batch(const GaussianWorld& world, std::size_t n,
                                        std::size_t k, Rng& rng) {
  return make_conditional_batch(world, world.sample_joint(n, rng), k, rng);
}

}  // namespace demi
