#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "demi/gaussian_world.hpp"
#include "demi/rng.hpp"
#include "demi/types.hpp"

namespace demi {

class VariationalGaussian;

/// Distribution the negatives of a contrastive batch were drawn from.
enum class NegativeSource { marginal, conditional_on_xp, variational_q, sir_resampled };

std::string to_string(NegativeSource s);

/// How marginal negatives are laid out across rows.
enum class NegativeSharing {
  per_row,   // fresh i.i.d. draws for every anchor row
  in_batch,  // row b's negatives are the other rows' positives (K = rows)
};

/// Anchors plus K candidates per row; candidate 0 of every row is the
/// positive y drawn jointly with the anchor, candidates 1..K-1 are negatives.
///
/// Batches can only be produced by the factory functions below, so the
/// recorded NegativeSource always matches how the negatives were generated.
class ContrastiveBatch {
 public:
  std::size_t rows() const { return static_cast<std::size_t>(x_.rows()); }
  std::size_t k() const { return k_; }
  std::size_t dims() const { return static_cast<std::size_t>(x_.cols()); }
  NegativeSource source() const { return source_; }

  const Matrix& anchors_x() const { return x_; }
  const Matrix& anchors_xp() const { return xp_; }
  /// (rows * K) x D; row b*K + j is candidate j of anchor b.
  const Matrix& candidates() const { return candidates_; }
  Matrix positives() const;
  /// K-1 x D negatives of anchor row b.
  Matrix negatives(std::size_t b) const;

 private:
  ContrastiveBatch(Matrix x, Matrix xp, Matrix candidates, std::size_t k, NegativeSource s);

  friend ContrastiveBatch make_marginal_batch(const GaussianWorld&, const JointSamples&,
                                              std::size_t, Rng&, NegativeSharing);
  friend ContrastiveBatch make_conditional_batch(const GaussianWorld&, const JointSamples&,
                                                 std::size_t, Rng&);
  friend ContrastiveBatch make_variational_batch(const VariationalGaussian&,
                                                 const JointSamples&, std::size_t, Rng&);
  friend ContrastiveBatch make_sir_batch(const std::function<double(const RowRef&, const RowRef&)>&,
                                         const JointSamples&, const Matrix&, std::size_t, Rng&);

  Matrix x_;
  Matrix xp_;
  Matrix candidates_;
  std::size_t k_;
  NegativeSource source_;
};

/// Negatives drawn from p(y). With NegativeSharing::in_batch, k is ignored
/// and K equals the number of rows.
ContrastiveBatch make_marginal_batch(const GaussianWorld& world, const JointSamples& rows,
                                     std::size_t k, Rng& rng,
                                     NegativeSharing sharing = NegativeSharing::per_row);
/// Negatives of row b drawn from p(y | x'_b).
ContrastiveBatch make_conditional_batch(const GaussianWorld& world, const JointSamples& rows,
                                        std::size_t k, Rng& rng);
/// Negatives of row b drawn from q(y | x'_b).
ContrastiveBatch make_variational_batch(const VariationalGaussian& q, const JointSamples& rows,
                                        std::size_t k, Rng& rng);
/// Sampling-importance-resampling: negatives of row b are K-1 i.i.d. draws
/// from the pool with weights proportional to exp(psi(x'_b, pool_m)).
/// Requires pool.rows() >= k.
ContrastiveBatch make_sir_batch(const std::function<double(const RowRef&, const RowRef&)>& psi,
                                const JointSamples& rows, const Matrix& pool, std::size_t k,
                                Rng& rng);

/// Convenience overloads that draw `n` joint rows first.
ContrastiveBatch make_marginal_batch(const GaussianWorld& world, std::size_t n, std::size_t k,
                                     Rng& rng);
ContrastiveBatch make_conditional_batch(const GaussianWorld& world, std::size_t n,
                                        std::size_t k, Rng& rng);

/// K-1 i.i.d. draws from the categorical over `pool` with weights
/// exp(psi(xp, pool_m)), computed max-shifted so no weight underflows to an
/// all-zero vector. Requires pool.rows() >= k.
Matrix sir_negatives(const std::function<double(const RowRef&, const RowRef&)>& psi,
                     const RowRef& xp, const Matrix& pool, std::size_t k, Rng& rng);

/// Normalized SIR weights of the pool for one anchor.
Vector sir_weights(const std::function<double(const RowRef&, const RowRef&)>& psi,
                   const RowRef& xp, const Matrix& pool);

}  // namespace demi
