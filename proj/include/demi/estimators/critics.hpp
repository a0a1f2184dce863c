#pragma once

#include <functional>
#include <string>

#include "demi/estimators/batch.hpp"
#include "demi/gaussian_world.hpp"
#include "demi/nn/critic_net.hpp"
#include "demi/nn/graph.hpp"
#include "demi/types.hpp"

namespace demi {

/// Which arguments a critic scores a candidate y against.
enum class CriticRole {
  unconditional,  // psi(x', y)
  conditional,    // phi(x', x, y)
  total,          // critic of the plain InfoNCE on (x, x') -> y
};

std::string to_string(CriticRole r);

/// Scores candidates of a ContrastiveBatch. Value functions only see critics
/// through logits(), so analytic, learned and synthetic critics are
/// interchangeable.
class Critic {
 public:
  virtual ~Critic() = default;

  virtual double operator()(const RowRef& x, const RowRef& xp, const RowRef& y) const = 0;
  /// rows x K matrix; entry (b, k) scores candidate k of anchor b.
  virtual Matrix logits(const ContrastiveBatch& batch) const;
};

/// Log density ratio of the world: optimal_psi, optimal_phi or
/// optimal_joint depending on the role.
class AnalyticCritic final : public Critic {
 public:
  AnalyticCritic(const GaussianWorld& world, CriticRole role) : world_(&world), role_(role) {}
  double operator()(const RowRef& x, const RowRef& xp, const RowRef& y) const override;
  /// Vectorized over candidates; agrees with operator() to rounding.
  Matrix logits(const ContrastiveBatch& batch) const override;

 private:
  const GaussianWorld* world_;
  CriticRole role_;
};

/// Dot product of two encodings from a shared MLP. Anchors are encoded as
/// pad(x') (unconditional), [x', x] (conditional) or [x, x'] (total); the
/// candidate as pad(y). A separate y encoder may be supplied.
class NetCritic final : public Critic {
 public:
  NetCritic(const nn::CriticNet& net, CriticRole role, const nn::CriticNet* y_net = nullptr)
      : net_(&net), y_net_(y_net ? y_net : &net), role_(role) {}
  double operator()(const RowRef& x, const RowRef& xp, const RowRef& y) const override;
  Matrix logits(const ContrastiveBatch& batch) const override;

 private:
  const nn::CriticNet* net_;
  const nn::CriticNet* y_net_;
  CriticRole role_;
};

class ConstantCritic final : public Critic {
 public:
  explicit ConstantCritic(double c = 0.0) : c_(c) {}
  double operator()(const RowRef&, const RowRef&, const RowRef&) const override { return c_; }
  Matrix logits(const ContrastiveBatch& batch) const override;

 private:
  double c_;
};

class FunctionCritic final : public Critic {
 public:
  using Fn = std::function<double(const RowRef& x, const RowRef& xp, const RowRef& y)>;
  explicit FunctionCritic(Fn fn) : fn_(std::move(fn)) {}
  double operator()(const RowRef& x, const RowRef& xp, const RowRef& y) const override {
    return fn_(x, xp, y);
  }

 private:
  Fn fn_;
};

/// base(x, x', y) + h(x, x'): a shift that depends on the anchors only.
class ShiftedCritic final : public Critic {
 public:
  using Shift = std::function<double(const RowRef& x, const RowRef& xp)>;
  ShiftedCritic(const Critic& base, Shift h) : base_(&base), h_(std::move(h)) {}
  double operator()(const RowRef& x, const RowRef& xp, const RowRef& y) const override {
    return (*base_)(x, xp, y) + h_(x, xp);
  }

 private:
  const Critic* base_;
  Shift h_;
};

/// Encoder inputs for the anchors of `batch` under `role`: rows x 2D.
Matrix anchor_inputs(CriticRole role, const ContrastiveBatch& batch);
/// Encoder inputs for all candidates: (rows * K) x 2D.
Matrix candidate_inputs(const ContrastiveBatch& batch);

/// Graph-side logits of a learned critic: pair scores between the encoded
/// anchors and an already encoded candidate block.
nn::Var net_logits(nn::Graph& g, const nn::NetVars& anchor_net, CriticRole role,
                   const ContrastiveBatch& batch, nn::Var encoded_candidates);

}  // namespace demi
