#include "demi/estimators/variational.hpp"

#include <algorithm>
#include <cmath>

#include "demi/errors.hpp"
#include "demi/nn/graph.hpp"

namespace demi {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

std::vector<double> as_vec(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

VariationalGaussian::VariationalGaussian(std::size_t dims)
    : a_(Vector::Zero(static_cast<Eigen::Index>(dims))),
      c_(Vector::Zero(static_cast<Eigen::Index>(dims))),
      log_s_(Vector::Zero(static_cast<Eigen::Index>(dims))) {}

VariationalGaussian::VariationalGaussian(Vector a, Vector c, Vector log_s)
    : a_(std::move(a)), c_(std::move(c)), log_s_(std::move(log_s)) {
  if (a_.size() != c_.size() || a_.size() != log_s_.size())
    throw ShapeError("VariationalGaussian: parameter lengths differ");
  if (!a_.allFinite() || !c_.allFinite() || !log_s_.allFinite())
    throw InvariantError("VariationalGaussian: non-finite parameter (s must be > 0)");
}

VariationalGaussian VariationalGaussian::from_conditional(const GaussianWorld& world) {
  const auto d = static_cast<Eigen::Index>(world.dims());
  Vector a(d), c = Vector::Zero(d), log_s(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto& p = world.cond(static_cast<std::size_t>(i));
    a(i) = p.slope_xp;
    log_s(i) = 0.5 * p.log_var_xp;
  }
  return {a, c, log_s};
}

VariationalGaussian VariationalGaussian::from_marginal(const GaussianWorld& world) {
  const auto d = static_cast<Eigen::Index>(world.dims());
  Vector log_s(d);
  for (Eigen::Index i = 0; i < d; ++i)
    log_s(i) = 0.5 * std::log(world.cond(static_cast<std::size_t>(i)).var_y);
  return {Vector::Zero(d), Vector::Zero(d), log_s};
}

double VariationalGaussian::log_density(const RowRef& xp, const RowRef& y) const {
  if (xp.size() != a_.size() || y.size() != a_.size())
    throw ShapeError("VariationalGaussian::log_density: width mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < a_.size(); ++i) {
    const double z = (y(i) - (a_(i) * xp(i) + c_(i))) * std::exp(-log_s_(i));
    total += -0.5 * z * z - log_s_(i) - kHalfLog2Pi;
  }
  return total;
}

Matrix VariationalGaussian::sample(const RowRef& xp, std::size_t n, Rng& rng) const {
  if (xp.size() != a_.size()) throw ShapeError("VariationalGaussian::sample: width mismatch");
  std::normal_distribution<double> normal;
  Matrix out(static_cast<Eigen::Index>(n), a_.size());
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    for (Eigen::Index i = 0; i < a_.size(); ++i)
      out(r, i) = (a_(i) * xp(i) + c_(i)) + std::exp(log_s_(i)) * normal(rng);
  return out;
}

Vector expected_kl_per_dim(const GaussianWorld& world, const VariationalGaussian& q) {
  if (q.dims() != world.dims()) throw ShapeError("expected_kl: q does not match the world");
  const auto d = static_cast<Eigen::Index>(world.dims());
  Vector out(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto& p = world.cond(static_cast<std::size_t>(i));
    const double var_xp_marg = world.cov(static_cast<std::size_t>(i))(1, 1);
    const double log_var_q = 2.0 * q.log_sd()(i);
    const double ratio = std::exp(p.log_var_xp - log_var_q);
    const double da = p.slope_xp - q.slope()(i);
    const double mean_sq = da * da * var_xp_marg + q.offset()(i) * q.offset()(i);
    out(i) = 0.5 * ((log_var_q - p.log_var_xp) + ratio - 1.0 + mean_sq * std::exp(-log_var_q));
  }
  if (!out.allFinite()) throw InvariantError("expected_kl: KL divergence is not finite");
  return out;
}

double expected_kl(const GaussianWorld& world, const VariationalGaussian& q) {
  return expected_kl_per_dim(world, q).sum();
}

double mean_nll(const VariationalGaussian& q, const JointSamples& rows) {
  double total = 0.0;
  for (Eigen::Index r = 0; r < rows.xp.rows(); ++r)
    total -= q.log_density(rows.xp.row(r), rows.y.row(r));
  return total / static_cast<double>(rows.size());
}

VariationalTrainer::VariationalTrainer(std::size_t dims, nn::AdamConfig adam)
    : q_(dims), adam_(adam) {}

double VariationalTrainer::step(const JointSamples& rows) {
  const auto d = static_cast<Eigen::Index>(q_.dims());
  if (rows.xp.cols() != d) throw ShapeError("VariationalTrainer: rows do not match q");
  nn::Graph g;
  const nn::Var a = g.parameter(Matrix(q_.slope().transpose()));
  const nn::Var c = g.parameter(Matrix(q_.offset().transpose()));
  const nn::Var log_s = g.parameter(Matrix(q_.log_sd().transpose()));
  const nn::Var xp = g.constant(rows.xp);
  const nn::Var y = g.constant(rows.y);

  const nn::Var resid = g.sub(y, g.add_row(g.mul_row(xp, a), c));
  const nn::Var inv_var = g.exp(g.scale(log_s, -2.0));
  const double n = static_cast<double>(rows.size());
  const nn::Var quad = g.scale(g.sum(g.mul_row(g.square(resid), inv_var)), 0.5 / n);
  const nn::Var loss = g.add_scalar(g.add(quad, g.sum(log_s)), static_cast<double>(d) * kHalfLog2Pi);
  const double value = g.value(loss)(0, 0);
  g.backward(loss);

  nn::Tensor ta({1, static_cast<std::size_t>(d)}, as_vec(q_.slope()));
  nn::Tensor tc({1, static_cast<std::size_t>(d)}, as_vec(q_.offset()));
  nn::Tensor ts({1, static_cast<std::size_t>(d)}, as_vec(q_.log_sd()));
  const auto to_tensor = [&](nn::Var v) {
    Matrix m = g.grad(v);
    return nn::Tensor({1, static_cast<std::size_t>(d)}, std::vector<double>(m.data(), m.data() + m.size()));
  };
  const std::vector<nn::Tensor> grads{to_tensor(a), to_tensor(c), to_tensor(log_s)};
  nn::Tensor* params[] = {&ta, &tc, &ts};
  nn::adam_step(params, grads, adam_);

  const auto row = [](const nn::Tensor& t) { return Vector(t.matrix().row(0).transpose()); };
  q_ = VariationalGaussian(row(ta), row(tc), row(ts));
  return value;
}

VariationalFit train_variational(const GaussianWorld& world, const VariationalTrainOptions& opts,
                                 Rng& rng) {
  if (opts.steps == 0) throw ConfigError("train_variational: steps must be >= 1");
  if (opts.batch == 0) throw ConfigError("train_variational: batch must be >= 1");
  const JointSamples heldout = world.sample_joint(std::max<std::size_t>(opts.heldout_rows, 1), rng);
  VariationalTrainer trainer(world.dims(), opts.adam);
  std::vector<double> history{mean_nll(trainer.q(), heldout)};
  const std::size_t every = std::max<std::size_t>(opts.eval_every, 1);
  for (std::size_t s = 1; s <= opts.steps; ++s) {
    try {
      trainer.step(world.sample_joint(opts.batch, rng));
    } catch (const NumericalError& e) {
      throw NumericalError(e.what(), static_cast<long>(s));
    }
    if (s % every == 0 || s == opts.steps) {
      const double nll = mean_nll(trainer.q(), heldout);
      if (!std::isfinite(nll)) throw NumericalError("train_variational: held-out NLL diverged", static_cast<long>(s));
      history.push_back(nll);
    }
  }
  return {trainer.q(), std::move(history)};
}

}  // namespace demi
