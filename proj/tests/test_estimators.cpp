#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "demi/errors.hpp"
#include "demi/estimators/batch.hpp"
#include "demi/estimators/bounds.hpp"
#include "demi/estimators/critics.hpp"
#include "demi/estimators/training.hpp"
#include "demi/estimators/variational.hpp"
#include "demi/oracles.hpp"
#include "grad_check.hpp"

namespace demi {
namespace {

using oracles::two_nat_world;

// x independent of y given x'.
GaussianWorld cond_independent_world(std::size_t dims) {
  Eigen::Matrix3d m;
  m << 1.0, 0.7, 0.42,
       0.7, 1.0, 0.6,
       0.42, 0.6, 1.0;
  return uniform_world(TriCov(m), dims);
}

GaussianWorld xp_independent_world(std::size_t dims) {
  Eigen::Matrix3d m;
  m << 1.0, 0.6, 0.5,
       0.6, 1.0, 0.0,
       0.5, 0.0, 1.0;
  return uniform_world(TriCov(m), dims);
}

double mean(const Vector& v) { return v.mean(); }

double stderr_of(const Vector& v) {
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / (v.size() - 1) / v.size());
}

// ---------------------------------------------------------------- batches

TEST(Batch, LayoutAndSource) {
  const GaussianWorld w = uniform_world(TriCov::equicorrelated(0.5), 3);
  Rng rng(1);
  const JointSamples joint = w.sample_joint(5, rng);
  const ContrastiveBatch m = make_marginal_batch(w, joint, 4, rng);
  EXPECT_EQ(m.rows(), 5u);
  EXPECT_EQ(m.k(), 4u);
  EXPECT_EQ(m.dims(), 3u);
  EXPECT_EQ(m.source(), NegativeSource::marginal);
  EXPECT_EQ(m.candidates().rows(), 20);
  EXPECT_EQ(m.positives(), joint.y);
  EXPECT_EQ(m.negatives(2).rows(), 3);
  EXPECT_EQ(make_conditional_batch(w, joint, 4, rng).source(), NegativeSource::conditional_on_xp);
  EXPECT_EQ(make_variational_batch(VariationalGaussian(3), joint, 4, rng).source(),
            NegativeSource::variational_q);
}

TEST(Batch, InBatchSharingUsesOtherPositives) {
  const GaussianWorld w = uniform_world(TriCov::equicorrelated(0.5), 2);
  Rng rng(2);
  const JointSamples joint = w.sample_joint(4, rng);
  const ContrastiveBatch b = make_marginal_batch(w, joint, 99, rng, NegativeSharing::in_batch);
  EXPECT_EQ(b.k(), 4u);
  for (std::size_t r = 0; r < 4; ++r) {
    std::set<double> seen;
    for (Eigen::Index j = 0; j < 4; ++j) seen.insert(b.candidates()(static_cast<Eigen::Index>(r) * 4 + j, 0));
    EXPECT_EQ(seen.size(), 4u);
    for (Eigen::Index i = 0; i < 4; ++i) EXPECT_TRUE(seen.contains(joint.y(i, 0)));
  }
}

TEST(Sir, PoolSmallerThanKThrows) {
  Rng rng(3);
  const Matrix pool = Matrix::Zero(3, 2);
  auto psi = [](const RowRef&, const RowRef&) { return 0.0; };
  EXPECT_THROW(sir_negatives(psi, RowVector::Zero(2), pool, 4, rng), ConfigError);
}

TEST(Sir, ConstantWeightsAreUniform) {
  const Matrix pool = Matrix::Random(10, 2);
  auto psi = [](const RowRef&, const RowRef&) { return 3.0; };
  const Vector w = sir_weights(psi, RowVector::Zero(2), pool);
  for (Eigen::Index i = 0; i < 10; ++i) EXPECT_DOUBLE_EQ(w(i), 0.1);
}

TEST(Sir, HugeLogWeightsDoNotUnderflow) {
  Matrix pool(3, 1);
  pool << 0.0, 1.0, 2.0;
  auto psi = [](const RowRef&, const RowRef& y) { return -5000.0 + 10.0 * y(0); };
  const Vector w = sir_weights(psi, RowVector::Zero(1), pool);
  EXPECT_TRUE(w.allFinite());
  EXPECT_NEAR(w.sum(), 1.0, 1e-12);
  EXPECT_GT(w(2), 0.99);
}

TEST(Sir, DrawsStayInPool) {
  Rng rng(4);
  Matrix pool(5, 1);
  pool << 0.1, 0.2, 0.3, 0.4, 0.5;
  auto psi = [](const RowRef&, const RowRef& y) { return y(0); };
  const Matrix neg = sir_negatives(psi, RowVector::Zero(1), pool, 5, rng);
  EXPECT_EQ(neg.rows(), 4);
  for (Eigen::Index i = 0; i < neg.rows(); ++i) {
    bool found = false;
    for (Eigen::Index j = 0; j < 5; ++j) found = found || neg(i, 0) == pool(j, 0);
    EXPECT_TRUE(found);
  }
}

// ---------------------------------------------------------------- values

TEST(Values, ConstantCriticAndSingleCandidateGiveZero) {
  const GaussianWorld w = two_nat_world();
  Rng rng(5);
  const ContrastiveBatch m = make_marginal_batch(w, 6, 16, rng);
  const ContrastiveBatch c = make_conditional_batch(w, 6, 16, rng);
  const ConstantCritic k(1.7);
  EXPECT_TRUE(nce_values(k, m).isZero(0.0));
  EXPECT_TRUE(cnce_values(k, c).isZero(0.0));
  EXPECT_TRUE(is_values(k, k, m).isZero(0.0));
  EXPECT_TRUE(bo_values(k, k, m).isZero(0.0));
  const AnalyticCritic psi(w, CriticRole::total);
  EXPECT_TRUE(nce_values(psi, make_marginal_batch(w, 6, 1, rng)).isZero(0.0));
}

TEST(Values, WrongSourceThrows) {
  const GaussianWorld w = two_nat_world();
  Rng rng(6);
  const ContrastiveBatch m = make_marginal_batch(w, 3, 4, rng);
  const ContrastiveBatch c = make_conditional_batch(w, 3, 4, rng);
  const ConstantCritic k;
  EXPECT_THROW(nce_values(k, c), SourceMismatch);
  EXPECT_THROW(cnce_values(k, m), SourceMismatch);
  EXPECT_THROW(sir_values(k, m), SourceMismatch);
  EXPECT_THROW(is_values(k, k, c), SourceMismatch);
  EXPECT_THROW(bo_values(k, k, c), SourceMismatch);
  EXPECT_THROW(var_bound(k, VariationalGaussian(2), w, m), SourceMismatch);
}

TEST(Values, CapHoldsForWildCritics) {
  const GaussianWorld w = two_nat_world();
  Rng rng(7);
  std::normal_distribution<double> n(0.0, 50.0);
  const FunctionCritic wild([&](const RowRef& x, const RowRef& xp, const RowRef& y) {
    return 40.0 * (x.sum() - xp.sum()) * y.sum() + 3.0 * y.squaredNorm();
  });
  for (std::size_t k : {1u, 2u, 16u, 256u}) {
    const double cap = std::log(static_cast<double>(k)) + 1e-9;
    const ContrastiveBatch m = make_marginal_batch(w, 8, k, rng);
    const ContrastiveBatch c = make_conditional_batch(w, 8, k, rng);
    for (const Vector& v : {nce_values(wild, m), cnce_values(wild, c), is_values(wild, wild, m),
                            bo_values(wild, wild, m)}) {
      EXPECT_LE(v.maxCoeff(), cap);
      if (k == 1) EXPECT_TRUE(v.isZero(0.0));
    }
  }
}

TEST(Values, GaugeInvariance) {
  const GaussianWorld w = two_nat_world();
  Rng rng(8);
  const AnalyticCritic psi(w, CriticRole::unconditional);
  const AnalyticCritic phi(w, CriticRole::conditional);
  auto h = [](const RowRef& x, const RowRef& xp) { return 3.0 * x.sum() - std::exp(xp(0)); };
  const ShiftedCritic psi_h(psi, h), phi_h(phi, h);
  const ContrastiveBatch m = make_marginal_batch(w, 32, 16, rng);
  const ContrastiveBatch c = make_conditional_batch(w, 32, 16, rng);
  EXPECT_LT((nce_values(psi_h, m) - nce_values(psi, m)).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((cnce_values(phi_h, c) - cnce_values(phi, c)).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((is_values(phi_h, psi, m) - is_values(phi, psi, m)).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((is_values(phi, psi_h, m) - is_values(phi, psi, m)).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((bo_values(phi_h, psi, m) - bo_values(phi, psi, m)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Values, ImportanceCollapsesToNceForConstantPsi) {
  const GaussianWorld w = two_nat_world();
  Rng rng(9);
  const AnalyticCritic phi(w, CriticRole::conditional);
  const ContrastiveBatch m = make_marginal_batch(w, 64, 32, rng);
  const Vector a = is_values(phi, ConstantCritic(-2.5), m);
  const Vector b = nce_values(phi, m);
  EXPECT_EQ(a, b);
}

TEST(Values, BoostedCollapsesToNceForZeroPhi) {
  const GaussianWorld w = two_nat_world();
  Rng rng(10);
  const AnalyticCritic psi(w, CriticRole::unconditional);
  const ContrastiveBatch m = make_marginal_batch(w, 64, 32, rng);
  EXPECT_EQ(bo_values(ConstantCritic(0.0), psi, m), nce_values(psi, m));
}

TEST(Values, VariationalCollapsesToCnceForExactQ) {
  const GaussianWorld w = two_nat_world();
  Rng rows_rng(11);
  const JointSamples joint = w.sample_joint(64, rows_rng);
  const VariationalGaussian q = VariationalGaussian::from_conditional(w);
  Rng a(12), b(12);
  const ContrastiveBatch vb = make_variational_batch(q, joint, 32, a);
  const ContrastiveBatch cb = make_conditional_batch(w, joint, 32, b);
  EXPECT_EQ(vb.candidates(), cb.candidates());
  const AnalyticCritic phi(w, CriticRole::conditional);
  const VariationalBound vbound = var_bound(phi, q, w, vb);
  EXPECT_EQ(vbound.kl, 0.0);
  EXPECT_EQ(vbound.values, cnce_values(phi, cb));
  EXPECT_EQ(vbound.estimate.mean, vbound.values.mean());
}

TEST(Values, ConditionalIndependenceGivesZeroCnce) {
  const GaussianWorld w = cond_independent_world(2);
  Rng rng(13);
  const AnalyticCritic phi(w, CriticRole::conditional);
  EXPECT_LT(cnce_values(phi, make_conditional_batch(w, 16, 32, rng)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Values, OptimalCriticsRecoverTwoNats) {
  const GaussianWorld w = two_nat_world();
  Rng rng(14);
  const AnalyticCritic total(w, CriticRole::total);
  const AnalyticCritic psi(w, CriticRole::unconditional);
  const AnalyticCritic phi(w, CriticRole::conditional);
  const ContrastiveBatch m = make_marginal_batch(w, 20000, 1024, rng);
  EXPECT_NEAR(mean(nce_values(total, m)), 2.0, 0.05);
  EXPECT_NEAR(mean(bo_values(phi, psi, m)), 2.0, 0.06);
}

TEST(Values, OptimalConditionalCriticRecoversConditionalMi) {
  const GaussianWorld w = two_nat_world();
  Rng rng(15);
  const AnalyticCritic phi(w, CriticRole::conditional);
  const AnalyticCritic psi(w, CriticRole::unconditional);
  EXPECT_NEAR(mean(cnce_values(phi, make_conditional_batch(w, 20000, 1024, rng))), 1.5, 0.05);
  EXPECT_NEAR(mean(is_values(phi, psi, make_marginal_batch(w, 5000, 4096, rng))), 1.5, 0.1);
}

TEST(Values, SirWithLargePoolApproachesConditionalMi) {
  const GaussianWorld w = two_nat_world();
  Rng rng(16);
  const AnalyticCritic phi(w, CriticRole::conditional);
  auto psi = [&w](const RowRef& xp, const RowRef& y) { return w.optimal_psi(xp, y); };
  Vector all(400);
  for (int chunk = 0; chunk < 4; ++chunk) {
    const JointSamples joint = w.sample_joint(100, rng);
    const Matrix pool = w.sample_marginal_y(20000, rng);
    all.segment(chunk * 100, 100) = sir_values(phi, make_sir_batch(psi, joint, pool, 1024, rng));
  }
  EXPECT_NEAR(mean(all), 1.5, 0.1);
  EXPECT_LE(all.maxCoeff(), std::log(1024.0) + 1e-9);
}

TEST(Values, MonotoneInK) {
  const GaussianWorld w = two_nat_world();
  const AnalyticCritic total(w, CriticRole::total);
  double prev = -1.0, prev_se = 0.0;
  for (std::size_t k : {16u, 256u, 4096u}) {
    Rng rng(17 + k);
    const Vector v = nce_values(total, make_marginal_batch(w, k == 4096 ? 2000 : 10000, k, rng));
    EXPECT_GE(mean(v) + 2.0 * std::hypot(stderr_of(v), prev_se), prev);
    EXPECT_LE(mean(v), std::log(static_cast<double>(k)));
    prev = mean(v);
    prev_se = stderr_of(v);
  }
}

TEST(Summaries, CapIsEnforced) {
  Vector v = Vector::Constant(4, 1.0);
  EXPECT_NO_THROW(summarize(v, 4, std::log(4.0)));
  EXPECT_THROW(summarize(v, 2, 0.5), InvariantError);
  EXPECT_DOUBLE_EQ(split_cap(128), 2.0 * std::log(64.0));
  EXPECT_DOUBLE_EQ(shared_cap(128), 2.0 * std::log(128.0));
}

TEST(DemiObjective, ConstantCriticsAndOddK) {
  const GaussianWorld w = two_nat_world();
  Rng rng(18);
  const ConstantCritic k;
  EXPECT_EQ(demi_objective(k, k, w, 32, 16, rng).mean, 0.0);
  EXPECT_THROW(demi_objective(k, k, w, 33, 16, rng), ConfigError);
}

TEST(DemiObjective, AnalyticCriticsRecoverTotal) {
  const GaussianWorld w = two_nat_world();
  Rng rng(19);
  const AnalyticCritic psi(w, CriticRole::unconditional);
  const AnalyticCritic phi(w, CriticRole::conditional);
  const BoundEstimate e = demi_objective(psi, phi, w, 2048, 10000, rng);
  EXPECT_NEAR(e.mean, 2.0, 0.08);
  EXPECT_DOUBLE_EQ(e.cap, split_cap(2048));
}

TEST(SharedNegatives, ImportanceTermVanishesUnderConditionalIndependence) {
  const GaussianWorld w = cond_independent_world(2);
  Rng a(20), b(20);
  const AnalyticCritic psi(w, CriticRole::unconditional);
  const AnalyticCritic phi(w, CriticRole::conditional);
  const BoundEstimate both = shared_negatives_estimate(psi, phi, w, 64, 500, a);
  const BoundEstimate nce_only = shared_negatives_estimate(psi, ConstantCritic(), w, 64, 500, b);
  EXPECT_NEAR(both.mean, nce_only.mean, 1e-9);
  EXPECT_DOUBLE_EQ(both.cap, shared_cap(64));
}

// ---------------------------------------------------------------- variational

TEST(Variational, KlAgainstMarginalIsMarginalMi) {
  const GaussianWorld w = two_nat_world();
  EXPECT_NEAR(expected_kl(w, VariationalGaussian::from_marginal(w)), w.mi_marg(), 1e-12);
  EXPECT_EQ(expected_kl(w, VariationalGaussian::from_conditional(w)), 0.0);
}

TEST(Variational, RejectsBadParameters) {
  EXPECT_THROW(VariationalGaussian(Vector::Zero(2), Vector::Zero(3), Vector::Zero(2)), ShapeError);
  Vector bad = Vector::Zero(2);
  bad(1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(VariationalGaussian(Vector::Zero(2), Vector::Zero(2), bad), InvariantError);
}

TEST(Variational, TrainingReachesTruth) {
  const GaussianWorld w = two_nat_world();
  Rng rng(21);
  const VariationalFit fit = train_variational(w, {}, rng);
  EXPECT_LT(expected_kl(w, fit.q), 0.05);
  ASSERT_GE(fit.heldout_nll.size(), 2u);
  EXPECT_LT(fit.heldout_nll.back(), fit.heldout_nll.front());
}

TEST(Variational, IndependentSubviewLearnsZeroSlope) {
  const GaussianWorld w = xp_independent_world(2);
  Rng rng(22);
  VariationalTrainOptions o;
  o.steps = 3000;
  const VariationalFit fit = train_variational(w, o, rng);
  EXPECT_LT(fit.q.slope().cwiseAbs().maxCoeff(), 0.02);
}

TEST(Variational, Deterministic) {
  const GaussianWorld w = two_nat_world();
  VariationalTrainOptions o;
  o.steps = 200;
  Rng a(23), b(23);
  const VariationalFit x = train_variational(w, o, a), y = train_variational(w, o, b);
  EXPECT_EQ(x.q.slope(), y.q.slope());
  EXPECT_EQ(x.q.log_sd(), y.q.log_sd());
  o.steps = 0;
  EXPECT_THROW(train_variational(w, o, a), ConfigError);
}

// ---------------------------------------------------------------- gradients

struct LossCase {
  EstimatorKind kind;
  bool shared;
  PsiStarMode psi_star;
};

class LossGradient : public ::testing::TestWithParam<LossCase> {};

TEST_P(LossGradient, MatchesFiniteDifferences) {
  const LossCase c = GetParam();
  const GaussianWorld w = two_nat_world();
  Rng rng(24);
  nn::CriticNet psi = nn::CriticNet::random(4, rng, 12, 12);
  nn::CriticNet phi = nn::CriticNet::random(4, rng, 12, 12);
  const VariationalGaussian q = VariationalGaussian::from_marginal(w);
  const StepBatches batches = draw_step_batches(c.kind, w, 5, 8, rng, &q);

  auto loss_value = [&](nn::Graph& g, nn::NetVars& pv, nn::NetVars& fv, bool trainable) {
    pv = nn::bind(g, psi, trainable);
    fv = c.shared ? pv : nn::bind(g, phi, trainable);
    return training_loss(g, pv, fv, c.kind, batches, w, c.psi_star);
  };
  nn::Graph g;
  nn::NetVars pv, fv;
  const nn::Var loss = loss_value(g, pv, fv, true);
  g.backward(loss);
  auto f = [&] {
    nn::Graph h;
    nn::NetVars a, b;
    return h.value(loss_value(h, a, b, false))(0, 0);
  };
  const auto psi_grads = nn::gradients(g, pv, psi);
  auto r = testing::finite_difference_check(psi.parameters(), psi_grads, f, 10, rng);
  EXPECT_LT(r.max_rel_error, 1e-4);
  if (!c.shared && c.kind != EstimatorKind::nce) {
    const auto phi_grads = nn::gradients(g, fv, phi);
    r = testing::finite_difference_check(phi.parameters(), phi_grads, f, 10, rng);
    EXPECT_LT(r.max_rel_error, 1e-4);
  }
}

INSTANTIATE_TEST_SUITE_P(
    AllKinds, LossGradient,
    ::testing::Values(LossCase{EstimatorKind::nce, true, PsiStarMode::frozen_trained},
                      LossCase{EstimatorKind::demi, true, PsiStarMode::frozen_trained},
                      LossCase{EstimatorKind::demi, false, PsiStarMode::frozen_trained},
                      LossCase{EstimatorKind::demi_is, false, PsiStarMode::analytic},
                      LossCase{EstimatorKind::demi_bo, false, PsiStarMode::analytic},
                      LossCase{EstimatorKind::demi_var, false, PsiStarMode::frozen_trained}));

Matrix pair_scores(const Matrix& anchors, const Matrix& candidates, std::size_t k) {
  Matrix s(anchors.rows(), static_cast<Eigen::Index>(k));
  for (Eigen::Index b = 0; b < s.rows(); ++b)
    for (Eigen::Index j = 0; j < s.cols(); ++j)
      s(b, j) = anchors.row(b).dot(candidates.row(b * s.cols() + j));
  return s;
}

double mean_ratio(const Matrix& logits) { return nn::contrastive_log_ratio(logits).mean(); }

// The shared-net protocol loss treats psi* = stop_gradient(psi); the finite
// differences therefore run against a reference whose psi* logits are held
// at their starting value.
TEST(LossGradient, ProtocolMatchesFrozenReference) {
  const GaussianWorld w = two_nat_world();
  Rng rng(29);
  nn::CriticNet net = nn::CriticNet::random(4, rng, 12, 12);
  const StepBatches batches = draw_step_batches(EstimatorKind::demi_bo_protocol, w, 5, 8, rng);
  const ContrastiveBatch& m = *batches.marginal;
  const Matrix frozen = NetCritic(net, CriticRole::unconditional).logits(m);

  nn::Graph g;
  const nn::NetVars v = nn::bind(g, net);
  g.backward(training_loss(g, v, v, EstimatorKind::demi_bo_protocol, batches, w,
                           PsiStarMode::frozen_trained));
  auto f = [&] {
    const Matrix s_psi = NetCritic(net, CriticRole::unconditional).logits(m);
    const Matrix s_phi = NetCritic(net, CriticRole::conditional).logits(m);
    return -(mean_ratio(s_psi) + mean_ratio(frozen + s_phi));
  };
  EXPECT_NEAR(-f(), -g.value(training_loss(g, v, v, EstimatorKind::demi_bo_protocol, batches, w,
                                            PsiStarMode::frozen_trained))(0, 0),
              1e-12);
  const auto r = testing::finite_difference_check(net.parameters(), nn::gradients(g, v, net), f, 20, rng);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

// With separate nets and a frozen psi*, the BO/IS terms must leave psi's
// gradient equal to that of the I_NCE(x'; y) term alone.
TEST(LossGradient, FrozenPsiCarriesNoGradientThroughConditionalTerm) {
  const GaussianWorld w = two_nat_world();
  for (EstimatorKind kind : {EstimatorKind::demi_bo, EstimatorKind::demi_is}) {
    Rng rng(25);
    const nn::CriticNet psi = nn::CriticNet::random(4, rng, 10, 10);
    const nn::CriticNet phi = nn::CriticNet::random(4, rng, 10, 10);
    const StepBatches batches = draw_step_batches(kind, w, 6, 8, rng);

    nn::Graph g;
    const nn::NetVars pv = nn::bind(g, psi), fv = nn::bind(g, phi);
    g.backward(training_loss(g, pv, fv, kind, batches, w, PsiStarMode::frozen_trained));

    nn::Graph h;
    const nn::NetVars pv2 = nn::bind(h, psi);
    const nn::Var y = nn::encode(h, pv2, h.constant(candidate_inputs(*batches.marginal)));
    const nn::Var s = net_logits(h, pv2, CriticRole::unconditional, *batches.marginal, y);
    h.backward(h.scale(h.mean(h.contrastive_log_ratio(s)), -1.0));

    const auto a = nn::gradients(g, pv, psi), b = nn::gradients(h, pv2, psi);
    for (std::size_t i = 0; i < a.size(); ++i)
      EXPECT_LT((a[i].matrix() - b[i].matrix()).cwiseAbs().maxCoeff(), 1e-14);
  }
}

// ---------------------------------------------------------------- symmetric

TEST(Symmetric, ZeroNetsGiveZeroLoss) {
  const GaussianWorld w = two_nat_world();
  Rng rng(26);
  const SymmetricNets nets{nn::CriticNet(4), nn::CriticNet(4)};
  EXPECT_EQ(demi_symmetric_loss(nets, make_marginal_batch(w, 8, 16, rng)), 0.0);
}

TEST(Symmetric, TermsRespectCapAndNeedMarginals) {
  const GaussianWorld w = two_nat_world();
  Rng rng(27);
  const SymmetricNets nets = SymmetricNets::random(2, rng);
  const ContrastiveBatch b = make_marginal_batch(w, 8, 16, rng);
  nn::Graph g;
  const SymmetricTerms t = demi_symmetric(g, nn::bind(g, nets.nce_net), nn::bind(g, nets.bo_net), b);
  for (const auto& term : t.terms) EXPECT_LE(g.value(term).maxCoeff(), std::log(16.0) + 1e-9);
  nn::Graph h;
  EXPECT_THROW(demi_symmetric(h, nn::bind(h, nets.nce_net), nn::bind(h, nets.bo_net),
                              make_conditional_batch(w, 4, 16, rng)),
               SourceMismatch);
}

TEST(Symmetric, GradientMatchesFiniteDifferences) {
  const GaussianWorld w = two_nat_world();
  Rng rng(28);
  SymmetricNets nets{nn::CriticNet::random(4, rng, 12, 12), nn::CriticNet::random(4, rng, 12, 12)};
  const ContrastiveBatch b = make_marginal_batch(w, 5, 6, rng);
  nn::Graph g;
  const nn::NetVars nv = nn::bind(g, nets.nce_net), bv = nn::bind(g, nets.bo_net);
  g.backward(demi_symmetric(g, nv, bv, b).loss);

  // Reference with the stop-gradient scores frozen at their starting value.
  const Matrix in_x = nn::pad_rows(b.anchors_x()), in_xp = nn::pad_rows(b.anchors_xp());
  auto scores = [&](const nn::CriticNet& anchor, const Matrix& in) {
    return pair_scores(nn::encode_rows(anchor, in), nn::encode_rows(nets.nce_net, candidate_inputs(b)),
                       b.k());
  };
  const Matrix frozen_xp = scores(nets.nce_net, in_xp), frozen_x = scores(nets.nce_net, in_x);
  auto f = [&] {
    return -(mean_ratio(scores(nets.nce_net, in_xp)) + mean_ratio(frozen_xp + scores(nets.bo_net, in_x)) +
             mean_ratio(scores(nets.nce_net, in_x)) + mean_ratio(frozen_x + scores(nets.bo_net, in_xp)));
  };
  EXPECT_NEAR(f(), demi_symmetric_loss(nets, b), 1e-12);
  auto r = testing::finite_difference_check(nets.nce_net.parameters(), nn::gradients(g, nv, nets.nce_net),
                                            f, 10, rng);
  EXPECT_LT(r.max_rel_error, 1e-4);
  r = testing::finite_difference_check(nets.bo_net.parameters(), nn::gradients(g, bv, nets.bo_net), f,
                                       10, rng);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

// ---------------------------------------------------------------- training

TrainConfig small_config(EstimatorKind kind) {
  TrainConfig c;
  c.kind = kind;
  c.k = 16;
  c.batch = 8;
  c.steps = 20;
  c.eval_interval = 10;
  c.eval_batches = 2;
  c.seed = 3;
  return c;
}

TEST(Training, ValidatesConfig) {
  TrainConfig c = small_config(EstimatorKind::demi);
  c.k = 7;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_estimator_kind("nope"), ConfigError);
  EXPECT_EQ(parse_estimator_kind("demi_bo_protocol"), EstimatorKind::demi_bo_protocol);
}

TEST(Training, SingleStepGivesOneCurvePoint) {
  TrainConfig c = small_config(EstimatorKind::nce);
  c.steps = 1;
  const TrainResult r = train_estimator(two_nat_world(), c);
  ASSERT_EQ(r.curve.size(), 1u);
  EXPECT_EQ(r.curve[0].step, 1u);
}

TEST(Training, DeterministicAndCapped) {
  const GaussianWorld w = two_nat_world();
  for (EstimatorKind kind : {EstimatorKind::nce, EstimatorKind::demi, EstimatorKind::demi_is,
                             EstimatorKind::demi_bo, EstimatorKind::demi_var,
                             EstimatorKind::demi_bo_protocol}) {
    const TrainConfig c = small_config(kind);
    const TrainResult a = train_estimator(w, c), b = train_estimator(w, c);
    ASSERT_EQ(a.curve.size(), 2u) << to_string(kind);
    for (std::size_t i = 0; i < a.curve.size(); ++i) {
      EXPECT_EQ(a.curve[i].step, b.curve[i].step);
      EXPECT_EQ(a.curve[i].estimate.mean, b.curve[i].estimate.mean) << to_string(kind);
      EXPECT_LE(a.curve[i].estimate.mean, estimate_cap(kind, c.k) + 1e-9);
    }
    EXPECT_EQ(a.final_estimate.mean, b.final_estimate.mean);
    ASSERT_TRUE(a.critics);
    EXPECT_EQ(a.critics->q.has_value(), kind == EstimatorKind::demi_var);
  }
}

TEST(Training, AnalyticModeSkipsTraining) {
  TrainConfig c = small_config(EstimatorKind::nce);
  c.critic = CriticMode::analytic;
  c.k = 1024;
  c.batch = 500;
  c.eval_batches = 10;
  const TrainResult r = train_estimator(two_nat_world(), c);
  EXPECT_FALSE(r.critics);
  ASSERT_FALSE(r.curve.empty());
  EXPECT_NEAR(r.final_estimate.mean, 2.0, 0.1);
}

TEST(Training, DivergenceAbortsWithStep) {
  TrainConfig c = small_config(EstimatorKind::nce);
  c.lr = 1e150;
  c.steps = 50;
  try {
    train_estimator(two_nat_world(), c);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_GE(e.step(), 1);
  }
}

TEST(Training, LearnsSomething) {
  TrainConfig c = small_config(EstimatorKind::nce);
  c.steps = 400;
  c.batch = 32;
  c.eval_interval = 200;
  c.eval_batches = 8;
  c.lr = 2e-3;
  const TrainResult r = train_estimator(two_nat_world(), c);
  EXPECT_GT(r.final_estimate.mean, 0.8);
}

TEST(Training, CheckpointRoundTrip) {
  const TrainResult r = train_estimator(two_nat_world(), small_config(EstimatorKind::demi_var));
  ASSERT_TRUE(r.critics);
  const auto json = nn::checkpoint_to_json(to_checkpoint(*r.critics));
  const TrainedCritics back = critics_from_checkpoint(nn::checkpoint_from_json(json));
  EXPECT_EQ(back.psi_net.w1.data(), r.critics->psi_net.w1.data());
  ASSERT_TRUE(back.q);
  EXPECT_EQ(back.q->slope(), r.critics->q->slope());
  EXPECT_EQ(back.phi_net.has_value(), r.critics->phi_net.has_value());
}

}  // namespace
}  // namespace demi
