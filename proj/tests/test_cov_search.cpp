#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "demi/cov_search.hpp"
#include "demi/errors.hpp"
#include "demi/nelder_mead.hpp"

namespace demi {
namespace {

CovParams identity_params() { return {1.0, 0.0, 1.0, 0.0, 0.0, 1.0}; }

TEST(SplitTotalMi, SingleDimension) {
  Rng rng(1);
  const auto s = split_total_mi(5.0, 1, rng);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0], 5.0);
}

TEST(SplitTotalMi, PositiveAndSumsToTotal) {
  Rng rng(2);
  const auto s = split_total_mi(10.0, 20, rng);
  ASSERT_EQ(s.size(), 20u);
  for (double v : s) EXPECT_GT(v, 0.0);
  EXPECT_NEAR(std::accumulate(s.begin(), s.end(), 0.0), 10.0, 1e-9);
}

TEST(SplitTotalMi, Reproducible) {
  Rng a(3), b(3);
  EXPECT_EQ(split_total_mi(7.0, 5, a), split_total_mi(7.0, 5, b));
}

TEST(ProjectPosdef, IdentityFactor) {
  EXPECT_EQ(project_posdef(identity_params()).matrix(), Eigen::Matrix3d::Identity());
}

TEST(ProjectPosdef, ZeroRowIsRejected) {
  CovParams p = identity_params();
  p[1] = p[2] = 0.0;  // second row of L
  EXPECT_THROW(project_posdef(p), DegenerateParams);
}

TEST(ProjectPosdef, RandomParamsAlwaysValid) {
  Rng rng(4);
  std::normal_distribution<double> n;
  int failures = 0;
  for (int t = 0; t < 10000; ++t) {
    CovParams p;
    for (double& v : p) v = n(rng);
    try {
      const TriCov c = project_posdef(p);
      const Eigen::Matrix3d& m = c.matrix();
      if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12) ++failures;
      if ((m.diagonal().array() - 1.0).abs().maxCoeff() > 1e-12) ++failures;
      if (m.llt().info() != Eigen::Success) ++failures;
    } catch (const DegenerateParams&) {
      // Retriable; not an SPD failure.
    }
  }
  EXPECT_EQ(failures, 0);
}

TEST(Residual, IdentityProjection) {
  EXPECT_NEAR(residual(identity_params(), 0.5, 0.5), 0.3125, 1e-15);
}

TEST(Residual, ZeroAtExactTarget) {
  const CovParams p = {1.0, 0.3, 0.9, 0.2, -0.4, 0.8};
  const TriMi mi = analytical_mi(project_posdef(p));
  EXPECT_NEAR(residual(p, mi.joint, mi.marginal / mi.joint), 0.0, 1e-20);
}

TEST(Residual, DegenerateIsInfinite) {
  CovParams p = identity_params();
  p[0] = 0.0;
  EXPECT_TRUE(std::isinf(residual(p, 1.0, 0.5)));
}

TEST(Residual, NonNegative) {
  Rng rng(5);
  std::normal_distribution<double> n;
  for (int t = 0; t < 1000; ++t) {
    CovParams p;
    for (double& v : p) v = n(rng);
    EXPECT_GE(residual(p, 1.0, 0.4), 0.0);
  }
}

TEST(NelderMead, ResidualFromFeasibleStart) {
  const CovParams target = {1.0, 0.5, 0.8, 0.3, -0.6, 0.7};
  const TriMi mi = analytical_mi(project_posdef(target));
  const double alpha = mi.marginal / mi.joint;
  auto f = [&](const std::vector<double>& x) {
    CovParams p;
    std::copy(x.begin(), x.end(), p.begin());
    return residual(p, mi.joint, alpha);
  };
  std::vector<double> start(target.begin(), target.end());
  for (std::size_t i = 0; i < start.size(); ++i) start[i] += 0.02 * (i % 2 ? 1.0 : -1.0);
  NelderMeadOptions o;
  o.max_iterations = 500;
  const auto r = nelder_mead(f, start, o);
  EXPECT_LT(r.f, 1e-10);
  EXPECT_LE(r.iterations, 500u);
}

TEST(NelderMead, InfeasibleRegionIsAvoided) {
  auto f = [](const std::vector<double>& x) {
    if (x[0] < 0.0) return std::numeric_limits<double>::infinity();
    return (x[0] - 1.0) * (x[0] - 1.0) + x[1] * x[1];
  };
  const auto r = nelder_mead(f, {0.5, 0.5});
  EXPECT_NEAR(r.x[0], 1.0, 1e-4);
  EXPECT_TRUE(r.converged);
}

void expect_hits(const CovFit& fit, double mi) {
  const TriMi got = analytical_mi(fit.cov);
  EXPECT_NEAR(got.joint, mi, 1e-2);
  EXPECT_NEAR(got.marginal, fit.alpha * mi, 1e-2);
  EXPECT_GT(fit.alpha, 0.1);
  EXPECT_LT(fit.alpha, 0.9);
}

TEST(SampleCov, SmallTarget) {
  Rng rng(6);
  expect_hits(sample_cov(0.25, rng), 0.25);
}

TEST(SampleCov, LargeTarget) {
  Rng rng(7);
  expect_hits(sample_cov(2.0, rng), 2.0);
}

TEST(SampleCov, Deterministic) {
  Rng a(8), b(8);
  EXPECT_EQ(sample_cov(1.0, a).cov.matrix(), sample_cov(1.0, b).cov.matrix());
}

TEST(SampleCov, RestartHistoryIsMonotone) {
  Rng rng(9);
  CovSearchOptions o;
  o.tol = 1e-12;  // unreachable, so every restart runs
  o.restarts = 4;
  o.nelder_mead.max_iterations = 50;
  try {
    const CovFit fit = fit_cov(1.5, 0.5, rng, o);
    for (std::size_t i = 1; i < fit.best_residual_history.size(); ++i)
      EXPECT_LE(fit.best_residual_history[i], fit.best_residual_history[i - 1]);
  } catch (const TargetUnreachable& e) {
    EXPECT_GT(e.best_residual(), 0.0);
    EXPECT_TRUE(std::isfinite(e.best_residual()));
  }
}

TEST(SampleCov, UnreachableCarriesBestResidual) {
  Rng rng(10);
  CovSearchOptions o;
  o.tol = 1e-30;
  o.restarts = 2;
  o.nelder_mead.max_iterations = 5;
  try {
    fit_cov(3.0, 0.5, rng, o);
    FAIL() << "expected TargetUnreachable";
  } catch (const TargetUnreachable& e) {
    EXPECT_GT(e.best_residual(), 0.0);
  }
}

TEST(CovarianceTarget, Validation) {
  EXPECT_NO_THROW((CovarianceTarget{1.0, {0.4, 0.6}, {0.5, 0.5}}.validate()));
  EXPECT_THROW((CovarianceTarget{1.0, {0.4, 0.5}, {0.5, 0.5}}.validate()), ConfigError);
  EXPECT_THROW((CovarianceTarget{1.0, {1.0}, {0.95}}.validate()), ConfigError);
  EXPECT_THROW((CovarianceTarget{1.0, {-0.5, 1.5}, {0.5, 0.5}}.validate()), ConfigError);
}

TEST(BuildWorld, TinySingleDimension) {
  const GaussianWorld w = synthesize_world(0.1, 1, 3);
  EXPECT_EQ(w.dims(), 1u);
  EXPECT_NEAR(w.mi_joint(), 0.1, 1e-2);
}

TEST(BuildWorld, HitsTotalsAndPerDimensionTargets) {
  for (double total : {5.0, 20.0}) {
    const GaussianWorld w = synthesize_world(total, 20, 11);
    EXPECT_NEAR(w.mi_joint(), total, 0.2);
    EXPECT_NEAR(w.mi_marg() + w.mi_cond(), w.mi_joint(), 1e-9);
    const auto& meta = w.metadata();
    ASSERT_EQ(meta.per_dim_mi.size(), 20u);
    for (std::size_t i = 0; i < 20; ++i) {
      EXPECT_NEAR(w.per_dim_mi()[i].joint, meta.per_dim_mi[i], 1e-2);
      EXPECT_NEAR(w.per_dim_mi()[i].marginal, meta.per_dim_alpha[i] * meta.per_dim_mi[i], 1e-2);
    }
  }
}

TEST(BuildWorld, ExplicitTarget) {
  const GaussianWorld w = build_world({2.0, {1.0, 1.0}, {0.25, 0.25}}, 7);
  EXPECT_NEAR(w.mi_joint(), 2.0, 1e-2);
  EXPECT_NEAR(w.mi_marg(), 0.5, 1e-2);
  EXPECT_NEAR(w.mi_cond(), 1.5, 1e-2);
}

TEST(BuildWorld, SameSeedSameBytes) {
  EXPECT_EQ(synthesize_world(3.0, 4, 5).to_json(), synthesize_world(3.0, 4, 5).to_json());
  EXPECT_NE(synthesize_world(3.0, 4, 5).to_json(), synthesize_world(3.0, 4, 6).to_json());
}

}  // namespace
}  // namespace demi
