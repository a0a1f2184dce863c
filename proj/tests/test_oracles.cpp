#include <cmath>

#include <gtest/gtest.h>
#include <json.hpp>

#include "demi/errors.hpp"
#include "demi/oracles.hpp"

namespace demi::oracles {
namespace {

TEST(MeanStderr, KnownSample) {
  const MeanStderr m = mean_stderr({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(m.mean, 2.5);
  EXPECT_NEAR(m.std_error, std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
}

TEST(Report, JsonLine) {
  const OracleReport r = make_report("x", 1.0, 0.1, 10, 1.05, 0.1);
  EXPECT_TRUE(r.pass);
  EXPECT_FALSE(make_report("x", 1.0, 0.1, 10, 1.2, 0.1).pass);
  const std::string line = r.to_json_line();
  EXPECT_EQ(line.find('\n'), std::string::npos);
  const auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j.at("format_version"), 1);
  EXPECT_EQ(j.at("quantity"), "x");
  EXPECT_EQ(j.at("pass"), true);
}

// The reference worlds come out of the covariance search, so they match
// their targets to the search tolerance only.
TEST(ReferenceWorlds, HaveStatedInformation) {
  const GaussianWorld two = two_nat_world();
  EXPECT_NEAR(two.mi_joint(), 2.0, 1e-5);
  EXPECT_NEAR(two.mi_marg(), 0.5, 1e-5);
  EXPECT_NEAR(five_nat_world().mi_joint(), 5.0, 1e-5);
  EXPECT_NEAR(five_nat_world().mi_marg(), 2.5, 1e-5);
  EXPECT_NEAR(rho_half_world().mi_joint(), 0.5 * std::log(1.5), 1e-12);
}

TEST(LogRatios, AgreeWithWorld) {
  const GaussianWorld w = two_nat_world();
  const GaussianLogRatios lr(w);
  Rng rng(1);
  const JointSamples s = w.sample_joint(50, rng);
  const Matrix y = w.sample_marginal_y(50, rng);
  for (Eigen::Index i = 0; i < 50; ++i) {
    EXPECT_NEAR(lr.unconditional(s.xp.row(i), y.row(i)), w.optimal_psi(s.xp.row(i), y.row(i)), 1e-9);
    EXPECT_NEAR(lr.conditional(s.x.row(i), s.xp.row(i), y.row(i)),
                w.optimal_phi(s.xp.row(i), s.x.row(i), y.row(i)), 1e-9);
    EXPECT_NEAR(lr.total(s.x.row(i), s.xp.row(i), y.row(i)),
                w.optimal_joint(s.x.row(i), s.xp.row(i), y.row(i)), 1e-9);
  }
}

TEST(McMi, IndependenceWorldIsZero) {
  const GaussianWorld w = uniform_world(TriCov::identity(), 3);
  Rng rng(2);
  const OracleReport r = mc_mi(w, MiKind::joint, 2000, rng);
  EXPECT_EQ(r.value, 0.0);
  EXPECT_TRUE(r.pass);
}

TEST(McMi, RhoHalfMarginal) {
  Rng rng(3);
  const OracleReport r = mc_mi(rho_half_world(), MiKind::marginal, 100000, rng);
  EXPECT_TRUE(r.pass);
  EXPECT_NEAR(r.reference, 0.1438410362, 1e-9);
  EXPECT_NEAR(r.value, r.reference, 3.0 * r.std_error);
}

TEST(McMi, SmallSampleThrows) {
  Rng rng(4);
  EXPECT_THROW(mc_mi(two_nat_world(), MiKind::joint, 999, rng), ConfigError);
}

TEST(McChainRule, HoldsPerSample) {
  Rng rng(5);
  const OracleReport r = mc_chain_rule(two_nat_world(), 5000, rng);
  EXPECT_TRUE(r.pass);
  EXPECT_LT(std::abs(r.value), 1e-9);
}

TEST(McBound, SingleCandidateIsZero) {
  Rng rng(6);
  for (BoundKind k : {BoundKind::nce, BoundKind::cnce, BoundKind::boosted}) {
    const OracleReport r = mc_bound(k, two_nat_world(), 1, 200, 1e-12, rng);
    EXPECT_EQ(r.value, 0.0) << to_string(k);
    EXPECT_TRUE(r.pass);
  }
}

TEST(McBound, SaturatesAtLogK) {
  Rng rng(7);
  const OracleReport r = mc_bound(BoundKind::nce, five_nat_world(), 16, 4000, 0.5, rng);
  EXPECT_DOUBLE_EQ(r.reference, std::log(16.0));
  EXPECT_LE(r.value, std::log(16.0));
  EXPECT_GT(r.value, 2.3);
}

TEST(McBound, TwoNatWorldTargets) {
  Rng rng(8);
  EXPECT_TRUE(mc_bound(BoundKind::nce, two_nat_world(), 1024, 5000, 0.1, rng).pass);
  EXPECT_TRUE(mc_bound(BoundKind::nce_marginal, two_nat_world(), 256, 5000, 0.1, rng).pass);
  EXPECT_TRUE(mc_bound(BoundKind::cnce, two_nat_world(), 1024, 5000, 0.1, rng).pass);
}

TEST(SirMoments, PoolTooSmallThrows) {
  Rng rng(9);
  EXPECT_THROW(sir_moment_check(two_nat_world(), 99, 10, 10, 0.1, rng), ConfigError);
}

TEST(SirMoments, MatchConditional) {
  Rng rng(10);
  const SirMomentReport r = sir_moment_check(two_nat_world(), 20000, 200, 200, 0.05, rng);
  EXPECT_TRUE(r.pass()) << r.mean.value << " " << r.variance.value;
}

TEST(SirMoments, ConstantWeightsDoNotReachConditional) {
  Rng rng(11);
  auto flat = [](const RowRef&, const RowRef&) { return 0.0; };
  const GaussianWorld w = two_nat_world();
  EXPECT_FALSE(sir_moment_check(w, flat, 20000, 200, 200, 0.05, rng).pass());
  EXPECT_TRUE(sir_moment_check(w, flat, 20000, 200, 200, 0.05, rng, Proposal::marginal).pass());
}

TEST(Normalization, ConstantCriticIsExactlyOne) {
  Rng rng(12);
  auto c = [](const RowRef&, const RowRef&, const RowRef&) { return 4.2; };
  const OracleReport r = normalization_check(two_nat_world(), c, Proposal::marginal, 8, 10000, rng);
  EXPECT_EQ(r.value, 1.0);
  EXPECT_TRUE(r.pass);
}

TEST(Normalization, TooFewTrialsThrows) {
  Rng rng(13);
  auto c = [](const RowRef&, const RowRef&, const RowRef&) { return 0.0; };
  EXPECT_THROW(normalization_check(two_nat_world(), c, Proposal::marginal, 8, 9999, rng), ConfigError);
}

TEST(Normalization, OptimalCriticsNormalize) {
  const GaussianWorld w = two_nat_world();
  const GaussianLogRatios lr(w);
  Rng rng(14);
  auto psi = [&](const RowRef&, const RowRef& xp, const RowRef& y) { return lr.unconditional(xp, y); };
  auto phi = [&](const RowRef& x, const RowRef& xp, const RowRef& y) { return lr.conditional(x, xp, y); };
  EXPECT_TRUE(normalization_check(w, psi, Proposal::marginal, 16, 20000, rng).pass);
  EXPECT_TRUE(normalization_check(w, phi, Proposal::conditional, 16, 20000, rng).pass);
}

TEST(Suites, NamesAndUnknown) {
  const auto names = suite_names();
  EXPECT_NE(std::find(names.begin(), names.end(), "all"), names.end());
  EXPECT_NE(std::find(names.begin(), names.end(), "normalization"), names.end());
  EXPECT_THROW(run_suite("nope", 1), ConfigError);
}

TEST(Suites, MiSuitePasses) {
  for (const OracleReport& r : run_suite("mi", 3)) EXPECT_TRUE(r.pass) << r.to_json_line();
}

}  // namespace
}  // namespace demi::oracles
