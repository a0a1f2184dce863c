#include <cmath>

#include "demi/cov_search.hpp"
#include "demi/errors.hpp"
#include "demi/nn/critic_net.hpp"
#include "demi/oracles.hpp"

namespace demi::oracles {

namespace {

constexpr std::uint64_t kWorldSeed = 7;

void append(std::vector<OracleReport>& out, const SirMomentReport& r) {
  out.push_back(r.mean);
  out.push_back(r.variance);
}

std::vector<OracleReport> mi_suite(std::uint64_t seed) {
  std::vector<OracleReport> out;
  const GaussianWorld independent = uniform_world(TriCov::identity(), 5);
  Rng r1(derive_seed(seed, {"oracle", "mi", "independent"}));
  for (MiKind k : {MiKind::joint, MiKind::marginal, MiKind::conditional})
    out.push_back(mc_mi(independent, k, 10000, r1));

  Rng r2(derive_seed(seed, {"oracle", "mi", "rho_half"}));
  out.push_back(mc_mi(rho_half_world(), MiKind::marginal, 1000000, r2));

  const GaussianWorld w = synthesize_world(5.0, 20, kWorldSeed);
  Rng r3(derive_seed(seed, {"oracle", "mi", "synth"}));
  for (MiKind k : {MiKind::joint, MiKind::marginal, MiKind::conditional})
    out.push_back(mc_mi(w, k, 100000, r3));
  out.push_back(mc_chain_rule(w, 100000, r3));
  return out;
}

std::vector<OracleReport> bounds_suite(std::uint64_t seed) {
  std::vector<OracleReport> out;
  const GaussianWorld w2 = two_nat_world();
  Rng rng(derive_seed(seed, {"oracle", "bounds"}));
  out.push_back(mc_bound(BoundKind::nce, w2, 1, 1000, 0.0, rng));
  out.push_back(mc_bound(BoundKind::nce, w2, 1024, 20000, 0.15, rng));
  out.push_back(mc_bound(BoundKind::boosted, w2, 1024, 20000, 0.15, rng));
  out.push_back(mc_bound(BoundKind::cnce, w2, 4096, 10000, 0.15, rng));
  out.push_back(mc_bound(BoundKind::importance, w2, 4096, 10000, 0.15, rng));
  out.push_back(mc_bound(BoundKind::sir, w2, 256, 2000, 0.15, rng));
  out.push_back(mc_bound(BoundKind::nce, five_nat_world(), 16, 20000, 0.5, rng));
  return out;
}

std::vector<OracleReport> sir_suite(std::uint64_t seed) {
  std::vector<OracleReport> out;
  Rng rng(derive_seed(seed, {"oracle", "sir"}));
  append(out, sir_moment_check(rho_half_world(), 100000, 1000, 200, 0.02, rng));
  append(out, sir_moment_check(
                  rho_half_world(), [](const RowRef&, const RowRef&) { return 0.0; }, 100000,
                  1000, 200, 0.02, rng, Proposal::marginal));
  return out;
}

std::vector<OracleReport> normalization_suite(std::uint64_t seed) {
  std::vector<OracleReport> out;
  const GaussianWorld w = two_nat_world();
  const GaussianLogRatios lr(w);
  Rng init(derive_seed(seed, {"oracle", "normalization", "mlp"}));
  const nn::CriticNet net = nn::CriticNet::random(2 * w.dims(), init);
  Rng rng(derive_seed(seed, {"oracle", "normalization"}));
  const std::size_t k = 16, trials = 10000;
  out.push_back(normalization_check(
      w, [](const RowRef&, const RowRef&, const RowRef&) { return 0.0; }, Proposal::marginal, k,
      trials, rng, "normalization/constant"));
  out.push_back(normalization_check(
      w,
      [&net](const RowRef&, const RowRef& xp, const RowRef& y) {
        return nn::critic_value(net, nn::pad_single(xp), nn::pad_single(y));
      },
      Proposal::marginal, k, trials, rng, "normalization/random_mlp"));
  out.push_back(normalization_check(
      w, [&lr](const RowRef&, const RowRef& xp, const RowRef& y) { return lr.unconditional(xp, y); },
      Proposal::marginal, k, trials, rng, "normalization/analytic_psi"));
  out.push_back(normalization_check(
      w,
      [&lr](const RowRef& x, const RowRef& xp, const RowRef& y) { return lr.conditional(x, xp, y); },
      Proposal::conditional, k, trials, rng, "normalization/analytic_phi"));
  return out;
}

}  // namespace

GaussianWorld two_nat_world() {
  return build_world(CovarianceTarget{2.0, {1.0, 1.0}, {0.25, 0.25}}, kWorldSeed);
}

GaussianWorld five_nat_world() {
  return build_world(CovarianceTarget{5.0, {2.5, 2.5}, {0.5, 0.5}}, kWorldSeed);
}

GaussianWorld rho_half_world() { return uniform_world(TriCov::equicorrelated(0.5), 1); }

std::vector<std::string> suite_names() { return {"mi", "bounds", "sir", "normalization", "all"}; }

std::vector<OracleReport> run_suite(const std::string& suite, std::uint64_t seed) {
  if (suite == "mi") return mi_suite(seed);
  if (suite == "bounds") return bounds_suite(seed);
  if (suite == "sir") return sir_suite(seed);
  if (suite == "normalization") return normalization_suite(seed);
  if (suite == "all") {
    std::vector<OracleReport> out;
    for (const auto& name : {"mi", "bounds", "sir", "normalization"})
      for (auto& r : run_suite(name, seed)) out.push_back(std::move(r));
    return out;
  }
  throw ConfigError("unknown oracle suite '" + suite + "'");
}

}  // namespace demi::oracles
