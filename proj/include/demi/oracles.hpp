#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "demi/gaussian_world.hpp"
#include "demi/rng.hpp"
#include "demi/types.hpp"

// Brute-force and Monte-Carlo validators. Nothing here calls the estimators
// module: densities, log-ratios and resampling are recomputed from the
// world's covariances.
namespace demi::oracles {

/// One checked quantity. pass is |value - reference| <= tolerance.
struct OracleReport {
  std::string quantity;
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
  double reference = 0.0;
  double tolerance = 0.0;
  bool pass = false;

  /// Single-line JSON object with a format_version field.
  std::string to_json_line() const;
};

OracleReport make_report(std::string quantity, double value, double std_error, std::size_t n,
                         double reference, double tolerance);

/// Mean and standard error of a sample.
struct MeanStderr {
  double mean = 0.0;
  double std_error = 0.0;
};
MeanStderr mean_stderr(const std::vector<double>& v);

enum class MiKind { joint, marginal, conditional };
std::string to_string(MiKind k);

/// Monte-Carlo mean of the analytic PMI over n joint samples, compared with
/// the world's cached MI at 3 stderr. Throws ConfigError when n < 1000.
OracleReport mc_mi(const GaussianWorld& world, MiKind which, std::size_t n, Rng& rng);

/// Mean of PMI_joint - PMI_marginal - PMI_conditional over n samples;
/// reference 0 at 3 stderr (plus 1e-12 for rounding).
OracleReport mc_chain_rule(const GaussianWorld& world, std::size_t n, Rng& rng);

/// Per-dimension Gaussian log-ratios rebuilt from the 3x3 covariances by
/// direct conditioning.
class GaussianLogRatios {
 public:
  explicit GaussianLogRatios(const GaussianWorld& world);

  /// log p(y | x') / p(y)
  double unconditional(const RowRef& xp, const RowRef& y) const;
  /// log p(y | x, x') / p(y | x')
  double conditional(const RowRef& x, const RowRef& xp, const RowRef& y) const;
  /// log p(y | x, x') / p(y)
  double total(const RowRef& x, const RowRef& xp, const RowRef& y) const;

 private:
  struct Dim {
    double b_xp;          // E[y | x'] = b_xp x'
    double var_xp;        // Var[y | x']
    double c_x, c_xp;     // E[y | x, x'] = c_x x + c_xp x'
    double var_joint;     // Var[y | x, x']
    double var_y;
    double h_xp, h_joint, h_y;  // half log variances
  };
  std::vector<Dim> dims_;
};

enum class BoundKind {
  nce,             // total critic, marginal negatives; target I(x, x'; y)
  nce_marginal,    // psi*(x', y), marginal negatives; target I(x'; y)
  cnce,            // phi*, negatives from p(y | x'); target I(x; y | x')
  importance,      // phi* with psi*-weighted marginal negatives; target I(x; y | x')
  boosted,         // psi* + phi*, marginal negatives; target I(x, x'; y)
  sir,             // phi*, negatives resampled from a marginal pool; target I(x; y | x')
};
std::string to_string(BoundKind k);

struct BoundOracleOptions {
  /// Pool size for sir; 0 means 10 K.
  std::size_t sir_pool = 0;
};

/// Monte-Carlo mean and stderr of the per-row values of `kind` with the
/// analytic critics; reference = min(target MI, log K), pass at `tolerance`.
OracleReport mc_bound(BoundKind kind, const GaussianWorld& world, std::size_t k,
                      std::size_t n_rows, double tolerance, Rng& rng,
                      BoundOracleOptions opts = {});

/// Standardized moments of SIR draws against the analytic p(y | x').
struct SirMomentReport {
  OracleReport mean;      // pooled mean of (y - E[y|x']) / sd, reference 0
  OracleReport variance;  // pooled variance of the same, reference 1
  bool pass() const { return mean.pass && variance.pass; }
};

/// For each of n_anchor anchors x' ~ p(x'), resamples K draws from a pool
/// of M marginal draws with weights exp(psi*(x', y)) and compares the
/// standardized moments. Throws ConfigError unless M >= 10 K.
SirMomentReport sir_moment_check(const GaussianWorld& world, std::size_t m, std::size_t k,
                                 std::size_t n_anchor, double tolerance, Rng& rng);

/// Where candidates are drawn from, or which distribution draws are
/// standardized against.
enum class Proposal { marginal, conditional };

/// Same statistic with an arbitrary log-weight function in place of psi*,
/// standardized against p(y | x') or p(y).
SirMomentReport sir_moment_check(const GaussianWorld& world,
                                 const std::function<double(const RowRef&, const RowRef&)>& log_w,
                                 std::size_t m, std::size_t k, std::size_t n_anchor,
                                 double tolerance, Rng& rng,
                                 Proposal target = Proposal::conditional);

/// Mean over trials of K e^{l_1} / sum_k e^{l_k} with every candidate drawn
/// from the proposal; reference 1 at 3 stderr. Throws ConfigError when
/// trials < 10^4.
OracleReport normalization_check(
    const GaussianWorld& world,
    const std::function<double(const RowRef& x, const RowRef& xp, const RowRef& y)>& critic,
    Proposal proposal, std::size_t k, std::size_t trials, Rng& rng, std::string name = "normalization");

/// Reference worlds shared by the suites and the acceptance checks.
/// D = 2, I(x, x'; y) = 2.0, I(x'; y) = 0.5, I(x; y | x') = 1.5.
GaussianWorld two_nat_world();
/// D = 2, I(x, x'; y) = 5.0 split evenly, alpha = 0.5.
GaussianWorld five_nat_world();
/// D = 1, every correlation 0.5.
GaussianWorld rho_half_world();

/// Named suites of the CLI: mi, bounds, sir, normalization, all.
std::vector<std::string> suite_names();
/// Runs a suite with streams derived from `seed`. Throws ConfigError on an
/// unknown suite.
std::vector<OracleReport> run_suite(const std::string& suite, std::uint64_t seed);

}  // namespace demi::oracles
