#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "demi/estimators/batch.hpp"
#include "demi/estimators/bounds.hpp"
#include "demi/estimators/critics.hpp"
#include "demi/estimators/variational.hpp"
#include "demi/gaussian_world.hpp"
#include "demi/nn/checkpoint.hpp"
#include "demi/nn/critic_net.hpp"
#include "demi/nn/graph.hpp"

namespace demi {

/// What is trained and how it is evaluated.
///   nce               plain InfoNCE on (x, x') -> y, K marginal negatives
///   demi              I_NCE(x'; y) + I_CNCE(x; y | x'), K/2 negatives each
///   demi_is/bo/var    as demi, but the conditional critic is trained with the
///                     IS, BO or variational bound on K/2 negatives
///   demi_bo_protocol  psi by I_NCE and phi by I_BO on one shared set of K
///                     marginal negatives, evaluated as I_NCE + I_IS
/// The demi variants are evaluated as I_NCE + I_CNCE, which samples p(y | x')
/// at evaluation time only; demi_bo_protocol never samples it.
enum class EstimatorKind { nce, demi, demi_is, demi_bo, demi_var, demi_bo_protocol };

std::string to_string(EstimatorKind k);
/// Throws ConfigError on an unknown name.
EstimatorKind parse_estimator_kind(const std::string& s);

/// Source of the frozen unconditional critic used by the IS and BO terms.
enum class PsiStarMode { frozen_trained, analytic };
std::string to_string(PsiStarMode m);
PsiStarMode parse_psi_star_mode(const std::string& s);

/// learned: critics are MLPs trained by Adam. analytic: the world's optimal
/// critics are evaluated directly and no training happens.
enum class CriticMode { learned, analytic };
std::string to_string(CriticMode m);
CriticMode parse_critic_mode(const std::string& s);

struct TrainConfig {
  EstimatorKind kind = EstimatorKind::nce;
  CriticMode critic = CriticMode::learned;
  PsiStarMode psi_star = PsiStarMode::frozen_trained;
  /// Total negatives budget K (split in halves by the demi variants).
  std::size_t k = 128;
  std::size_t batch = 128;
  std::size_t steps = 20000;
  double lr = 5e-4;
  std::uint64_t seed = 0;
  std::size_t eval_interval = 500;
  std::size_t eval_batches = 200;
  /// Rows per evaluation batch; 0 means `batch`.
  std::size_t eval_rows = 0;
  std::size_t final_window = 3;
  /// psi and phi share one encoder. When false they get independent nets.
  bool shared_encoder = true;
  double variational_lr = 5e-3;

  /// Throws ConfigError on invalid settings.
  void validate() const;
};

/// Cap of the reported estimate for a kind at budget K.
double estimate_cap(EstimatorKind kind, std::size_t k);

struct CurvePoint {
  std::size_t step = 0;
  BoundEstimate estimate;
  double wall_ms = 0.0;
};

/// Learned parameters. For nce, psi_net holds the single total critic.
struct TrainedCritics {
  nn::CriticNet psi_net;
  std::optional<nn::CriticNet> phi_net;
  std::optional<VariationalGaussian> q;

  const nn::CriticNet& phi() const { return phi_net ? *phi_net : psi_net; }
};

std::vector<nn::NamedTensor> to_checkpoint(const TrainedCritics& critics);
TrainedCritics critics_from_checkpoint(const std::vector<nn::NamedTensor>& tensors);

struct TrainResult {
  std::optional<TrainedCritics> critics;  // empty in analytic mode
  std::vector<CurvePoint> curve;
  BoundEstimate final_estimate;
};

/// Negatives used by one training step.
struct StepBatches {
  std::optional<ContrastiveBatch> marginal;
  std::optional<ContrastiveBatch> conditional;
  std::optional<ContrastiveBatch> variational;
};

/// Draws the batches a training step of `kind` needs, from one set of joint
/// rows. `q` is required for demi_var.
StepBatches draw_step_batches(EstimatorKind kind, const GaussianWorld& world, std::size_t rows,
                              std::size_t k, Rng& rng, const VariationalGaussian* q = nullptr);

/// Training loss (negated objective) of one step on the graph. `psi` and
/// `phi` may be the same handles. `world` is only read for the analytic psi*
/// mode.
nn::Var training_loss(nn::Graph& g, const nn::NetVars& psi, const nn::NetVars& phi,
                      EstimatorKind kind, const StepBatches& batches, const GaussianWorld& world,
                      PsiStarMode psi_star);

/// Evaluates `eval_batches` fresh batches of `rows` rows and summarizes the
/// per-row reported estimate of `kind`. For nce `psi` is the total critic.
BoundEstimate evaluate(EstimatorKind kind, const Critic& psi, const Critic& phi,
                       const GaussianWorld& world, std::size_t k, std::size_t rows,
                       std::size_t eval_batches, Rng& rng);

/// Maximizes the selected bound and records an evaluation every
/// eval_interval steps and after the last step. The final estimate averages
/// the last final_window evaluations. A non-finite value aborts with
/// NumericalError carrying the step index.
TrainResult train_estimator(const GaussianWorld& world, const TrainConfig& config);

/// I_NCE(x'; y) with K/2 marginal negatives plus I_CNCE(x; y | x') with K/2
/// conditional negatives on the same rows. Throws ConfigError on odd K.
BoundEstimate demi_objective(const Critic& psi, const Critic& phi, const GaussianWorld& world,
                             std::size_t k_total, std::size_t rows, Rng& rng);

/// I_NCE(psi) + I_IS(phi, psi) sharing one set of K marginal negatives.
BoundEstimate shared_negatives_estimate(const Critic& psi, const Critic& phi,
                                        const GaussianWorld& world, std::size_t k,
                                        std::size_t rows, Rng& rng);

struct ProtocolResult {
  TrainResult training;
  BoundEstimate estimate;
};

/// Trains psi by I_NCE and phi by I_BO against the detached psi logits, on
/// marginal negatives only, and reports the final I_NCE + I_IS estimate.
/// config.kind is ignored.
ProtocolResult demi_bo_protocol(const GaussianWorld& world, TrainConfig config);

/// Encoders for the four-term symmetric objective.
struct SymmetricNets {
  nn::CriticNet nce_net;  // encodes x, x' and y for both unconditional terms
  nn::CriticNet bo_net;   // residual encoder of the conditioning view

  static SymmetricNets random(std::size_t dims, Rng& rng);
};

struct SymmetricTerms {
  nn::Var loss;
  /// Per-row values of I_NCE(x'; y), I_BO(x; y | x'), I_NCE(x; y),
  /// I_BO(x'; y | x), each B x 1.
  std::array<nn::Var, 4> terms;
};

/// -[I_NCE(x'; y) + I_BO(x; y | x') + I_NCE(x; y) + I_BO(x'; y | x)] on one
/// marginal batch. The BO terms add the detached unconditional logits of the
/// other view, so those logits carry no gradient through the BO terms.
SymmetricTerms demi_symmetric(nn::Graph& g, const nn::NetVars& nce_net,
                              const nn::NetVars& bo_net, const ContrastiveBatch& batch);

/// Loss value only.
double demi_symmetric_loss(const SymmetricNets& nets, const ContrastiveBatch& batch);

}  // namespace demi
