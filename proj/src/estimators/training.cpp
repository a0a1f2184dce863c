#include "demi/estimators/training.hpp"

#include <chrono>
#include <cmath>
#include <mutex>

#include "demi/errors.hpp"
#include "demi/nn/adam.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace demi {

namespace {

// Each step allocates and frees the same few large buffers. glibc's default
// mmap threshold hands those back to the kernel every time, which costs
// roughly half of a step; keep them on the heap instead.
void tune_allocator() {
#if defined(__GLIBC__)
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
  });
#endif
}

bool is_demi_split(EstimatorKind k) {
  return k == EstimatorKind::demi || k == EstimatorKind::demi_is || k == EstimatorKind::demi_bo ||
         k == EstimatorKind::demi_var;
}

template <typename E>
E parse_enum(const std::string& s, std::initializer_list<E> all, const char* what) {
  for (E e : all)
    if (to_string(e) == s) return e;
  throw ConfigError(std::string("unknown ") + what + ": '" + s + "'");
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

BoundEstimate average_tail(const std::vector<CurvePoint>& curve, std::size_t window) {
  const std::size_t m = std::min(window, curve.size());
  BoundEstimate out = curve.back().estimate;
  double mean = 0.0, var = 0.0;
  std::size_t n = 0;
  for (std::size_t i = curve.size() - m; i < curve.size(); ++i) {
    const auto& e = curve[i].estimate;
    mean += e.mean;
    var += e.std_error * e.std_error;
    n += e.n;
  }
  out.mean = mean / static_cast<double>(m);
  out.std_error = std::sqrt(var) / static_cast<double>(m);
  out.n = n;
  return out;
}

nn::Tensor row_tensor(const Vector& v) {
  return nn::Tensor({static_cast<std::size_t>(v.size())},
                    std::vector<double>(v.data(), v.data() + v.size()));
}

Vector tensor_row(const nn::Tensor& t) {
  return Eigen::Map<const Vector>(t.data().data(), static_cast<Eigen::Index>(t.size()));
}

void append_net(std::vector<nn::NamedTensor>& out, const std::string& prefix,
                const nn::CriticNet& net) {
  const auto params = net.parameters();
  const auto& names = nn::CriticNet::parameter_names();
  for (std::size_t i = 0; i < params.size(); ++i) out.push_back({prefix + names[i], *params[i]});
}

const nn::Tensor* find_tensor(const std::vector<nn::NamedTensor>& ts, const std::string& name) {
  for (const auto& t : ts)
    if (t.name == name) return &t.tensor;
  return nullptr;
}

std::optional<nn::CriticNet> net_from(const std::vector<nn::NamedTensor>& ts,
                                      const std::string& prefix) {
  const auto* w1 = find_tensor(ts, prefix + "w1");
  if (!w1) return std::nullopt;
  const auto* b1 = find_tensor(ts, prefix + "b1");
  const auto* w2 = find_tensor(ts, prefix + "w2");
  const auto* b2 = find_tensor(ts, prefix + "b2");
  if (!b1 || !w2 || !b2) throw ConfigError("checkpoint: incomplete network '" + prefix + "'");
  if (w1->shape().size() != 2 || w2->shape().size() != 2)
    throw ShapeError("checkpoint: weight tensors must be rank 2");
  nn::CriticNet net(w1->shape()[1], w1->shape()[0], w2->shape()[0]);
  if (b1->shape() != net.b1.shape() || w2->shape() != net.w2.shape() ||
      b2->shape() != net.b2.shape())
    throw ShapeError("checkpoint: inconsistent network shapes for '" + prefix + "'");
  net.w1 = *w1;
  net.b1 = *b1;
  net.w2 = *w2;
  net.b2 = *b2;
  return net;
}

}  // namespace

std::string to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::nce: return "nce";
    case EstimatorKind::demi: return "demi";
    case EstimatorKind::demi_is: return "demi_is";
    case EstimatorKind::demi_bo: return "demi_bo";
    case EstimatorKind::demi_var: return "demi_var";
    case EstimatorKind::demi_bo_protocol: return "demi_bo_protocol";
  }
  return "unknown";
}

EstimatorKind parse_estimator_kind(const std::string& s) {
  return parse_enum(s,
                    {EstimatorKind::nce, EstimatorKind::demi, EstimatorKind::demi_is,
                     EstimatorKind::demi_bo, EstimatorKind::demi_var,
                     EstimatorKind::demi_bo_protocol},
                    "estimator");
}

std::string to_string(PsiStarMode m) {
  return m == PsiStarMode::analytic ? "analytic" : "frozen_trained";
}

PsiStarMode parse_psi_star_mode(const std::string& s) {
  return parse_enum(s, {PsiStarMode::frozen_trained, PsiStarMode::analytic}, "psi* mode");
}

std::string to_string(CriticMode m) { return m == CriticMode::analytic ? "analytic" : "learned"; }

CriticMode parse_critic_mode(const std::string& s) {
  return parse_enum(s, {CriticMode::learned, CriticMode::analytic}, "critic mode");
}

void TrainConfig::validate() const {
  if (k < 1) throw ConfigError("K must be >= 1");
  if (is_demi_split(kind) && (k < 2 || k % 2 != 0))
    throw ConfigError(to_string(kind) + " splits K in halves; K must be even and >= 2");
  if (kind == EstimatorKind::demi_bo_protocol && k < 2)
    throw ConfigError("demi_bo_protocol needs K >= 2");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be > 0");
  if (!(variational_lr > 0.0) || !std::isfinite(variational_lr))
    throw ConfigError("variational lr must be > 0");
  if (eval_interval < 1) throw ConfigError("eval interval must be >= 1");
  if (eval_batches < 1) throw ConfigError("eval batches must be >= 1");
  if (final_window < 1) throw ConfigError("final window must be >= 1");
}

double estimate_cap(EstimatorKind kind, std::size_t k) {
  if (kind == EstimatorKind::nce) return single_cap(k);
  if (kind == EstimatorKind::demi_bo_protocol) return shared_cap(k);
  return split_cap(k);
}

std::vector<nn::NamedTensor> to_checkpoint(const TrainedCritics& critics) {
  std::vector<nn::NamedTensor> out;
  append_net(out, "psi.", critics.psi_net);
  if (critics.phi_net) append_net(out, "phi.", *critics.phi_net);
  if (critics.q) {
    out.push_back({"q.a", row_tensor(critics.q->slope())});
    out.push_back({"q.c", row_tensor(critics.q->offset())});
    out.push_back({"q.log_s", row_tensor(critics.q->log_sd())});
  }
  return out;
}

TrainedCritics critics_from_checkpoint(const std::vector<nn::NamedTensor>& tensors) {
  auto psi = net_from(tensors, "psi.");
  if (!psi) throw ConfigError("checkpoint: missing psi network");
  TrainedCritics out{*std::move(psi), net_from(tensors, "phi."), std::nullopt};
  const auto* a = find_tensor(tensors, "q.a");
  const auto* c = find_tensor(tensors, "q.c");
  const auto* s = find_tensor(tensors, "q.log_s");
  if (a && c && s) out.q = VariationalGaussian(tensor_row(*a), tensor_row(*c), tensor_row(*s));
  return out;
}

StepBatches draw_step_batches(EstimatorKind kind, const GaussianWorld& world, std::size_t rows,
                              std::size_t k, Rng& rng, const VariationalGaussian* q) {
  StepBatches out;
  const JointSamples joint = world.sample_joint(rows, rng);
  switch (kind) {
    case EstimatorKind::nce:
    case EstimatorKind::demi_bo_protocol:
      out.marginal = make_marginal_batch(world, joint, k, rng);
      break;
    case EstimatorKind::demi:
      out.marginal = make_marginal_batch(world, joint, k / 2, rng);
      out.conditional = make_conditional_batch(world, joint, k / 2, rng);
      break;
    case EstimatorKind::demi_is:
    case EstimatorKind::demi_bo:
      out.marginal = make_marginal_batch(world, joint, k / 2, rng);
      break;
    case EstimatorKind::demi_var:
      if (!q) throw ConfigError("demi_var needs a variational proposal");
      out.marginal = make_marginal_batch(world, joint, k / 2, rng);
      out.variational = make_variational_batch(*q, joint, k / 2, rng);
      break;
  }
  return out;
}

nn::Var training_loss(nn::Graph& g, const nn::NetVars& psi, const nn::NetVars& phi,
                      EstimatorKind kind, const StepBatches& batches, const GaussianWorld& world,
                      PsiStarMode psi_star) {
  const auto term = [&g](nn::Var logits) { return g.mean(g.contrastive_log_ratio(logits)); };
  const auto need = [](const std::optional<ContrastiveBatch>& b, const char* what) -> const ContrastiveBatch& {
    if (!b) throw ConfigError(std::string("training step is missing its ") + what + " batch");
    return *b;
  };
  const ContrastiveBatch& m = need(batches.marginal, "marginal");
  const nn::Var psi_y = nn::encode(g, psi, g.constant(candidate_inputs(m)));

  if (kind == EstimatorKind::nce)
    return g.scale(term(net_logits(g, psi, CriticRole::total, m, psi_y)), -1.0);

  const nn::Var s_psi = net_logits(g, psi, CriticRole::unconditional, m, psi_y);
  nn::Var conditional_term;
  switch (kind) {
    case EstimatorKind::demi:
    case EstimatorKind::demi_var: {
      const ContrastiveBatch& c = kind == EstimatorKind::demi ? need(batches.conditional, "conditional")
                                                              : need(batches.variational, "variational");
      const nn::Var phi_y = nn::encode(g, phi, g.constant(candidate_inputs(c)));
      conditional_term = term(net_logits(g, phi, CriticRole::conditional, c, phi_y));
      break;
    }
    default: {
      const bool shared = psi.w1.id == phi.w1.id;
      const nn::Var phi_y = shared ? psi_y : nn::encode(g, phi, g.constant(candidate_inputs(m)));
      const nn::Var s_phi = net_logits(g, phi, CriticRole::conditional, m, phi_y);
      const bool analytic = psi_star == PsiStarMode::analytic && kind != EstimatorKind::demi_bo_protocol;
      const nn::Var frozen = analytic
                                 ? g.constant(AnalyticCritic(world, CriticRole::unconditional).logits(m))
                                 : g.stop_gradient(s_psi);
      if (kind == EstimatorKind::demi_is)
        conditional_term = term(g.add(s_phi, g.constant(importance_shift(g.value(frozen)))));
      else
        conditional_term = term(g.add(frozen, s_phi));
      break;
    }
  }
  return g.scale(g.add(term(s_psi), conditional_term), -1.0);
}

BoundEstimate evaluate(EstimatorKind kind, const Critic& psi, const Critic& phi,
                       const GaussianWorld& world, std::size_t k, std::size_t rows,
                       std::size_t eval_batches, Rng& rng) {
  if (rows < 1 || eval_batches < 1) throw ConfigError("evaluate: need at least one row");
  const auto n = static_cast<Eigen::Index>(rows);
  Vector values(n * static_cast<Eigen::Index>(eval_batches));
  for (std::size_t i = 0; i < eval_batches; ++i) {
    const JointSamples joint = world.sample_joint(rows, rng);
    Vector v;
    if (kind == EstimatorKind::nce) {
      v = nce_values(psi, make_marginal_batch(world, joint, k, rng));
    } else if (kind == EstimatorKind::demi_bo_protocol) {
      const ContrastiveBatch m = make_marginal_batch(world, joint, k, rng);
      v = nce_values(psi, m) + is_values(phi, psi, m);
    } else {
      const ContrastiveBatch m = make_marginal_batch(world, joint, k / 2, rng);
      const ContrastiveBatch c = make_conditional_batch(world, joint, k / 2, rng);
      v = nce_values(psi, m) + cnce_values(phi, c);
    }
    values.segment(static_cast<Eigen::Index>(i) * n, n) = v;
  }
  return summarize(values, k, estimate_cap(kind, k));
}

TrainResult train_estimator(const GaussianWorld& world, const TrainConfig& config) {
  config.validate();
  tune_allocator();
  const auto start = std::chrono::steady_clock::now();
  const std::size_t eval_rows = config.eval_rows ? config.eval_rows : config.batch;
  const std::size_t two_d = 2 * world.dims();
  const CriticRole psi_role =
      config.kind == EstimatorKind::nce ? CriticRole::total : CriticRole::unconditional;
  TrainResult result;

  if (config.critic == CriticMode::analytic) {
    const AnalyticCritic psi(world, psi_role);
    const AnalyticCritic phi(world, CriticRole::conditional);
    Rng rng(derive_seed(config.seed, "eval", 0));
    const BoundEstimate e =
        evaluate(config.kind, psi, phi, world, config.k, eval_rows, config.eval_batches, rng);
    result.curve.push_back({0, e, elapsed_ms(start)});
    result.final_estimate = e;
    return result;
  }

  Rng init(derive_seed(config.seed, {"train", "init"}));
  TrainedCritics critics{nn::CriticNet::random(two_d, init), std::nullopt, std::nullopt};
  if (!config.shared_encoder && config.kind != EstimatorKind::nce)
    critics.phi_net = nn::CriticNet::random(two_d, init);
  std::optional<VariationalTrainer> q_trainer;
  if (config.kind == EstimatorKind::demi_var)
    q_trainer.emplace(world.dims(), nn::AdamConfig{.lr = config.variational_lr});

  nn::AdamState adam(nn::AdamConfig{.lr = config.lr});
  Rng rng(derive_seed(config.seed, {"train", "batches"}));

  for (std::size_t step = 1; step <= config.steps; ++step) {
    try {
      const StepBatches sb = draw_step_batches(config.kind, world, config.batch, config.k, rng,
                                               q_trainer ? &q_trainer->q() : nullptr);
      nn::Graph g;
      const nn::NetVars psi = nn::bind(g, critics.psi_net);
      const nn::NetVars phi = critics.phi_net ? nn::bind(g, *critics.phi_net) : psi;
      const nn::Var loss = training_loss(g, psi, phi, config.kind, sb, world, config.psi_star);
      g.backward(loss);

      std::vector<nn::Tensor*> params = critics.psi_net.parameters();
      std::vector<nn::Tensor> grads = nn::gradients(g, psi, critics.psi_net);
      if (critics.phi_net) {
        for (auto* p : critics.phi_net->parameters()) params.push_back(p);
        for (auto& t : nn::gradients(g, phi, *critics.phi_net)) grads.push_back(std::move(t));
      }
      nn::adam_step(params, grads, adam);
      if (!critics.psi_net.all_finite() || (critics.phi_net && !critics.phi_net->all_finite()))
        throw NumericalError("critic parameters became non-finite");

      if (q_trainer) {
        const ContrastiveBatch& v = *sb.variational;
        q_trainer->step(JointSamples{v.anchors_x(), v.anchors_xp(), v.positives()});
      }

      if (step % config.eval_interval == 0 || step == config.steps) {
        const NetCritic psi_c(critics.psi_net, psi_role);
        const NetCritic phi_c(critics.phi(), CriticRole::conditional);
        Rng er(derive_seed(config.seed, "eval", step));
        const BoundEstimate e = evaluate(config.kind, psi_c, phi_c, world, config.k, eval_rows,
                                         config.eval_batches, er);
        result.curve.push_back({step, e, elapsed_ms(start)});
      }
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " at step " + std::to_string(step),
                           static_cast<long>(step));
    }
  }
  if (q_trainer) critics.q = q_trainer->q();
  result.final_estimate = average_tail(result.curve, config.final_window);
  result.critics = std::move(critics);
  return result;
}

BoundEstimate demi_objective(const Critic& psi, const Critic& phi, const GaussianWorld& world,
                             std::size_t k_total, std::size_t rows, Rng& rng) {
  if (k_total < 2 || k_total % 2 != 0) throw ConfigError("demi_objective: K must be even and >= 2");
  return evaluate(EstimatorKind::demi, psi, phi, world, k_total, rows, 1, rng);
}

BoundEstimate shared_negatives_estimate(const Critic& psi, const Critic& phi,
                                        const GaussianWorld& world, std::size_t k,
                                        std::size_t rows, Rng& rng) {
  if (k < 2) throw ConfigError("shared_negatives_estimate: K must be >= 2");
  return evaluate(EstimatorKind::demi_bo_protocol, psi, phi, world, k, rows, 1, rng);
}

ProtocolResult demi_bo_protocol(const GaussianWorld& world, TrainConfig config) {
  config.kind = EstimatorKind::demi_bo_protocol;
  config.critic = CriticMode::learned;
  config.psi_star = PsiStarMode::frozen_trained;
  ProtocolResult out{train_estimator(world, config), {}};
  out.estimate = out.training.final_estimate;
  return out;
}

SymmetricNets SymmetricNets::random(std::size_t dims, Rng& rng) {
  auto nce = nn::CriticNet::random(2 * dims, rng);
  auto bo = nn::CriticNet::random(2 * dims, rng);
  return {std::move(nce), std::move(bo)};
}

SymmetricTerms demi_symmetric(nn::Graph& g, const nn::NetVars& nce_net,
                              const nn::NetVars& bo_net, const ContrastiveBatch& batch) {
  if (batch.source() != NegativeSource::marginal)
    throw SourceMismatch("demi_symmetric: expected marginal negatives");
  const std::size_t k = batch.k();
  const nn::Var key_y = nn::encode(g, nce_net, g.constant(candidate_inputs(batch)));
  const nn::Var in_x = g.constant(nn::pad_rows(batch.anchors_x()));
  const nn::Var in_xp = g.constant(nn::pad_rows(batch.anchors_xp()));
  const nn::Var s_x_y = g.pair_scores(nn::encode(g, nce_net, in_x), key_y, k);
  const nn::Var s_xp_y = g.pair_scores(nn::encode(g, nce_net, in_xp), key_y, k);
  const nn::Var s_bo_x_y = g.pair_scores(nn::encode(g, bo_net, in_x), key_y, k);
  const nn::Var s_bo_xp_y = g.pair_scores(nn::encode(g, bo_net, in_xp), key_y, k);

  SymmetricTerms out;
  out.terms[0] = g.contrastive_log_ratio(s_xp_y);
  out.terms[1] = g.contrastive_log_ratio(g.add(g.stop_gradient(s_xp_y), s_bo_x_y));
  out.terms[2] = g.contrastive_log_ratio(s_x_y);
  out.terms[3] = g.contrastive_log_ratio(g.add(g.stop_gradient(s_x_y), s_bo_xp_y));
  nn::Var total = g.mean(out.terms[0]);
  for (std::size_t i = 1; i < 4; ++i) total = g.add(total, g.mean(out.terms[i]));
  out.loss = g.scale(total, -1.0);
  return out;
}

double demi_symmetric_loss(const SymmetricNets& nets, const ContrastiveBatch& batch) {
  nn::Graph g;
  const auto nce = nn::bind(g, nets.nce_net, false);
  const auto bo = nn::bind(g, nets.bo_net, false);
  return g.value(demi_symmetric(g, nce, bo, batch).loss)(0, 0);
}

}  // namespace demi
