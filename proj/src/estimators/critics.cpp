#include "demi/estimators/critics.hpp"

#include "demi/errors.hpp"

namespace demi {

std::string to_string(CriticRole r) {
  switch (r) {
    case CriticRole::unconditional: return "unconditional";
    case CriticRole::conditional: return "conditional";
    case CriticRole::total: return "total";
  }
  return "unknown";
}

Matrix Critic::logits(const ContrastiveBatch& batch) const {
  const auto rows = static_cast<Eigen::Index>(batch.rows());
  const auto k = static_cast<Eigen::Index>(batch.k());
  const Matrix& c = batch.candidates();
  Matrix out(rows, k);
  for (Eigen::Index b = 0; b < rows; ++b) {
    const auto x = batch.anchors_x().row(b);
    const auto xp = batch.anchors_xp().row(b);
    for (Eigen::Index j = 0; j < k; ++j) out(b, j) = (*this)(x, xp, c.row(b * k + j));
  }
  return out;
}

double AnalyticCritic::operator()(const RowRef& x, const RowRef& xp, const RowRef& y) const {
  switch (role_) {
    case CriticRole::unconditional: return world_->optimal_psi(xp, y);
    case CriticRole::conditional: return world_->optimal_phi(xp, x, y);
    case CriticRole::total: return world_->optimal_joint(x, xp, y);
  }
  throw ConfigError("AnalyticCritic: unknown role");
}

Matrix AnalyticCritic::logits(const ContrastiveBatch& batch) const {
  const auto d = static_cast<Eigen::Index>(world_->dims());
  if (static_cast<Eigen::Index>(batch.dims()) != d)
    throw ShapeError("AnalyticCritic: batch does not match the world");
  // log N(y; m_num, v_num) - log N(y; m_den, v_den), summed over dimensions,
  // with m = a * x + b * x' per dimension.
  RowVector a_num(d), b_num(d), v_num(d), a_den(d), b_den(d), v_den(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto& c = world_->cond(static_cast<std::size_t>(i));
    const double joint[3] = {c.joint_slope_x, c.joint_slope_xp, c.var_joint};
    const double given_xp[3] = {0.0, c.slope_xp, c.var_xp};
    const double marginal[3] = {0.0, 0.0, c.var_y};
    const double* num = role_ == CriticRole::unconditional ? given_xp : joint;
    const double* den = role_ == CriticRole::conditional ? given_xp : marginal;
    a_num(i) = num[0], b_num(i) = num[1], v_num(i) = num[2];
    a_den(i) = den[0], b_den(i) = den[1], v_den(i) = den[2];
  }
  const RowVector inv_num = v_num.cwiseInverse(), inv_den = v_den.cwiseInverse();
  const double offset = 0.5 * (v_den.array().log().sum() - v_num.array().log().sum());

  const auto rows = static_cast<Eigen::Index>(batch.rows());
  const auto k = static_cast<Eigen::Index>(batch.k());
  Matrix out(rows, k);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto x = batch.anchors_x().row(r).array();
    const auto xp = batch.anchors_xp().row(r).array();
    const RowVector m_num = a_num.array() * x + b_num.array() * xp;
    const RowVector m_den = a_den.array() * x + b_den.array() * xp;
    const auto block = batch.candidates().middleRows(r * k, k);
    const Matrix dn = block.rowwise() - m_num;
    const Matrix dd = block.rowwise() - m_den;
    const Vector quad = 0.5 * ((dd.array().square().rowwise() * inv_den.array()).rowwise().sum() -
                               (dn.array().square().rowwise() * inv_num.array()).rowwise().sum());
    out.row(r) = (quad.array() + offset).transpose();
  }
  return out;
}

namespace {

RowVector anchor_row(CriticRole role, const RowRef& x, const RowRef& xp) {
  switch (role) {
    case CriticRole::unconditional: return nn::pad_single(xp);
    case CriticRole::conditional: {
      RowVector v(2 * xp.size());
      v << xp, x;
      return v;
    }
    case CriticRole::total: {
      RowVector v(2 * x.size());
      v << x, xp;
      return v;
    }
  }
  throw ConfigError("unknown critic role");
}

}  // namespace

double NetCritic::operator()(const RowRef& x, const RowRef& xp, const RowRef& y) const {
  return nn::encode(*net_, anchor_row(role_, x, xp)).dot(nn::encode(*y_net_, nn::pad_single(y)));
}

Matrix NetCritic::logits(const ContrastiveBatch& batch) const {
  const Matrix u = nn::encode_rows(*net_, anchor_inputs(role_, batch));
  const Matrix v = nn::encode_rows(*y_net_, candidate_inputs(batch));
  const auto rows = static_cast<Eigen::Index>(batch.rows());
  const auto k = static_cast<Eigen::Index>(batch.k());
  Matrix out(rows, k);
  for (Eigen::Index b = 0; b < rows; ++b)
    out.row(b).noalias() = u.row(b) * v.middleRows(b * k, k).transpose();
  return out;
}

Matrix ConstantCritic::logits(const ContrastiveBatch& batch) const {
  return Matrix::Constant(static_cast<Eigen::Index>(batch.rows()),
                          static_cast<Eigen::Index>(batch.k()), c_);
}

Matrix anchor_inputs(CriticRole role, const ContrastiveBatch& batch) {
  const Matrix& x = batch.anchors_x();
  const Matrix& xp = batch.anchors_xp();
  switch (role) {
    case CriticRole::unconditional: return nn::pad_rows(xp);
    case CriticRole::conditional: {
      Matrix m(x.rows(), 2 * x.cols());
      m << xp, x;
      return m;
    }
    case CriticRole::total: {
      Matrix m(x.rows(), 2 * x.cols());
      m << x, xp;
      return m;
    }
  }
  throw ConfigError("unknown critic role");
}

Matrix candidate_inputs(const ContrastiveBatch& batch) { return nn::pad_rows(batch.candidates()); }

nn::Var net_logits(nn::Graph& g, const nn::NetVars& anchor_net, CriticRole role,
                   const ContrastiveBatch& batch, nn::Var encoded_candidates) {
  const nn::Var u = nn::encode(g, anchor_net, g.constant(anchor_inputs(role, batch)));
  return g.pair_scores(u, encoded_candidates, batch.k());
}

}  // namespace demi
