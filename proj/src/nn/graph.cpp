#include "demi/nn/graph.hpp"

#include <cmath>
#include <string>

#include "demi/errors.hpp"

namespace demi::nn {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch");
}

}  // namespace

Vector logsumexp_rows(const Matrix& a) {
  Vector out(a.rows());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double m = a.row(r).maxCoeff();
    out(r) = m + std::log((a.row(r).array() - m).exp().sum());
  }
  return out;
}

Vector contrastive_log_ratio(const Matrix& logits, Matrix* softmax) {
  const Eigen::Index k = logits.cols();
  if (k < 1) throw ShapeError("contrastive_log_ratio: need at least one candidate");
  Vector out(logits.rows());
  if (softmax) softmax->resize(logits.rows(), k);
  const double kd = static_cast<double>(k);
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    const double pos = row(0);
    // Differences to the positive logit; the positive itself contributes 0,
    // so the shift m is >= 0 and the sum below is >= exp(-m).
    double m = 0.0;
    for (Eigen::Index j = 1; j < k; ++j) m = std::max(m, row(j) - pos);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) acc += std::exp((row(j) - pos) - m);
    out(r) = -(m + std::log(acc / kd));
    if (softmax) {
      for (Eigen::Index j = 0; j < k; ++j) (*softmax)(r, j) = std::exp((row(j) - pos) - m) / acc;
    }
  }
  return out;
}

Var Graph::push(Matrix value, bool requires_grad, const char* op) {
  if (!value.allFinite()) throw NumericalError(std::string("non-finite forward value in ") + op);
  nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, {}});
  return Var{nodes_.size() - 1};
}

bool Graph::any_grad(std::initializer_list<Var> vars) const {
  for (auto v : vars)
    if (nodes_[v.id].requires_grad) return true;
  return false;
}

Matrix& Graph::grad_ref(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

template <typename Expr>
void Graph::accumulate(std::size_t id, const Expr& e) {
  auto& n = nodes_[id];
  if (n.grad.size() == 0) {
    n.grad = e;
  } else {
    n.grad += e;
  }
}

Matrix Graph::grad(Var v) const {
  const auto& n = nodes_[v.id];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Graph::parameter(const Tensor& t) { return push(Matrix(t.matrix()), true, "parameter"); }

Var Graph::parameter(const Matrix& m) { return push(m, true, "parameter"); }

Var Graph::constant(Matrix m) { return push(std::move(m), false, "constant"); }

Var Graph::matmul(Var a, Var b) {
  if (value(a).cols() != value(b).rows()) throw ShapeError("matmul: inner dimensions differ");
  Var out = push(value(a) * value(b), any_grad({a, b}), "matmul");
  nodes_[out.id].backprop = [this, a, b, out] {
    const Matrix& g = nodes_[out.id].grad;
    if (nodes_[a.id].requires_grad) accumulate(a.id, g * value(b).transpose());
    if (nodes_[b.id].requires_grad) accumulate(b.id, value(a).transpose() * g);
  };
  return out;
}

Var Graph::matmul_bt(Var a, Var b) {
  if (value(a).cols() != value(b).cols()) throw ShapeError("matmul_bt: inner dimensions differ");
  Var out = push(value(a) * value(b).transpose(), any_grad({a, b}), "matmul_bt");
  nodes_[out.id].backprop = [this, a, b, out] {
    const Matrix& g = nodes_[out.id].grad;
    if (nodes_[a.id].requires_grad) accumulate(a.id, g * value(b));
    if (nodes_[b.id].requires_grad) accumulate(b.id, g.transpose() * value(a));
  };
  return out;
}

Var Graph::affine(Var x, Var w, Var b) {
  if (value(x).cols() != value(w).cols()) throw ShapeError("affine: input width mismatch");
  if (value(b).rows() != 1 || value(b).cols() != value(w).rows())
    throw ShapeError("affine: bias has wrong shape");
  Matrix v(value(x).rows(), value(w).rows());
  v.noalias() = value(x) * value(w).transpose();
  v.rowwise() += value(b).row(0);
  Var out = push(std::move(v), any_grad({x, w, b}), "affine");
  nodes_[out.id].backprop = [this, x, w, b, out] {
    const Matrix& g = nodes_[out.id].grad;
    if (nodes_[x.id].requires_grad) accumulate(x.id, g * value(w));
    if (nodes_[w.id].requires_grad) accumulate(w.id, g.transpose() * value(x));
    if (nodes_[b.id].requires_grad) accumulate(b.id, g.colwise().sum());
  };
  return out;
}

Var Graph::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  Var out = push(value(a) + value(b), any_grad({a, b}), "add");
  nodes_[out.id].backprop = [this, a, b, out] {
    const Matrix& g = nodes_[out.id].grad;
    if (nodes_[a.id].requires_grad) accumulate(a.id, g);
    if (nodes_[b.id].requires_grad) accumulate(b.id, g);
  };
  return out;
}

Var Graph::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  Var out = push(value(a) - value(b), any_grad({a, b}), "sub");
  nodes_[out.id].backprop = [this, a, b, out] {
    const Matrix& g = nodes_[out.id].grad;
    if (nodes_[a.id].requires_grad) accumulate(a.id, g);
    if (nodes_[b.id].requires_grad) accumulate(b.id, -(g));
  };
  return out;
}

Var Graph::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  Var out = push(value(a).cwiseProduct(value(b)), any_grad({a, b}), "mul");
  nodes_[out.id].backprop = [this, a, b, out] {
    const Matrix& g = nodes_[out.id].grad;
    if (nodes_[a.id].requires_grad) accumulate(a.id, g.cwiseProduct(value(b)));
    if (nodes_[b.id].requires_grad) accumulate(b.id, g.cwiseProduct(value(a)));
  };
  return out;
}

Var Graph::add_row(Var a, Var row) {
  if (value(row).rows() != 1 || value(row).cols() != value(a).cols())
    throw ShapeError("add_row: broadcast row has wrong shape");
  Matrix v = value(a);
  v.rowwise() += value(row).row(0);
  Var out = push(std::move(v), any_grad({a, row}), "add_row");
  nodes_[out.id].backprop = [this, a, row, out] {
    const Matrix& g = nodes_[out.id].grad;
    if (nodes_[a.id].requires_grad) accumulate(a.id, g);
    if (nodes_[row.id].requires_grad) accumulate(row.id, g.colwise().sum());
  };
  return out;
}

Var Graph::mul_row(Var a, Var row) {
  if (value(row).rows() != 1 || value(row).cols() != value(a).cols())
    throw ShapeError("mul_row: broadcast row has wrong shape");
  Matrix v = value(a).array().rowwise() * value(row).row(0).array();
  Var out = push(std::move(v), any_grad({a, row}), "mul_row");
  nodes_[out.id].backprop = [this, a, row, out] {
    const Matrix& g = nodes_[out.id].grad;
    if (nodes_[a.id].requires_grad)
      grad_ref(a.id).array() += g.array().rowwise() * value(row).row(0).array();
    if (nodes_[row.id].requires_grad)
      accumulate(row.id, g.cwiseProduct(value(a)).colwise().sum());
  };
  return out;
}

Var Graph::add_col(Var a, Var col) {
  if (value(col).cols() != 1 || value(col).rows() != value(a).rows())
    throw ShapeError("add_col: broadcast column has wrong shape");
  Matrix v = value(a);
  v.colwise() += value(col).col(0);
  Var out = push(std::move(v), any_grad({a, col}), "add_col");
  nodes_[out.id].backprop = [this, a, col, out] {
    const Matrix& g = nodes_[out.id].grad;
    if (nodes_[a.id].requires_grad) accumulate(a.id, g);
    if (nodes_[col.id].requires_grad) accumulate(col.id, g.rowwise().sum());
  };
  return out;
}

Var Graph::scale(Var a, double s) {
  Var out = push(value(a) * s, any_grad({a}), "scale");
  nodes_[out.id].backprop = [this, a, s, out] {
    if (nodes_[a.id].requires_grad) accumulate(a.id, nodes_[out.id].grad * s);
  };
  return out;
}

Var Graph::add_scalar(Var a, double s) {
  Var out = push((value(a).array() + s).matrix(), any_grad({a}), "add_scalar");
  nodes_[out.id].backprop = [this, a, out] {
    if (nodes_[a.id].requires_grad) accumulate(a.id, nodes_[out.id].grad);
  };
  return out;
}

Var Graph::relu(Var a) {
  Var out = push(value(a).cwiseMax(0.0), any_grad({a}), "relu");
  nodes_[out.id].backprop = [this, a, out] {
    if (!nodes_[a.id].requires_grad) return;
    const Matrix& g = nodes_[out.id].grad;
    accumulate(a.id, (value(a).array() > 0.0).select(g.array(), 0.0).matrix());
  };
  return out;
}

Var Graph::exp(Var a) {
  Var out = push(value(a).array().exp().matrix(), any_grad({a}), "exp");
  nodes_[out.id].backprop = [this, a, out] {
    if (nodes_[a.id].requires_grad)
      accumulate(a.id, nodes_[out.id].grad.cwiseProduct(value(out)));
  };
  return out;
}

Var Graph::log(Var a) {
  Var out = push(value(a).array().log().matrix(), any_grad({a}), "log");
  nodes_[out.id].backprop = [this, a, out] {
    if (nodes_[a.id].requires_grad)
      grad_ref(a.id).array() += nodes_[out.id].grad.array() / value(a).array();
  };
  return out;
}

Var Graph::square(Var a) {
  Var out = push(value(a).array().square().matrix(), any_grad({a}), "square");
  nodes_[out.id].backprop = [this, a, out] {
    if (nodes_[a.id].requires_grad)
      grad_ref(a.id).array() += 2.0 * nodes_[out.id].grad.array() * value(a).array();
  };
  return out;
}

Var Graph::concat_cols(Var a, Var b) {
  if (value(a).rows() != value(b).rows()) throw ShapeError("concat_cols: row counts differ");
  Matrix v(value(a).rows(), value(a).cols() + value(b).cols());
  v << value(a), value(b);
  Var out = push(std::move(v), any_grad({a, b}), "concat_cols");
  nodes_[out.id].backprop = [this, a, b, out] {
    const Matrix& g = nodes_[out.id].grad;
    const Eigen::Index ca = value(a).cols();
    if (nodes_[a.id].requires_grad) accumulate(a.id, g.leftCols(ca));
    if (nodes_[b.id].requires_grad) accumulate(b.id, g.rightCols(value(b).cols()));
  };
  return out;
}

Var Graph::column(Var a, Eigen::Index j) {
  if (j < 0 || j >= value(a).cols()) throw ShapeError("column: index out of range");
  Var out = push(Matrix(value(a).col(j)), any_grad({a}), "column");
  nodes_[out.id].backprop = [this, a, j, out] {
    if (nodes_[a.id].requires_grad) grad_ref(a.id).col(j) += nodes_[out.id].grad.col(0);
  };
  return out;
}

Var Graph::sum(Var a) {
  Matrix v(1, 1);
  v(0, 0) = value(a).sum();
  Var out = push(std::move(v), any_grad({a}), "sum");
  nodes_[out.id].backprop = [this, a, out] {
    if (nodes_[a.id].requires_grad) grad_ref(a.id).array() += nodes_[out.id].grad(0, 0);
  };
  return out;
}

Var Graph::mean(Var a) {
  const auto n = static_cast<double>(value(a).size());
  if (n == 0.0) throw ShapeError("mean: empty input");
  Matrix v(1, 1);
  v(0, 0) = value(a).sum() / n;
  Var out = push(std::move(v), any_grad({a}), "mean");
  nodes_[out.id].backprop = [this, a, n, out] {
    if (nodes_[a.id].requires_grad) grad_ref(a.id).array() += nodes_[out.id].grad(0, 0) / n;
  };
  return out;
}

Var Graph::logsumexp_rows(Var a) {
  Var out = push(Matrix(nn::logsumexp_rows(value(a))), any_grad({a}), "logsumexp_rows");
  nodes_[out.id].backprop = [this, a, out] {
    if (!nodes_[a.id].requires_grad) return;
    const Matrix& g = nodes_[out.id].grad;
    const Matrix& x = value(a);
    const Matrix& lse = value(out);
    Matrix& ga = grad_ref(a.id);
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      ga.row(r).array() += g(r, 0) * (x.row(r).array() - lse(r, 0)).exp();
  };
  return out;
}

Var Graph::stop_gradient(Var a) { return push(value(a), false, "stop_gradient"); }

Var Graph::pair_scores(Var anchors, Var candidates, std::size_t k_per_row) {
  const Matrix& u = value(anchors);
  const Matrix& c = value(candidates);
  const auto k = static_cast<Eigen::Index>(k_per_row);
  if (k < 1 || c.rows() != u.rows() * k || c.cols() != u.cols())
    throw ShapeError("pair_scores: candidates must be (rows*K) x width of anchors");
  Matrix s(u.rows(), k);
  for (Eigen::Index b = 0; b < u.rows(); ++b)
    s.row(b).noalias() = u.row(b) * c.middleRows(b * k, k).transpose();
  Var out = push(std::move(s), any_grad({anchors, candidates}), "pair_scores");
  nodes_[out.id].backprop = [this, anchors, candidates, k, out] {
    const Matrix& g = nodes_[out.id].grad;
    const Matrix& uu = value(anchors);
    const Matrix& cc = value(candidates);
    if (nodes_[anchors.id].requires_grad) {
      Matrix& gu = grad_ref(anchors.id);
      for (Eigen::Index b = 0; b < uu.rows(); ++b)
        gu.row(b).noalias() += g.row(b) * cc.middleRows(b * k, k);
    }
    if (nodes_[candidates.id].requires_grad) {
      Matrix& gc = grad_ref(candidates.id);
      for (Eigen::Index b = 0; b < uu.rows(); ++b)
        gc.middleRows(b * k, k).noalias() += g.row(b).transpose() * uu.row(b);
    }
  };
  return out;
}

Var Graph::contrastive_log_ratio(Var logits) {
  Matrix softmax;
  Matrix v = nn::contrastive_log_ratio(value(logits), &softmax);
  Var out = push(std::move(v), any_grad({logits}), "contrastive_log_ratio");
  nodes_[out.id].backprop = [this, logits, out, p = std::move(softmax)] {
    if (!nodes_[logits.id].requires_grad) return;
    const Matrix& g = nodes_[out.id].grad;
    Matrix& gl = grad_ref(logits.id);
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      gl.row(r) -= g(r, 0) * p.row(r);
      gl(r, 0) += g(r, 0);
    }
  };
  return out;
}

void Graph::backward(Var loss) {
  const Matrix& l = value(loss);
  if (l.rows() != 1 || l.cols() != 1) throw ShapeError("backward: loss must be a scalar");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[loss.id].requires_grad) return;
  grad_ref(loss.id)(0, 0) = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.requires_grad && n.backprop && n.grad.size() != 0) n.backprop();
  }
}

}  // namespace demi::nn
