#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "demi/nn/tensor.hpp"
#include "demi/types.hpp"

namespace demi::nn {

/// Handle to a node of a Graph.
struct Var {
  std::size_t id = 0;
};

/// Reverse-mode tape over matrix-valued nodes.
///
/// Only the primitives the contrastive losses need are provided. Every
/// forward op checks its output for NaN/Inf and throws NumericalError.
/// Gradients are only propagated into nodes that (transitively) depend on a
/// parameter; stop_gradient cuts that dependency.
class Graph {
 public:
  Var parameter(const Tensor& t);
  Var parameter(const Matrix& m);
  Var constant(Matrix m);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient of the last backward() loss w.r.t. v. Zero matrix of the right
  /// shape when v received no gradient.
  Matrix grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b);
  /// a * b^T.
  Var matmul_bt(Var a, Var b);
  /// x * w^T + b, b a broadcast row.
  Var affine(Var x, Var w, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  /// a + row, row broadcast over every row of a.
  Var add_row(Var a, Var row);
  /// a .* row, row broadcast over every row of a.
  Var mul_row(Var a, Var row);
  /// a + col, col (n x 1) broadcast over every column of a.
  Var add_col(Var a, Var col);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var relu(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var square(Var a);
  Var concat_cols(Var a, Var b);
  /// Column j of a as an n x 1 node.
  Var column(Var a, Eigen::Index j);
  Var sum(Var a);
  Var mean(Var a);
  /// Row-wise log-sum-exp, max-shifted; n x m -> n x 1.
  Var logsumexp_rows(Var a);
  Var stop_gradient(Var a);
  /// scores(b, k) = anchors.row(b) . candidates.row(b*k_per_row + k);
  /// (B x h, B*K x h) -> B x K.
  Var pair_scores(Var anchors, Var candidates, std::size_t k_per_row);
  /// Per-row log[ e^{l_0} / ((1/K) sum_k e^{l_k}) ]; B x K -> B x 1.
  Var contrastive_log_ratio(Var logits);

  /// Runs reverse accumulation from a 1x1 loss.
  void backward(Var loss);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::function<void()> backprop;
  };

  Var push(Matrix value, bool requires_grad, const char* op);
  bool any_grad(std::initializer_list<Var> vars) const;
  Matrix& grad_ref(std::size_t id);
  template <typename Expr>
  void accumulate(std::size_t id, const Expr& e);

  std::vector<Node> nodes_;
};

/// Forward kernel of Graph::contrastive_log_ratio on plain matrices. When
/// `softmax` is non-null it receives the row-wise softmax of the logits.
/// All-equal logits in a row give exactly 0 and K = 1 gives exactly 0.
Vector contrastive_log_ratio(const Matrix& logits, Matrix* softmax = nullptr);

/// Row-wise max-shifted log-sum-exp.
Vector logsumexp_rows(const Matrix& a);

}  // namespace demi::nn
