#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "demi/nn/graph.hpp"
#include "demi/nn/tensor.hpp"
#include "demi/rng.hpp"
#include "demi/types.hpp"

namespace demi::nn {

inline constexpr std::size_t kCriticWidth = 100;

/// One-hidden-layer ReLU MLP used as the shared encoder f:
///   f(v) = W2 relu(W1 v + b1) + b2.
/// Critics are dot products of two encodings.
class CriticNet {
 public:
  CriticNet(std::size_t input_dim, std::size_t hidden = kCriticWidth,
            std::size_t output = kCriticWidth);

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
  static CriticNet random(std::size_t input_dim, Rng& rng, std::size_t hidden = kCriticWidth,
                          std::size_t output = kCriticWidth);

  std::size_t input_dim() const { return static_cast<std::size_t>(w1.cols()); }
  std::size_t hidden_dim() const { return static_cast<std::size_t>(w1.rows()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(w2.rows()); }

  /// Parameters in a fixed order: w1, b1, w2, b2.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  static const std::vector<std::string>& parameter_names();

  bool all_finite() const;

  Tensor w1;  // hidden x input
  Tensor b1;  // hidden
  Tensor w2;  // output x hidden
  Tensor b2;  // output
};

/// v followed by v.size() zeros, so single-view inputs share the two-view
/// encoder.
RowVector pad_single(const RowRef& v);
/// Row-wise pad_single.
Matrix pad_rows(const Matrix& m);

RowVector encode(const CriticNet& net, const RowRef& input);
/// encode() applied to every row.
Matrix encode_rows(const CriticNet& net, const Matrix& inputs);
/// encode(a) . encode(b).
double critic_value(const CriticNet& net, const RowRef& a, const RowRef& b);

/// Graph handles for one CriticNet's parameters.
struct NetVars {
  Var w1, b1, w2, b2;

  std::vector<Var> all() const { return {w1, b1, w2, b2}; }
};

/// Registers the net's parameters on the graph. With `trainable = false` the
/// parameters enter as constants and receive no gradient.
NetVars bind(Graph& g, const CriticNet& net, bool trainable = true);
/// Encodes every row of `inputs` on the graph.
Var encode(Graph& g, const NetVars& vars, Var inputs);
/// Gradients of the last backward() for each parameter, in parameters() order.
std::vector<Tensor> gradients(const Graph& g, const NetVars& vars, const CriticNet& net);

}  // namespace demi::nn
