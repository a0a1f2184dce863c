#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "demi/nn/tensor.hpp"

namespace demi::nn {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment accumulators for one parameter list. Shapes are fixed by the first
/// step.
struct AdamState {
  AdamState() = default;
  explicit AdamState(AdamConfig c) : config(c) {}

  AdamConfig config;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long step = 0;
};

/// Bias-corrected Adam update, in place. Throws ShapeError when the gradient
/// list does not match the parameters or the state.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state);

}  // namespace demi::nn
