#pragma once

#include <string>
#include <vector>

#include "demi/nn/tensor.hpp"

namespace demi::nn {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// JSON document {format_version, tensors: [{name, shape, data}]}. Doubles
/// are written in shortest round-trip form, so reading back is bit-exact.
std::string checkpoint_to_json(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> checkpoint_from_json(const std::string& text);

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

}  // namespace demi::nn
