#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "demi/types.hpp"

namespace demi::nn {

/// Dense row-major f64 tensor. Rank 1 or 2 in practice; a rank-1 tensor is
/// viewed as a single row when mapped to a matrix.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor from_matrix(const Matrix& m);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  Eigen::Index rows() const;
  Eigen::Index cols() const;

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  Eigen::Map<Matrix> matrix();
  Eigen::Map<const Matrix> matrix() const;

  void set_zero();
  bool all_finite() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// Throws NumericalError naming `what` if any entry of m is NaN or infinite.
void require_finite(const Matrix& m, const char* what);

}  // namespace demi::nn
