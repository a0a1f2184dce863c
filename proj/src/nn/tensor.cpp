#include "demi/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "demi/errors.hpp"

namespace demi::nn {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != product(shape_)) throw ShapeError("Tensor: data length != product of shape");
}

Tensor Tensor::from_matrix(const Matrix& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  std::copy(m.data(), m.data() + m.size(), t.data_.begin());
  return t;
}

Eigen::Index Tensor::rows() const {
  if (shape_.size() == 2) return static_cast<Eigen::Index>(shape_[0]);
  if (shape_.size() <= 1) return 1;
  throw ShapeError("Tensor: matrix view needs rank <= 2");
}

Eigen::Index Tensor::cols() const {
  if (shape_.size() == 2) return static_cast<Eigen::Index>(shape_[1]);
  if (shape_.size() == 1) return static_cast<Eigen::Index>(shape_[0]);
  if (shape_.empty()) return 1;
  throw ShapeError("Tensor: matrix view needs rank <= 2");
}

Eigen::Map<Matrix> Tensor::matrix() { return {data_.data(), rows(), cols()}; }

Eigen::Map<const Matrix> Tensor::matrix() const { return {data_.data(), rows(), cols()}; }

void Tensor::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw NumericalError(std::string("non-finite value in ") + what);
}

}  // namespace demi::nn
