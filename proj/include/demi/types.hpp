#pragma once

#include <Eigen/Dense>

namespace demi {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using RowRef = Eigen::Ref<const RowVector>;

}  // namespace demi
