#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace demi {

struct NelderMeadOptions {
  double reflection = 1.0;
  double expansion = 2.0;
  double contraction = 0.5;
  double shrink = 0.5;
  /// Stop when max f - min f over the simplex falls below this.
  double f_spread_tol = 1e-12;
  std::size_t max_iterations = 2000;
  /// Initial simplex step relative to a nonzero coordinate, and the absolute
  /// step used for zero coordinates.
  double relative_step = 0.05;
  double zero_step = 0.00025;
};

struct NelderMeadResult {
  std::vector<double> x;
  double f = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Derivative-free simplex minimization. The objective may return +inf to
/// mark infeasible points; those vertices are simply never preferred.
NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                             std::vector<double> x0, const NelderMeadOptions& opts = {});

}  // namespace demi
