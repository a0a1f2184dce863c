#include "demi/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace demi {

namespace {

using Point = std::vector<double>;

Point affine(const Point& base, const Point& dir_from, double t) {
  // base + t * (base - dir_from)
  Point out(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) out[i] = base[i] + t * (base[i] - dir_from[i]);
  return out;
}

}  // namespace

NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                             std::vector<double> x0, const NelderMeadOptions& opts) {
  const std::size_t n = x0.size();
  std::vector<Point> simplex(n + 1, x0);
  for (std::size_t i = 0; i < n; ++i) {
    simplex[i + 1][i] = x0[i] != 0.0 ? (1.0 + opts.relative_step) * x0[i] : opts.zero_step;
  }
  std::vector<double> values(n + 1);
  for (std::size_t i = 0; i <= n; ++i) values[i] = f(simplex[i]);

  std::vector<std::size_t> order(n + 1);
  NelderMeadResult result;
  std::size_t iter = 0;
  for (; iter < opts.max_iterations; ++iter) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    {
      std::vector<Point> s2;
      std::vector<double> v2;
      s2.reserve(n + 1);
      v2.reserve(n + 1);
      for (auto idx : order) {
        s2.push_back(simplex[idx]);
        v2.push_back(values[idx]);
      }
      simplex.swap(s2);
      values.swap(v2);
    }
    if (std::isfinite(values[n]) && values[n] - values[0] < opts.f_spread_tol) {
      result.converged = true;
      break;
    }

    Point centroid(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k) centroid[k] += simplex[i][k];
    for (auto& c : centroid) c /= static_cast<double>(n);

    const Point reflected = affine(centroid, simplex[n], opts.reflection);
    const double f_reflected = f(reflected);

    if (f_reflected < values[0]) {
      const Point expanded = affine(centroid, simplex[n], opts.reflection * opts.expansion);
      const double f_expanded = f(expanded);
      if (f_expanded < f_reflected) {
        simplex[n] = expanded;
        values[n] = f_expanded;
      } else {
        simplex[n] = reflected;
        values[n] = f_reflected;
      }
      continue;
    }
    if (f_reflected < values[n - 1]) {
      simplex[n] = reflected;
      values[n] = f_reflected;
      continue;
    }

    bool do_shrink = false;
    if (f_reflected < values[n]) {
      // Outside contraction.
      const Point contracted = affine(centroid, simplex[n], opts.reflection * opts.contraction);
      const double f_contracted = f(contracted);
      if (f_contracted <= f_reflected) {
        simplex[n] = contracted;
        values[n] = f_contracted;
      } else {
        do_shrink = true;
      }
    } else {
      // Inside contraction.
      const Point contracted = affine(centroid, simplex[n], -opts.contraction);
      const double f_contracted = f(contracted);
      if (f_contracted < values[n]) {
        simplex[n] = contracted;
        values[n] = f_contracted;
      } else {
        do_shrink = true;
      }
    }
    if (do_shrink) {
      for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t k = 0; k < n; ++k)
          simplex[i][k] = simplex[0][k] + opts.shrink * (simplex[i][k] - simplex[0][k]);
        values[i] = f(simplex[i]);
      }
    }
  }

  const auto best = static_cast<std::size_t>(
      std::distance(values.begin(), std::min_element(values.begin(), values.end())));
  result.x = simplex[best];
  result.f = values[best];
  result.iterations = iter;
  return result;
}

}  // namespace demi
