#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "latalign/errors.hpp"

namespace latalign {

/// Central-difference gradient oracle: entry i is
/// (f(x + h·e_i) − f(x − h·e_i)) / (2h). Used by the tests to check every
/// hand-written backward pass. h = 1e-5 balances truncation against
/// round-off at double precision.
inline std::vector<double> finite_diff_grad(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double h = 1e-5) {
  if (!(h > 0.0)) throw invalid_input_error("finite_diff_grad: h must be positive");
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    x[i] = xi + h;
    const double fp = f(x);
    x[i] = xi - h;
    const double fm = f(x);
    x[i] = xi;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw evaluation_error("finite_diff_grad: non-finite function value");
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

/// Scalar-parameter convenience overload.
inline double finite_diff_scalar(const std::function<double(double)>& f, double x,
                                 double h = 1e-5) {
  if (!(h > 0.0)) throw invalid_input_error("finite_diff_scalar: h must be positive");
  const double fp = f(x + h);
  const double fm = f(x - h);
  if (!std::isfinite(fp) || !std::isfinite(fm))
    throw evaluation_error("finite_diff_scalar: non-finite function value");
  return (fp - fm) / (2.0 * h);
}

}  // namespace latalign
