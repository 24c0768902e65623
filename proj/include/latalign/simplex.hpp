#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "latalign/errors.hpp"

namespace latalign {

/// Coordinates set to this sentinel are excluded from the projection: the
/// output is exactly zero there and they never enter the support. Using an
/// explicit sentinel (rather than a large negative float) keeps masked
/// supports exact.
inline constexpr double kMaskedScore = -std::numeric_limits<double>::infinity();

/// A point on the probability simplex with its support made explicit.
struct SimplexVector {
  std::vector<double> values;   // >= 0, sums to 1
  std::vector<int> support;     // indices with values[i] > 0, ascending
};

/// Euclidean projection of v onto the probability simplex (sparsemax),
/// by the sort-and-threshold rule. Sentinel entries (kMaskedScore) are
/// forced to zero. Coordinates exactly at the threshold are excluded.
inline SimplexVector sparsemax(const std::vector<double>& v) {
  const std::size_t n = v.size();
  if (n == 0) throw invalid_input_error("sparsemax: empty input");
  std::vector<double> active;
  active.reserve(n);
  for (double x : v) {
    if (x == kMaskedScore) continue;
    if (!std::isfinite(x)) throw invalid_input_error("sparsemax: non-finite input");
    active.push_back(x);
  }
  if (active.empty()) throw invalid_input_error("sparsemax: all coordinates masked");

  std::sort(active.begin(), active.end(), std::greater<double>());
  double cum = 0.0;
  double tau = 0.0;
  int k = 0;
  for (std::size_t j = 0; j < active.size(); ++j) {
    cum += active[j];
    const double kk = static_cast<double>(j + 1);
    if (1.0 + kk * active[j] > cum) {
      k = static_cast<int>(j + 1);
      tau = (cum - 1.0) / kk;
    } else {
      cum -= active[j];  // keep cum = sum of the selected prefix
      break;
    }
  }
  (void)k;

  SimplexVector out;
  out.values.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (v[i] == kMaskedScore) continue;
    const double p = v[i] - tau;
    if (p > 0.0) {
      out.values[i] = p;
      out.support.push_back(static_cast<int>(i));
    }
  }
  return out;
}

/// Vector-Jacobian product for sparsemax: returns Jᵀ·upstream with
/// J = I_S − (1/|S|)·1_S 1_Sᵀ on the support S of sparsemax(v) and zero
/// elsewhere. (J is symmetric, so this equals J·upstream.)
inline std::vector<double> sparsemax_backward(const std::vector<double>& v,
                                              const std::vector<double>& upstream) {
  if (v.size() != upstream.size())
    throw invalid_input_error("sparsemax_backward: length mismatch");
  const SimplexVector z = sparsemax(v);
  std::vector<double> grad(v.size(), 0.0);
  if (z.support.empty()) return grad;
  double mean = 0.0;
  for (int i : z.support) mean += upstream[static_cast<std::size_t>(i)];
  mean /= static_cast<double>(z.support.size());
  for (int i : z.support)
    grad[static_cast<std::size_t>(i)] = upstream[static_cast<std::size_t>(i)] - mean;
  return grad;
}

}  // namespace latalign
