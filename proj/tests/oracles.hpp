#pragma once

// Independent reference implementations used only by the tests. These are
// deliberately naive (exhaustive, unoptimized) so they can serve as oracles
// for the production code paths.

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "latalign/simplex.hpp"

namespace oracles {

/// Brute-force Euclidean projection onto the simplex: enumerate every
/// non-empty support subset S, solve the equality-constrained least-squares
/// problem on S (p_i = v_i − τ_S with τ_S = (Σ_S v_i − 1)/|S|), keep the
/// feasible candidate (all p_i ≥ 0 on S) closest to v. O(2^n · n); fine for
/// n ≤ 8. Sentinel coordinates are excluded up front.
inline std::vector<double> project_simplex_bruteforce(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < n; ++i)
    if (v[i] != latalign::kMaskedScore) idx.push_back(i);

  std::vector<double> best(n, 0.0);
  double best_dist = std::numeric_limits<double>::infinity();
  const std::size_t m = idx.size();
  for (std::size_t mask = 1; mask < (std::size_t{1} << m); ++mask) {
    double sum = 0.0;
    int card = 0;
    for (std::size_t j = 0; j < m; ++j)
      if (mask & (std::size_t{1} << j)) {
        sum += v[idx[j]];
        ++card;
      }
    const double tau = (sum - 1.0) / card;
    std::vector<double> cand(n, 0.0);
    bool feasible = true;
    for (std::size_t j = 0; j < m && feasible; ++j)
      if (mask & (std::size_t{1} << j)) {
        const double p = v[idx[j]] - tau;
        if (p < 0.0) feasible = false;
        cand[idx[j]] = p;
      }
    if (!feasible) continue;
    double dist = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double d = cand[idx[j]] - v[idx[j]];
      dist += d * d;
    }
    if (dist < best_dist) {
      best_dist = dist;
      best = cand;
    }
  }
  return best;
}

/// Sample mean and standard error of the mean.
struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
};

inline MeanStderr mean_stderr(const std::vector<double>& xs) {
  MeanStderr out;
  const double n = static_cast<double>(xs.size());
  for (double x : xs) out.mean += x;
  out.mean /= n;
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.stderr_ = std::sqrt(ss / (n * (n - 1.0)));
  return out;
}

}  // namespace oracles
