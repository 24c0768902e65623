#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "latalign/errors.hpp"
#include "latalign/rng.hpp"

namespace latalign {

/// One evaluation of the Gamma reparameterization h_Γ(ε, α) with its
/// analytic partial derivatives in ε and α.
struct GammaReparam {
  double value;    // h_Γ(ε, α) = (α − 1/3)(1 + ε/√(9α−3))³
  double d_eps;    // ∂h/∂ε = √d (1 + cε)²,              d = α − 1/3
  double d_alpha;  // ∂h/∂α = (1 + cε)³ − ε(1 + cε)²/(2√d)
};

/// h_Γ for the Γ(α, 1) rejection sampler, α ≥ 1. Returns nullopt when ε
/// falls in the rejected region 1 + cε ≤ 0 (the proposal's cube would be
/// non-positive there).
inline std::optional<GammaReparam> gamma_reparam(double epsilon, double alpha) {
  if (!(alpha >= 1.0))
    throw domain_error("gamma_reparam: alpha must be >= 1 (shape-augment first)");
  const double d = alpha - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  const double w = 1.0 + c * epsilon;
  if (w <= 0.0) return std::nullopt;
  const double sqrt_d = std::sqrt(d);
  GammaReparam out;
  out.value = d * w * w * w;
  out.d_eps = sqrt_d * w * w;
  out.d_alpha = w * w * w - epsilon * w * w / (2.0 * sqrt_d);
  return out;
}

/// ∂/∂α of the epsilon-derivative ratio h_εα / h_ε, needed by the
/// correction gradient: 1/(2d) − ε / (3 d^{3/2} (1 + cε)).
inline double gamma_reparam_mixed_ratio(double epsilon, double alpha) {
  const double d = alpha - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  const double w = 1.0 + c * epsilon;
  return 1.0 / (2.0 * d) - epsilon / (3.0 * d * std::sqrt(d) * w);
}

/// One accepted draw from Γ(α, 1), α possibly < 1 via shape augmentation.
struct GammaDraw {
  double value;          // final draw: h_Γ(ε, α+B) · exp(booster_logs)
  double epsilon;        // the accepted standard-normal noise
  double alpha_aug;      // α + B fed to the rejection sampler (≥ 1)
  double booster_logs;   // Σ_{i=1..B} log(u_i) / (α + i − 1)
  double booster_dalpha; // d booster_logs / dα = −Σ log(u_i)/(α+i−1)²
  int rejections;        // proposals discarded before acceptance
};

/// Marsaglia–Tsang-style rejection sampler for Γ(α+B, 1) followed by the
/// shape-augmentation boost z = z̃ · ∏_{i=1}^{B} u_i^{1/(α+i−1)}, which turns
/// the Γ(α+B, 1) variate z̃ into a Γ(α, 1) variate. B > 0 lets α < 1 (where
/// the sampler itself needs shape ≥ 1) and raises the acceptance rate.
inline GammaDraw gamma_sample(double alpha, int B, RngStream& rng) {
  if (!(alpha > 0.0)) throw domain_error("gamma_sample: alpha must be positive");
  if (B < 0) throw invalid_input_error("gamma_sample: B must be non-negative");
  const double a = alpha + B;
  if (!(a >= 1.0)) throw domain_error("gamma_sample: alpha + B must be >= 1");

  const double d = a - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  GammaDraw out{};
  out.alpha_aug = a;
  for (;;) {
    const double eps = rng.normal();
    const double w = 1.0 + c * eps;
    if (w <= 0.0) {
      ++out.rejections;
      continue;
    }
    const double v = w * w * w;
    const double u = rng.uniform();
    // Squeeze first; fall back to the exact log test.
    if (u < 1.0 - 0.0331 * eps * eps * eps * eps ||
        std::log(u) < 0.5 * eps * eps + d * (1.0 - v + std::log(v))) {
      out.epsilon = eps;
      out.value = d * v;
      break;
    }
    ++out.rejections;
  }
  for (int i = 1; i <= B; ++i) {
    const double lu = std::log(rng.uniform());
    const double denom = alpha + i - 1.0;
    out.booster_logs += lu / denom;
    out.booster_dalpha -= lu / (denom * denom);
  }
  out.value *= std::exp(out.booster_logs);
  return out;
}

}  // namespace latalign
