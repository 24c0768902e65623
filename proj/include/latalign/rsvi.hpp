#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "latalign/dirichlet.hpp"
#include "latalign/errors.hpp"
#include "latalign/finite_diff.hpp"
#include "latalign/gamma.hpp"
#include "latalign/special.hpp"

namespace latalign {

/// Monte-Carlo estimate of ∇_α E_{z∼Dir(α)}[f(z)], split into the
/// reparameterization part (pathwise through h_Γ) and the correction part
/// (score of the acceptance mechanism).
struct RsviGradient {
  std::vector<double> g_rep;    // per-α mean of grad_f(z)ᵀ ∂z/∂α
  std::vector<double> g_cor;    // per-α mean of f(z) ∂ log(q/r) / ∂α
  int n_samples = 0;
  std::vector<double> std_err;  // stderr of the combined per-sample estimate
};

/// Per-sample gradient contribution for one Dirichlet draw, shared between
/// the test estimator below and the model's training backward pass.
///
/// grad_f is df/dz over the full coordinate vector; the return value is
/// d(f∘z)/dα on the support (full-length vector, zeros off support).
/// Chain: z_j = γ_j / Σγ, γ_i = h_Γ(ε_i, α_i+B)·s_i with s_i the booster
/// product, so ∂z_j/∂γ_i = (δ_ij − z_j)/Σγ and
/// dγ_i/dα_i = s_i·h_α + γ_i·d(log s_i)/dα.
inline std::vector<double> rsvi_g_rep_sample(const DirichletParams& params, int B,
                                             const DirichletSample& smp,
                                             const std::vector<double>& grad_f) {
  std::vector<double> g(params.alpha.size(), 0.0);
  // ⟨grad_f, z⟩ over the support: the normalization pulls every coordinate.
  double inner = 0.0;
  for (int idx : params.support) {
    const auto i = static_cast<std::size_t>(idx);
    inner += grad_f[i] * smp.z.values[i];
  }
  for (std::size_t j = 0; j < params.support.size(); ++j) {
    const auto i = static_cast<std::size_t>(params.support[j]);
    const GammaDraw& d = smp.draws[j];
    const auto h = gamma_reparam(d.epsilon, d.alpha_aug);
    // The stored draw was accepted, so epsilon is inside the valid region.
    const double booster = std::exp(d.booster_logs);
    const double dgamma_dalpha = booster * h->d_alpha + d.value * d.booster_dalpha;
    g[i] = (grad_f[i] - inner) / smp.total * dgamma_dalpha;
  }
  (void)B;
  return g;
}

/// Per-sample correction term: f(z) · ∂/∂α log[q(z̃;α+B)/r(z̃;α+B)] per
/// support coordinate, evaluated at the pre-booster draw z̃ = h_Γ(ε, α+B)
/// (the booster u's are exactly distributed and contribute no correction):
///   [(a−1)/h − 1]·h_α + log h − Ψ(a) + h_εα/h_ε,  a = α + B.
inline std::vector<double> rsvi_g_cor_sample(const DirichletParams& params, int B,
                                             const DirichletSample& smp, double f_value) {
  std::vector<double> g(params.alpha.size(), 0.0);
  for (std::size_t j = 0; j < params.support.size(); ++j) {
    const auto i = static_cast<std::size_t>(params.support[j]);
    const GammaDraw& d = smp.draws[j];
    const auto h = gamma_reparam(d.epsilon, d.alpha_aug);
    const double score = ((d.alpha_aug - 1.0) / h->value - 1.0) * h->d_alpha +
                         std::log(h->value) - digamma(d.alpha_aug) +
                         gamma_reparam_mixed_ratio(d.epsilon, d.alpha_aug);
    g[i] = f_value * score;
  }
  (void)B;
  return g;
}

inline RsviGradient rsvi_gradient(
    const DirichletParams& params, int B,
    const std::function<double(const std::vector<double>&)>& f,
    const std::function<std::vector<double>(const std::vector<double>&)>& grad_f,
    int n_samples, RngStream& rng) {
  if (n_samples < 1)
    throw invalid_input_error("rsvi_gradient: n_samples must be >= 1");
  const std::size_t n = params.alpha.size();

  // Guard against an inconsistent (f, grad_f) pair: check grad_f against
  // central differences of f at one sampled point before trusting it.
  {
    const DirichletSampleResult probe = dirichlet_sample(params, B, 1, rng);
    const std::vector<double> g = grad_f(probe.samples[0].z.values);
    const std::vector<double> fd = finite_diff_grad(f, probe.samples[0].z.values);
    for (int idx : params.support) {
      const auto i = static_cast<std::size_t>(idx);
      const double scale = 1.0 + std::fabs(fd[i]);
      if (std::fabs(g[i] - fd[i]) > 1e-4 * scale)
        throw invalid_input_error("rsvi_gradient: grad_f disagrees with finite differences of f");
    }
  }

  RsviGradient out;
  out.g_rep.assign(n, 0.0);
  out.g_cor.assign(n, 0.0);
  out.std_err.assign(n, 0.0);
  out.n_samples = n_samples;
  std::vector<double> sum_sq(n, 0.0);
  for (int s = 0; s < n_samples; ++s) {
    const DirichletSampleResult one = dirichlet_sample(params, B, 1, rng);
    const DirichletSample& smp = one.samples[0];
    const double fv = f(smp.z.values);
    if (!std::isfinite(fv))
      throw evaluation_error("rsvi_gradient: non-finite f at sample " +
                             std::to_string(s));
    const std::vector<double> gf = grad_f(smp.z.values);
    const std::vector<double> rep = rsvi_g_rep_sample(params, B, smp, gf);
    const std::vector<double> cor = rsvi_g_cor_sample(params, B, smp, fv);
    for (std::size_t i = 0; i < n; ++i) {
      out.g_rep[i] += rep[i];
      out.g_cor[i] += cor[i];
      const double tot = rep[i] + cor[i];
      sum_sq[i] += tot * tot;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    out.g_rep[i] /= n_samples;
    out.g_cor[i] /= n_samples;
    if (n_samples > 1) {
      const double mean = out.g_rep[i] + out.g_cor[i];
      const double var = (sum_sq[i] - n_samples * mean * mean) /
                         (static_cast<double>(n_samples) - 1.0);
      out.std_err[i] = std::sqrt(std::max(0.0, var) / n_samples);
    }
  }
  return out;
}

}  // namespace latalign
