#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "latalign/errors.hpp"
#include "latalign/gamma.hpp"
#include "latalign/rng.hpp"
#include "latalign/simplex.hpp"
#include "latalign/special.hpp"

namespace latalign {

/// Dirichlet concentration vector with sparse support. Entries at or below
/// alpha_floor are treated as exactly zero: the coordinate is excluded from
/// sampling, density, KL, and gradients (Γ(0) degenerates to a point mass
/// at 0).
struct DirichletParams {
  std::vector<double> alpha;   // ≥ 0; sub-floor entries stored as exactly 0
  std::vector<int> support;    // indices with alpha > alpha_floor, ascending
  double alpha_floor = 1e-6;
};

inline DirichletParams make_dirichlet_params(std::vector<double> alpha,
                                             double alpha_floor = 1e-6) {
  DirichletParams p;
  p.alpha_floor = alpha_floor;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    const double a = alpha[i];
    if (!(a >= 0.0) || !std::isfinite(a))
      throw invalid_input_error("dirichlet: alpha entries must be finite and >= 0");
    if (a > alpha_floor)
      p.support.push_back(static_cast<int>(i));
    else
      alpha[i] = 0.0;
  }
  if (p.support.empty())
    throw invalid_input_error("dirichlet: no alpha entry above alpha_floor");
  p.alpha = std::move(alpha);
  return p;
}

/// One normalized Dirichlet draw plus its underlying gamma records.
struct DirichletSample {
  SimplexVector z;               // off-support coordinates exactly 0
  std::vector<GammaDraw> draws;  // one per support index, in support order
  double total;                  // Σ of raw gamma values (the normalizer)
};

struct DirichletSampleResult {
  SimplexVector mean;  // average of the n_avg draws; still on the simplex
  std::vector<DirichletSample> samples;
};

/// Samples z ∼ Dirichlet(α) as normalized Γ(α_i, 1) variates, n_avg times,
/// and returns the average along with every per-draw record (the training
/// gradients need ε, α+B and the booster terms of each draw).
inline DirichletSampleResult dirichlet_sample(const DirichletParams& params, int B,
                                              int n_avg, RngStream& rng) {
  if (params.support.empty())
    throw invalid_input_error("dirichlet_sample: empty support");
  if (n_avg < 1) throw invalid_input_error("dirichlet_sample: n_avg must be >= 1");
  const std::size_t n = params.alpha.size();
  DirichletSampleResult out;
  out.mean.values.assign(n, 0.0);
  out.samples.reserve(static_cast<std::size_t>(n_avg));
  for (int s = 0; s < n_avg; ++s) {
    DirichletSample smp;
    smp.z.values.assign(n, 0.0);
    smp.draws.reserve(params.support.size());
    double total = 0.0;
    for (int i : params.support) {
      smp.draws.push_back(gamma_sample(params.alpha[static_cast<std::size_t>(i)], B, rng));
      total += smp.draws.back().value;
    }
    smp.total = total;
    for (std::size_t j = 0; j < params.support.size(); ++j) {
      const auto i = static_cast<std::size_t>(params.support[j]);
      const double z = smp.draws[j].value / total;
      smp.z.values[i] = z;
      if (z > 0.0) smp.z.support.push_back(params.support[j]);
      out.mean.values[i] += z;
    }
    out.samples.push_back(std::move(smp));
  }
  for (double& v : out.mean.values) v /= n_avg;
  for (std::size_t i = 0; i < n; ++i)
    if (out.mean.values[i] > 0.0) out.mean.support.push_back(static_cast<int>(i));
  return out;
}

/// Dirichlet log density at z, over the support coordinates of params.
/// Returns −∞ when z carries mass outside that support.
inline double dirichlet_log_pdf(const SimplexVector& z, const DirichletParams& params) {
  if (z.values.size() != params.alpha.size())
    throw invalid_input_error("dirichlet_log_pdf: length mismatch");
  for (std::size_t i = 0; i < z.values.size(); ++i) {
    const bool on_support = params.alpha[i] > 0.0;
    if (!on_support && z.values[i] > 0.0)
      return -std::numeric_limits<double>::infinity();
  }
  double alpha_sum = 0.0;
  double out = 0.0;
  for (int idx : params.support) {
    const auto i = static_cast<std::size_t>(idx);
    const double a = params.alpha[i];
    alpha_sum += a;
    out -= log_gamma(a);
    out += (a - 1.0) * std::log(z.values[i]);
  }
  return out + log_gamma(alpha_sum);
}

/// Analytic KL divergence between two Dirichlet distributions, restricted
/// to the shared support. KL(q ‖ p) is +∞ when q has mass where p has none;
/// that case is reported through the flag, not an exception, because the
/// caller (training) owns the policy for it.
struct KlResult {
  double value = 0.0;
  bool infinite = false;
};

inline KlResult dirichlet_kl(const DirichletParams& q, const DirichletParams& p) {
  if (q.alpha.size() != p.alpha.size())
    throw invalid_input_error("dirichlet_kl: length mismatch");
  for (int idx : q.support)
    if (p.alpha[static_cast<std::size_t>(idx)] <= 0.0) return {0.0, true};

  double aq = 0.0, ap = 0.0;
  for (int idx : q.support) {
    const auto i = static_cast<std::size_t>(idx);
    aq += q.alpha[i];
    ap += p.alpha[i];
  }
  KlResult out;
  out.value = log_gamma(aq) - log_gamma(ap);
  const double psi_aq = digamma(aq);
  for (int idx : q.support) {
    const auto i = static_cast<std::size_t>(idx);
    out.value += log_gamma(p.alpha[i]) - log_gamma(q.alpha[i]);
    out.value += (q.alpha[i] - p.alpha[i]) * (digamma(q.alpha[i]) - psi_aq);
  }
  return out;
}

/// Gradient of dirichlet_kl(q ‖ p) in q's concentrations, on q's support:
/// ∂KL/∂α_i = (α_i − α⁰_i) Ψ'(α_i) − Ψ'(Σα) Σ_j (α_j − α⁰_j).
inline std::vector<double> dirichlet_kl_grad(const DirichletParams& q,
                                             const DirichletParams& p) {
  if (q.alpha.size() != p.alpha.size())
    throw invalid_input_error("dirichlet_kl_grad: length mismatch");
  for (int idx : q.support)
    if (p.alpha[static_cast<std::size_t>(idx)] <= 0.0)
      throw domain_error("dirichlet_kl_grad: KL is infinite (support mismatch)");
  double aq = 0.0, diff_sum = 0.0;
  for (int idx : q.support) {
    const auto i = static_cast<std::size_t>(idx);
    aq += q.alpha[i];
    diff_sum += q.alpha[i] - p.alpha[i];
  }
  const double tri_aq = trigamma(aq);
  std::vector<double> grad(q.alpha.size(), 0.0);
  for (int idx : q.support) {
    const auto i = static_cast<std::size_t>(idx);
    grad[i] = (q.alpha[i] - p.alpha[i]) * trigamma(q.alpha[i]) - tri_aq * diff_sum;
  }
  return grad;
}

}  // namespace latalign
