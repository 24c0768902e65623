#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "latalign/dirichlet.hpp"
#include "latalign/errors.hpp"
#include "latalign/rng.hpp"
#include "latalign/rsvi.hpp"
#include "latalign/simplex.hpp"
#include "latalign/tensor.hpp"

namespace latalign {

// ---------------------------------------------------------------------------
// Data types

/// Per-state input: one row of raw features per unit (row 0 is the
/// controlled hero) plus a small global-info vector.
struct UnitFeatureSet {
  Matrix raw;                       // n × d_in
  std::vector<double> global_info;  // g_dim
  int main_hero_index = 0;          // fixed to 0 by construction
};

enum class Level1 : int { idle = 0, move = 1, attack = 2 };

/// Hierarchical action label: level-2 field validity follows level1.
struct ActionLabel {
  int level1 = 0;      // Level1
  int move_dir = -1;   // 0..7, present iff level1 == move
  int target = -1;     // unit index, present iff level1 == attack
  int intention = 0;   // coarse-grid cell, 0..G²−1
};

struct ActionDistribution {
  std::vector<double> level1_logits;    // 3
  std::vector<double> move_logits;      // 8
  std::vector<double> target_logits;    // n
  std::vector<double> intention_logits; // G²
};

struct AlignmentWeights {
  SimplexVector z;
  enum class Mode { deterministic, stochastic } mode = Mode::deterministic;
};

/// One imitation sample; true_attention is the expert's causal unit set,
/// kept for evaluation only (never shown to the model).
struct Sample {
  UnitFeatureSet state;
  ActionLabel label;
  std::vector<int> true_attention;
};

/// Coarse-grid intention cell of a normalized position in [0,1]².
inline int intention_cell(double nx, double ny, int grid) {
  const auto clamp_cell = [grid](double v) {
    int c = static_cast<int>(v * grid);
    if (c < 0) c = 0;
    if (c >= grid) c = grid - 1;
    return c;
  };
  return clamp_cell(ny) * grid + clamp_cell(nx);
}

inline void validate_state(const UnitFeatureSet& state, const Hyper& h) {
  if (state.raw.rows < 1) throw invalid_input_error("state: need at least one unit");
  if (state.raw.cols != h.d_in)
    throw config_error("state: raw feature width " + std::to_string(state.raw.cols) +
                       " != d_in " + std::to_string(h.d_in));
  if (static_cast<int>(state.global_info.size()) != h.g_dim)
    throw config_error("state: global_info width mismatch");
  if (state.main_hero_index != 0)
    throw invalid_input_error("state: main hero must be unit 0");
  for (double v : state.raw.data)
    if (!std::isfinite(v)) throw invalid_input_error("state: non-finite feature");
}

inline void validate_label(const ActionLabel& label, int n, int grid) {
  if (label.level1 < 0 || label.level1 > 2)
    throw invalid_input_error("label: level1 out of range");
  if (label.level1 == static_cast<int>(Level1::move) &&
      (label.move_dir < 0 || label.move_dir >= 8))
    throw invalid_input_error("label: move_dir out of range");
  if (label.level1 == static_cast<int>(Level1::attack) &&
      (label.target < 0 || label.target >= n))
    throw invalid_input_error("label: target out of range");
  if (label.intention < 0 || label.intention >= grid * grid)
    throw invalid_input_error("label: intention out of range");
}

// ---------------------------------------------------------------------------
// Forward pieces

/// Embedder intermediates, cached for the backward pass.
struct EmbedCache {
  Matrix U;   // n × (d_in + 2): raw features plus hero-relative position
  Matrix H1;  // n × h_embed, post-tanh
  Matrix X;   // n × d_embed
};

/// Shared two-layer unit embedder. Before the MLP, two derived columns are
/// appended: the unit's position minus the hero's (the raw layout keeps
/// absolute positions only, but "move toward the attended unit" needs its
/// bearing to survive the fusion sum).
inline EmbedCache embed_units(const UnitFeatureSet& state, const ParameterStore& params) {
  const Hyper& h = params.hyper;
  validate_state(state, h);
  const int n = state.raw.rows;
  const int d_aug = h.d_in + 2;
  EmbedCache cache;
  cache.U = Matrix(n, d_aug);
  cache.H1 = Matrix(n, h.h_embed);
  cache.X = Matrix(n, h.d_embed);
  const Matrix& W1 = params.at("embed.W1");
  const Matrix& b1 = params.at("embed.b1");
  const Matrix& W2 = params.at("embed.W2");
  const Matrix& b2 = params.at("embed.b2");
  if (W1.cols != d_aug) throw config_error("embed_units: W1 shape mismatch");
  std::vector<double> u(static_cast<std::size_t>(d_aug)), h1, x;
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < h.d_in; ++c) u[static_cast<std::size_t>(c)] = state.raw.at(i, c);
    u[static_cast<std::size_t>(h.d_in)] = state.raw.at(i, 0) - state.raw.at(0, 0);
    u[static_cast<std::size_t>(h.d_in) + 1] = state.raw.at(i, 1) - state.raw.at(0, 1);
    for (int c = 0; c < d_aug; ++c) cache.U.at(i, c) = u[static_cast<std::size_t>(c)];
    matvec(W1, u, h1);
    for (int r = 0; r < h.h_embed; ++r)
      cache.H1.at(i, r) = std::tanh(h1[static_cast<std::size_t>(r)] + b1.at(r, 0));
    std::vector<double> h1v(static_cast<std::size_t>(h.h_embed));
    for (int r = 0; r < h.h_embed; ++r) h1v[static_cast<std::size_t>(r)] = cache.H1.at(i, r);
    matvec(W2, h1v, x);
    for (int r = 0; r < h.d_embed; ++r)
      cache.X.at(i, r) = x[static_cast<std::size_t>(r)] + b2.at(r, 0);
  }
  return cache;
}

/// t_i = ⟨X_0, X_i⟩ / √d — scaled-dot scores against the hero query row.
inline std::vector<double> attention_scores(const Matrix& X) {
  if (X.cols < 1) throw invalid_input_error("attention_scores: empty embedding");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(X.cols));
  std::vector<double> t(static_cast<std::size_t>(X.rows), 0.0);
  for (int i = 0; i < X.rows; ++i) {
    double acc = 0.0;
    for (int c = 0; c < X.cols; ++c) acc += X.at(0, c) * X.at(i, c);
    t[static_cast<std::size_t>(i)] = acc * inv_sqrt_d;
  }
  return t;
}

/// c = Σ_i z_i · X_i (the linear fusion layer).
inline std::vector<double> fuse(const Matrix& X, const SimplexVector& z) {
  if (static_cast<int>(z.values.size()) != X.rows)
    throw invalid_input_error("fuse: length mismatch");
  std::vector<double> c(static_cast<std::size_t>(X.cols), 0.0);
  for (int i : z.support) {
    const double zi = z.values[static_cast<std::size_t>(i)];
    for (int col = 0; col < X.cols; ++col)
      c[static_cast<std::size_t>(col)] += zi * X.at(i, col);
  }
  return c;
}

/// Predictor intermediates for one latent z, cached for the backward pass.
struct PredictorCache {
  std::vector<double> p;   // [c ‖ global_info]
  std::vector<double> q1;  // post-tanh
  std::vector<double> q2;  // post-tanh
  ActionDistribution dist;
};

/// Two hidden tanh layers over [fuse(X, z) ‖ global_info], then the four
/// heads. The target head is a pointer: logit_i = ⟨X_i, W·q2⟩/√d, so it
/// addresses units by embedding rather than by fixed index.
inline PredictorCache predict(const ParameterStore& params, const Matrix& X,
                              const SimplexVector& z,
                              const std::vector<double>& global_info) {
  const Hyper& h = params.hyper;
  PredictorCache pc;
  const std::vector<double> c = fuse(X, z);
  pc.p = c;
  pc.p.insert(pc.p.end(), global_info.begin(), global_info.end());

  std::vector<double> a;
  matvec(params.at("pred.W1"), pc.p, a);
  const Matrix& pb1 = params.at("pred.b1");
  pc.q1.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    pc.q1[i] = std::tanh(a[i] + pb1.at(static_cast<int>(i), 0));
  matvec(params.at("pred.W2"), pc.q1, a);
  const Matrix& pb2 = params.at("pred.b2");
  pc.q2.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    pc.q2[i] = std::tanh(a[i] + pb2.at(static_cast<int>(i), 0));

  const auto head = [&](const char* w, const char* b, std::vector<double>& out) {
    matvec(params.at(w), pc.q2, out);
    const Matrix& bias = params.at(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias.at(static_cast<int>(i), 0);
  };
  head("head.level1.W", "head.level1.b", pc.dist.level1_logits);
  head("head.move.W", "head.move.b", pc.dist.move_logits);
  head("head.intent.W", "head.intent.b", pc.dist.intention_logits);

  std::vector<double> ptr;
  matvec(params.at("head.target.W"), pc.q2, ptr);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(h.d_embed));
  pc.dist.target_logits.assign(static_cast<std::size_t>(X.rows), 0.0);
  for (int i = 0; i < X.rows; ++i) {
    double acc = 0.0;
    for (int col = 0; col < X.cols; ++col) acc += X.at(i, col) * ptr[static_cast<std::size_t>(col)];
    pc.dist.target_logits[static_cast<std::size_t>(i)] = acc * inv_sqrt_d;
  }
  return pc;
}

// ---------------------------------------------------------------------------
// Loss

inline double log_softmax_at(const std::vector<double>& logits, int index) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double lse = 0.0;
  for (double v : logits) lse += std::exp(v - mx);
  return logits[static_cast<std::size_t>(index)] - mx - std::log(lse);
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double lse = 0.0;
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    lse += out[i];
  }
  for (double& v : out) v /= lse;
  return out;
}

struct PolicyLossTerms {
  double level1 = 0.0;
  double level2 = 0.0;     // the applicable head only; 0 when level1 = idle
  double intention = 0.0;  // unweighted
  double total = 0.0;      // level1 + level2 + λ_int · intention
};

/// Hierarchical cross-entropy: level-1 head always, the matching level-2
/// head (masked otherwise), and the weighted intention auxiliary.
inline PolicyLossTerms policy_loss_terms(const ActionDistribution& dist,
                                         const ActionLabel& label, double lambda_int) {
  validate_label(label, static_cast<int>(dist.target_logits.size()),
                 static_cast<int>(std::lround(std::sqrt(
                     static_cast<double>(dist.intention_logits.size())))));
  PolicyLossTerms t;
  t.level1 = -log_softmax_at(dist.level1_logits, label.level1);
  if (label.level1 == static_cast<int>(Level1::move))
    t.level2 = -log_softmax_at(dist.move_logits, label.move_dir);
  else if (label.level1 == static_cast<int>(Level1::attack))
    t.level2 = -log_softmax_at(dist.target_logits, label.target);
  t.intention = -log_softmax_at(dist.intention_logits, label.intention);
  t.total = t.level1 + t.level2 + lambda_int * t.intention;
  return t;
}

inline double policy_loss(const ActionDistribution& dist, const ActionLabel& label,
                          double lambda_int = 0.5) {
  return policy_loss_terms(dist, label, lambda_int).total;
}

/// d total / d logits per head (softmax − onehot on active heads, zero on
/// the masked level-2 head).
struct HeadGrads {
  std::vector<double> dlevel1, dmove, dtarget, dintent;
};

inline HeadGrads policy_loss_grad(const ActionDistribution& dist, const ActionLabel& label,
                                  double lambda_int) {
  HeadGrads g;
  g.dlevel1 = softmax(dist.level1_logits);
  g.dlevel1[static_cast<std::size_t>(label.level1)] -= 1.0;
  g.dmove.assign(dist.move_logits.size(), 0.0);
  g.dtarget.assign(dist.target_logits.size(), 0.0);
  if (label.level1 == static_cast<int>(Level1::move)) {
    g.dmove = softmax(dist.move_logits);
    g.dmove[static_cast<std::size_t>(label.move_dir)] -= 1.0;
  } else if (label.level1 == static_cast<int>(Level1::attack)) {
    g.dtarget = softmax(dist.target_logits);
    g.dtarget[static_cast<std::size_t>(label.target)] -= 1.0;
  }
  g.dintent = softmax(dist.intention_logits);
  g.dintent[static_cast<std::size_t>(label.intention)] -= 1.0;
  for (double& v : g.dintent) v *= lambda_int;
  return g;
}

// ---------------------------------------------------------------------------
// Whole-model forward

struct DeterministicForward {
  EmbedCache emb;
  std::vector<double> t;
  AlignmentWeights weights;
  PredictorCache pred;
};

inline DeterministicForward forward_deterministic(const UnitFeatureSet& state,
                                                  const ParameterStore& params) {
  DeterministicForward f;
  f.emb = embed_units(state, params);
  f.t = attention_scores(f.emb.X);
  f.weights.z = sparsemax(f.t);
  f.weights.mode = AlignmentWeights::Mode::deterministic;
  f.pred = predict(params, f.emb.X, f.weights.z, state.global_info);
  return f;
}

struct StochasticForward {
  EmbedCache emb;
  std::vector<double> t;
  DirichletParams alpha;
  AlignmentWeights weights;  // average of n_avg draws
  PredictorCache pred;
};

inline StochasticForward forward_stochastic(const UnitFeatureSet& state,
                                            const ParameterStore& params, RngStream& rng,
                                            int n_avg) {
  const Hyper& h = params.hyper;
  StochasticForward f;
  f.emb = embed_units(state, params);
  f.t = attention_scores(f.emb.X);
  SimplexVector zs = sparsemax(f.t);
  std::vector<double> alpha(zs.values.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) alpha[i] = h.c_conc * zs.values[i];
  f.alpha = make_dirichlet_params(std::move(alpha), h.alpha_floor);  // throws if degenerate
  f.weights.z = dirichlet_sample(f.alpha, h.B, n_avg, rng).mean;
  f.weights.mode = AlignmentWeights::Mode::stochastic;
  f.pred = predict(params, f.emb.X, f.weights.z, state.global_info);
  return f;
}

// ---------------------------------------------------------------------------
// Backward

/// Backprops head gradients through predictor and fusion. Accumulates
/// parameter gradients (× factor) into grads; accumulates d loss/d X into
/// dX (n×d, same factor) and returns d loss/d z (unscaled).
inline std::vector<double> predictor_backward(const ParameterStore& params,
                                              const Matrix& X, const SimplexVector& z,
                                              const PredictorCache& pc,
                                              const HeadGrads& hg, double factor,
                                              ParameterStore& grads, Matrix& dX) {
  const Hyper& h = params.hyper;
  const int n = X.rows;
  std::vector<double> dq2(pc.q2.size(), 0.0), tmp;

  const auto head_back = [&](const char* wname, const char* bname,
                             const std::vector<double>& dlogits) {
    matvec_t(params.at(wname), dlogits, tmp);
    for (std::size_t i = 0; i < dq2.size(); ++i) dq2[i] += tmp[i];
    Matrix& gw = grads.at(wname);
    Matrix& gb = grads.at(bname);
    for (int r = 0; r < gw.rows; ++r) {
      const double d = factor * dlogits[static_cast<std::size_t>(r)];
      gb.at(r, 0) += d;
      for (int c = 0; c < gw.cols; ++c) gw.at(r, c) += d * pc.q2[static_cast<std::size_t>(c)];
    }
  };
  head_back("head.level1.W", "head.level1.b", hg.dlevel1);
  head_back("head.move.W", "head.move.b", hg.dmove);
  head_back("head.intent.W", "head.intent.b", hg.dintent);

  // Pointer head: logits_i = ⟨X_i, a⟩/√d with a = W·q2.
  {
    const Matrix& W = params.at("head.target.W");
    std::vector<double> a;
    matvec(W, pc.q2, a);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(h.d_embed));
    std::vector<double> da(a.size(), 0.0);
    for (int i = 0; i < n; ++i) {
      const double d = hg.dtarget[static_cast<std::size_t>(i)] * inv_sqrt_d;
      if (d == 0.0) continue;
      for (int col = 0; col < X.cols; ++col) {
        da[static_cast<std::size_t>(col)] += d * X.at(i, col);
        dX.at(i, col) += factor * d * a[static_cast<std::size_t>(col)];
      }
    }
    Matrix& gw = grads.at("head.target.W");
    for (int r = 0; r < gw.rows; ++r)
      for (int c = 0; c < gw.cols; ++c)
        gw.at(r, c) += factor * da[static_cast<std::size_t>(r)] * pc.q2[static_cast<std::size_t>(c)];
    matvec_t(W, da, tmp);
    for (std::size_t i = 0; i < dq2.size(); ++i) dq2[i] += tmp[i];
  }

  // q2 = tanh(W2 q1 + b2)
  std::vector<double> dpre2(dq2.size());
  for (std::size_t i = 0; i < dq2.size(); ++i)
    dpre2[i] = dq2[i] * (1.0 - pc.q2[i] * pc.q2[i]);
  {
    Matrix& gw = grads.at("pred.W2");
    Matrix& gb = grads.at("pred.b2");
    for (int r = 0; r < gw.rows; ++r) {
      const double d = factor * dpre2[static_cast<std::size_t>(r)];
      gb.at(r, 0) += d;
      for (int c = 0; c < gw.cols; ++c) gw.at(r, c) += d * pc.q1[static_cast<std::size_t>(c)];
    }
  }
  std::vector<double> dq1;
  matvec_t(params.at("pred.W2"), dpre2, dq1);
  std::vector<double> dpre1(dq1.size());
  for (std::size_t i = 0; i < dq1.size(); ++i)
    dpre1[i] = dq1[i] * (1.0 - pc.q1[i] * pc.q1[i]);
  {
    Matrix& gw = grads.at("pred.W1");
    Matrix& gb = grads.at("pred.b1");
    for (int r = 0; r < gw.rows; ++r) {
      const double d = factor * dpre1[static_cast<std::size_t>(r)];
      gb.at(r, 0) += d;
      for (int c = 0; c < gw.cols; ++c) gw.at(r, c) += d * pc.p[static_cast<std::size_t>(c)];
    }
  }
  std::vector<double> dp;
  matvec_t(params.at("pred.W1"), dpre1, dp);

  // dp splits into dc (fusion context) and the global-info part (an input).
  // Fusion backward: dz_i = ⟨dc, X_i⟩; dX_i += z_i · dc.
  std::vector<double> dz(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int col = 0; col < X.cols; ++col) acc += dp[static_cast<std::size_t>(col)] * X.at(i, col);
    dz[static_cast<std::size_t>(i)] = acc;
    const double zi = z.values[static_cast<std::size_t>(i)];
    if (zi != 0.0)
      for (int col = 0; col < X.cols; ++col)
        dX.at(i, col) += factor * zi * dp[static_cast<std::size_t>(col)];
  }
  return dz;
}

/// dt → dX through t_i = ⟨X_0, X_i⟩/√d (the i = 0 self term doubles up).
inline void scores_backward(const Matrix& X, const std::vector<double>& dt, double factor,
                            Matrix& dX) {
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(X.cols));
  for (int i = 0; i < X.rows; ++i) {
    const double d = factor * dt[static_cast<std::size_t>(i)] * inv_sqrt_d;
    if (d == 0.0) continue;
    for (int col = 0; col < X.cols; ++col) {
      dX.at(i, col) += d * X.at(0, col);
      dX.at(0, col) += d * X.at(i, col);
    }
  }
}

/// dX → embedder parameter gradients (shared two-layer MLP, per unit).
inline void embedder_backward(const ParameterStore& params, const EmbedCache& emb,
                              const Matrix& dX, ParameterStore& grads) {
  const Hyper& h = params.hyper;
  const Matrix& W2 = params.at("embed.W2");
  Matrix& gW1 = grads.at("embed.W1");
  Matrix& gb1 = grads.at("embed.b1");
  Matrix& gW2 = grads.at("embed.W2");
  Matrix& gb2 = grads.at("embed.b2");
  std::vector<double> dx(static_cast<std::size_t>(h.d_embed));
  std::vector<double> dh1, dpre(static_cast<std::size_t>(h.h_embed));
  for (int i = 0; i < emb.X.rows; ++i) {
    bool all_zero = true;
    for (int r = 0; r < h.d_embed; ++r) {
      dx[static_cast<std::size_t>(r)] = dX.at(i, r);
      all_zero &= dX.at(i, r) == 0.0;
    }
    if (all_zero) continue;
    for (int r = 0; r < h.d_embed; ++r) {
      const double d = dx[static_cast<std::size_t>(r)];
      gb2.at(r, 0) += d;
      for (int c = 0; c < h.h_embed; ++c) gW2.at(r, c) += d * emb.H1.at(i, c);
    }
    matvec_t(W2, dx, dh1);
    for (int r = 0; r < h.h_embed; ++r) {
      const double hv = emb.H1.at(i, r);
      dpre[static_cast<std::size_t>(r)] = dh1[static_cast<std::size_t>(r)] * (1.0 - hv * hv);
      gb1.at(r, 0) += dpre[static_cast<std::size_t>(r)];
      for (int c = 0; c < emb.U.cols; ++c)
        gW1.at(r, c) += dpre[static_cast<std::size_t>(r)] * emb.U.at(i, c);
    }
  }
}

/// Full deterministic-path backward: policy loss → every parameter.
/// Accumulates (× factor) into grads; returns the loss.
inline double backward_deterministic(const UnitFeatureSet& state,
                                     const ParameterStore& params,
                                     const DeterministicForward& f,
                                     const ActionLabel& label, double factor,
                                     ParameterStore& grads) {
  const Hyper& h = params.hyper;
  const double loss = policy_loss(f.pred.dist, label, h.lambda_int);
  const HeadGrads hg = policy_loss_grad(f.pred.dist, label, h.lambda_int);
  Matrix dX(f.emb.X.rows, f.emb.X.cols);
  const std::vector<double> dz =
      predictor_backward(params, f.emb.X, f.weights.z, f.pred, hg, factor, grads, dX);
  const std::vector<double> dt = sparsemax_backward(f.t, dz);
  scores_backward(f.emb.X, dt, factor, dX);
  // dX rows were scaled by factor as accumulated; embedder_backward is linear.
  embedder_backward(params, f.emb, dX, grads);
  (void)state;
  return loss;
}

}  // namespace latalign
