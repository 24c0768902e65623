#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "latalign/dirichlet.hpp"
#include "latalign/errors.hpp"
#include "latalign/model.hpp"
#include "latalign/rng.hpp"
#include "latalign/rsvi.hpp"
#include "latalign/simplex.hpp"
#include "latalign/tensor.hpp"

namespace latalign {

/// Supplies the frozen prior concentrations α⁰ for a state (stochastic
/// training). Built from a trained deterministic checkpoint's encoder.
using PriorProvider = std::function<std::vector<double>(const UnitFeatureSet&)>;

/// α⁰ = c_conc · sparsemax(scores) of the frozen deterministic encoder.
inline PriorProvider make_encoder_prior(ParameterStore prior_params) {
  return [prior = std::move(prior_params)](const UnitFeatureSet& state) {
    const EmbedCache emb = embed_units(state, prior);
    const SimplexVector zs = sparsemax(attention_scores(emb.X));
    std::vector<double> alpha(zs.values.size());
    for (std::size_t i = 0; i < alpha.size(); ++i)
      alpha[i] = prior.hyper.c_conc * zs.values[i];
    return alpha;
  };
}

struct ElboResult {
  double loss = 0.0;  // nll + kl_weight · kl
  double nll = 0.0;   // −(1/n_avg) Σ_s log p(y | z_s)
  double kl = 0.0;
  int floored_coords = 0;  // union-flooring interventions on this state
};

namespace detail_train {

/// Union flooring: q and the prior must share a support for the KL to be
/// finite, so coordinates present on one side only are lifted to a small
/// concentration (2× the floor, the smallest value the support predicate
/// admits). Returns the number of lifted coordinates.
inline int union_floor(std::vector<double>& q_alpha, std::vector<double>& p_alpha,
                       double alpha_floor) {
  int lifted = 0;
  const double lift = 2.0 * alpha_floor;
  for (std::size_t i = 0; i < q_alpha.size(); ++i) {
    const bool in_q = q_alpha[i] > alpha_floor;
    const bool in_p = p_alpha[i] > alpha_floor;
    if (in_q && !in_p) {
      p_alpha[i] = lift;
      ++lifted;
    } else if (in_p && !in_q) {
      q_alpha[i] = lift;
      ++lifted;
    }
  }
  return lifted;
}

}  // namespace detail_train

/// ELBO loss and its full gradient for one stochastic-mode sample.
/// ψ-gradients (predictor) flow through each of the n_avg draws directly;
/// φ-gradients (embedder) combine the direct X-path, the G_rep + G_cor
/// α-path, and the analytic KL gradient, all through c_conc · ∂sparsemax.
/// Parameter gradients are accumulated (× factor) into grads.
inline ElboResult elbo_loss(const UnitFeatureSet& state, const ActionLabel& label,
                            const ParameterStore& params,
                            const std::vector<double>& prior_alpha, RngStream& rng,
                            double factor, ParameterStore& grads) {
  const Hyper& h = params.hyper;
  const EmbedCache emb = embed_units(state, params);
  const std::vector<double> t = attention_scores(emb.X);
  const SimplexVector zs = sparsemax(t);
  const int n = emb.X.rows;
  if (static_cast<int>(prior_alpha.size()) != n)
    throw invalid_input_error("elbo_loss: prior length mismatch");

  std::vector<double> q_alpha(zs.values.size());
  for (std::size_t i = 0; i < q_alpha.size(); ++i) q_alpha[i] = h.c_conc * zs.values[i];
  std::vector<double> p_alpha = prior_alpha;
  ElboResult res;
  res.floored_coords = detail_train::union_floor(q_alpha, p_alpha, h.alpha_floor);
  // Sub-floor on both sides stays excluded, so build with the strict floor.
  const DirichletParams q = make_dirichlet_params(q_alpha, h.alpha_floor);
  const DirichletParams p0 = make_dirichlet_params(p_alpha, h.alpha_floor);

  const KlResult kl = dirichlet_kl(q, p0);
  if (kl.infinite)
    throw data_error("elbo_loss: infinite KL (support mismatch survived flooring)");
  res.kl = kl.value;

  const DirichletSampleResult draws = dirichlet_sample(q, h.B, h.n_avg, rng);
  std::vector<double> dalpha(q_alpha.size(), 0.0);
  Matrix dX(n, h.d_embed);
  const double per_draw = 1.0 / static_cast<double>(h.n_avg);
  for (const DirichletSample& smp : draws.samples) {
    const PredictorCache pc = predict(params, emb.X, smp.z, state.global_info);
    const double draw_loss = policy_loss(pc.dist, label, h.lambda_int);
    res.nll += per_draw * draw_loss;
    const HeadGrads hg = policy_loss_grad(pc.dist, label, h.lambda_int);
    // ψ and direct-X path of this draw's −log p, weight 1/n_avg.
    const std::vector<double> dz =
        predictor_backward(params, emb.X, smp.z, pc, hg, factor * per_draw, grads, dX);
    // α path: pathwise g_rep with the loss's z-gradient, plus the
    // acceptance-score correction g_cor weighted by the loss value.
    const std::vector<double> rep = rsvi_g_rep_sample(q, h.B, smp, dz);
    const std::vector<double> cor = rsvi_g_cor_sample(q, h.B, smp, draw_loss);
    for (std::size_t i = 0; i < dalpha.size(); ++i)
      dalpha[i] += per_draw * (rep[i] + cor[i]);
  }
  res.loss = res.nll + h.kl_weight * kl.value;

  const std::vector<double> dkl = dirichlet_kl_grad(q, p0);
  for (std::size_t i = 0; i < dalpha.size(); ++i) dalpha[i] += h.kl_weight * dkl[i];

  // dα → dt: α_i = c_conc · sparsemax(t)_i wherever α wasn't lifted by the
  // flooring (lifted coordinates are constants with zero derivative).
  std::vector<double> dzs(dalpha.size(), 0.0);
  for (std::size_t i = 0; i < dalpha.size(); ++i)
    if (h.c_conc * zs.values[i] > h.alpha_floor) dzs[i] = h.c_conc * dalpha[i];
  const std::vector<double> dt = sparsemax_backward(t, dzs);
  scores_backward(emb.X, dt, factor, dX);
  embedder_backward(params, emb, dX, grads);
  return res;
}

// ---------------------------------------------------------------------------
// Training

enum class TrainMode { deterministic, stochastic };

struct TrainConfig {
  int epochs = 40;
  int batch_size = 32;
  double lr = 0.02;       // hotter runs collapse attention onto the hero vertex
  double lr_decay = 0.95; // per-epoch multiplier; 1.0 disables the schedule
  double momentum = 0.9;
  double init_scale = 0.5;
  // Global-norm gradient clip, applied in stochastic mode only; 0 disables.
  // The ELBO path needs it — the acceptance-score correction scales like
  // 1/α on near-floor support coordinates, and one unclipped spike is
  // enough to saturate the net. The deterministic loss has bounded
  // gradients and trains better unclipped.
  double clip_norm = 5.0;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_level1_acc = 0.0;
  double val_move_acc = 0.0;    // over move-labelled states
  double val_target_acc = 0.0;  // over attack-labelled states
  double val_intent_acc = 0.0;
  double kl_mean = 0.0;         // stochastic mode only
  long floored_coords = 0;      // union-flooring interventions this epoch
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  TrainMode mode = TrainMode::deterministic;
};

struct Accuracy {
  long correct = 0;
  long total = 0;
  double rate() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
};

inline int argmax(const std::vector<double>& v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

/// Per-head validation accuracy of a forward distribution against a label.
inline void score_prediction(const ActionDistribution& dist, const ActionLabel& label,
                             Accuracy& lvl1, Accuracy& move, Accuracy& target,
                             Accuracy& intent) {
  ++lvl1.total;
  lvl1.correct += argmax(dist.level1_logits) == label.level1;
  if (label.level1 == static_cast<int>(Level1::move)) {
    ++move.total;
    move.correct += argmax(dist.move_logits) == label.move_dir;
  } else if (label.level1 == static_cast<int>(Level1::attack)) {
    ++target.total;
    target.correct += argmax(dist.target_logits) == label.target;
  }
  ++intent.total;
  intent.correct += argmax(dist.intention_logits) == label.intention;
}

/// Mini-batch SGD with per-epoch shuffling. Deterministic mode trains the
/// policy loss; stochastic mode trains the ELBO against the frozen prior
/// (prior must be non-null). A non-null warm_start replaces the random
/// initialization — stochastic refinement starts from the prior's weights,
/// so q matches the prior support everywhere and the initial KL is zero
/// (cold-started encoders disagree with a near-one-hot prior on most states,
/// which floors thousands of coordinates and stalls inside sparsemax's dead
/// zone). Returns the trained parameters.
inline ParameterStore train(const std::vector<Sample>& train_set,
                            const std::vector<Sample>& val_set, const Hyper& hyper,
                            const TrainConfig& cfg, TrainMode mode,
                            const PriorProvider* prior, RngStream& rng,
                            TrainReport* report, const ParameterStore* warm_start = nullptr) {
  if (train_set.empty()) throw data_error("train: empty training set");
  if (mode == TrainMode::stochastic && prior == nullptr)
    throw config_error("train: stochastic mode requires a prior provider");

  ParameterStore params = make_model_params(hyper);
  RngStream init_rng = rng.substream(1);
  init_model_params(params, init_rng, cfg.init_scale);
  if (warm_start != nullptr) {
    if (warm_start->hyper.d_in != hyper.d_in || warm_start->hyper.d_embed != hyper.d_embed)
      throw config_error("train: warm-start hyper mismatch");
    params = *warm_start;
    params.hyper = hyper;
  }
  SgdOptimizer opt;
  ParameterStore grads = zeros_like(params);
  if (report) {
    report->epochs.clear();
    report->mode = mode;
  }

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  RngStream shuffle_rng = rng.substream(2);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr * std::pow(cfg.lr_decay, epoch);
    // Fisher–Yates with the seeded stream: reproducible shuffling.
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = shuffle_rng.uniform_below(i);
      std::swap(order[i - 1], order[j]);
    }
    RngStream epoch_rng = rng.substream(100 + static_cast<std::uint64_t>(epoch));

    EpochStats stats;
    stats.epoch = epoch;
    double loss_sum = 0.0, kl_sum = 0.0;
    std::size_t pos = 0;
    while (pos < order.size()) {
      const std::size_t batch_end =
          std::min(pos + static_cast<std::size_t>(cfg.batch_size), order.size());
      const double factor = 1.0 / static_cast<double>(batch_end - pos);
      scale_params(grads, 0.0);
      for (std::size_t k = pos; k < batch_end; ++k) {
        const Sample& sample = train_set[order[k]];
        if (mode == TrainMode::deterministic) {
          const DeterministicForward f = forward_deterministic(sample.state, params);
          loss_sum += backward_deterministic(sample.state, params, f, sample.label,
                                             factor, grads);
        } else {
          const std::vector<double> prior_alpha = (*prior)(sample.state);
          const ElboResult r = elbo_loss(sample.state, sample.label, params,
                                         prior_alpha, epoch_rng, factor, grads);
          loss_sum += r.loss;
          kl_sum += r.kl;
          stats.floored_coords += r.floored_coords;
        }
      }
      if (cfg.clip_norm > 0.0 && mode == TrainMode::stochastic) {
        double sq = 0.0;
        for (const auto& [name, m] : grads.tensors)
          for (const double v : m.data) sq += v * v;
        const double norm = std::sqrt(sq);
        if (norm > cfg.clip_norm) scale_params(grads, cfg.clip_norm / norm);
      }
      opt.step(params, grads, lr, cfg.momentum);
      pos = batch_end;
    }
    stats.train_loss = loss_sum / static_cast<double>(train_set.size());
    stats.kl_mean = kl_sum / static_cast<double>(train_set.size());

    // Validation: deterministic forward for det mode; averaged-draw
    // stochastic forward (fresh per-epoch substream) for stochastic mode.
    Accuracy lvl1, move, target, intent;
    RngStream val_rng = rng.substream(50000 + static_cast<std::uint64_t>(epoch));
    for (const Sample& sample : val_set) {
      if (mode == TrainMode::deterministic) {
        const DeterministicForward f = forward_deterministic(sample.state, params);
        score_prediction(f.pred.dist, sample.label, lvl1, move, target, intent);
      } else {
        const StochasticForward f =
            forward_stochastic(sample.state, params, val_rng, hyper.n_avg);
        score_prediction(f.pred.dist, sample.label, lvl1, move, target, intent);
      }
    }
    stats.val_level1_acc = lvl1.rate();
    stats.val_move_acc = move.rate();
    stats.val_target_acc = target.rate();
    stats.val_intent_acc = intent.rate();
    if (report) report->epochs.push_back(stats);
  }
  return params;
}

}  // namespace latalign
