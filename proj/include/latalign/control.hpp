#pragma once
// Mechanism of control: attention-set construction, masked latent sampling
// (deterministic and stochastic branches), the command-execution gate, and
// command-outcome classification + metrics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "latalign/dirichlet.hpp"
#include "latalign/errors.hpp"
#include "latalign/model.hpp"
#include "latalign/rng.hpp"
#include "latalign/simplex.hpp"

namespace latalign {

enum class CommandKind { attack, retreat, assemble };

inline const char* command_kind_name(CommandKind k) {
  switch (k) {
    case CommandKind::attack: return "attack";
    case CommandKind::retreat: return "retreat";
    case CommandKind::assemble: return "assemble";
  }
  return "?";
}

struct Command {
  CommandKind kind = CommandKind::attack;
  int target_unit = -1;
  int issue_frame = 0;
  int max_frames = 60;  // execution budget
};

/// Selective attention set: the main hero and the command target are always
/// members; other units join when within radius of either seed. Distances
/// are Euclidean on the position columns of the feature rows, so the radius
/// must be expressed on the same scale as those columns.
struct AttentionSet {
  std::vector<int> members;  // sorted ascending
  double radius = 0.0;
};

enum class Outcome { success, abnormal, normal_end, rejected };

inline const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::success: return "success";
    case Outcome::abnormal: return "abnormal";
    case Outcome::normal_end: return "normal_end";
    case Outcome::rejected: return "rejected";
  }
  return "?";
}

struct TraceFrame {
  double x = 0.0;
  double y = 0.0;  // hero position after the frame's step, arena units
  ActionLabel action;
  double distance = 0.0;  // to the command target after the step
};

struct CommandTrace {
  Command command;
  bool gated = false;
  std::vector<TraceFrame> frames;  // non-empty iff gated
  Outcome outcome = Outcome::rejected;
};

/// Execution-time knobs shared by run_command and classify_outcome.
struct ControlConfig {
  double radius_frac = 0.25;  // attention radius as a fraction of the side
  double d_success = 1.0;     // arena units
  double p_min = 1.0;         // lingering detector: minimum net progress
  int k_intent = 3;
  bool gate = true;  // false = the simulated protocol (execute everything)
};

/// alive[i] == false excludes unit i from membership; an empty vector means
/// every unit is alive (feature rows carry no liveness).
inline AttentionSet build_attention_set(const UnitFeatureSet& state, int target,
                                        double radius,
                                        const std::vector<bool>& alive = {}) {
  const int n = state.raw.rows;
  if (target < 0 || target >= n)
    throw invalid_input_error("build_attention_set: absent target " + std::to_string(target));
  if (!alive.empty() && !alive[static_cast<std::size_t>(target)])
    throw invalid_input_error("build_attention_set: dead target " + std::to_string(target));
  if (!(radius > 0.0)) throw invalid_input_error("build_attention_set: radius must be > 0");
  const int hero = state.main_hero_index;

  const auto dist = [&](int a, int b) {
    const double dx = state.raw.at(a, 0) - state.raw.at(b, 0);
    const double dy = state.raw.at(a, 1) - state.raw.at(b, 1);
    return std::hypot(dx, dy);
  };
  AttentionSet out;
  out.radius = radius;
  for (int i = 0; i < n; ++i) {
    if (i != hero && i != target) {
      if (!alive.empty() && !alive[static_cast<std::size_t>(i)]) continue;
      if (dist(i, hero) >= radius && dist(i, target) >= radius) continue;
    }
    out.members.push_back(i);
  }
  return out;
}

/// Extra sampling knobs for the stochastic branch; the defaults realize the
/// literal α = sparsemax(t) form.
struct MaskedSampleConfig {
  double c_conc = 1.0;
  double alpha_floor = 1e-6;
  int B = 4;
  int n_avg = 1;
};

/// Masks scores outside s_att to the exclusion sentinel, then runs the
/// requested attention branch. Guarantee: support(z) ⊆ s_att, with exact
/// zeros elsewhere in both modes.
inline AlignmentWeights sample_masked_z(const std::vector<double>& t,
                                        const AttentionSet& s_att,
                                        AlignmentWeights::Mode mode, RngStream& rng,
                                        const MaskedSampleConfig& cfg = {}) {
  if (s_att.members.empty())
    throw invalid_input_error("sample_masked_z: empty attention set");
  std::vector<bool> in_set(t.size(), false);
  for (int i : s_att.members) {
    if (i < 0 || static_cast<std::size_t>(i) >= t.size())
      throw invalid_input_error("sample_masked_z: member out of range");
    in_set[static_cast<std::size_t>(i)] = true;
  }
  std::vector<double> masked = t;
  for (std::size_t i = 0; i < masked.size(); ++i)
    if (!in_set[i]) masked[i] = kMaskedScore;

  AlignmentWeights w;
  w.mode = mode;
  const SimplexVector zs = sparsemax(masked);
  if (mode == AlignmentWeights::Mode::deterministic) {
    w.z = zs;
    return w;
  }
  std::vector<double> alpha(zs.values.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) alpha[i] = cfg.c_conc * zs.values[i];
  const DirichletParams params = make_dirichlet_params(alpha, cfg.alpha_floor);
  const DirichletSampleResult draws = dirichlet_sample(params, cfg.B, cfg.n_avg, rng);
  w.z = draws.mean;
  return w;
}

/// Command execution rule: admit iff the target's intention cell ranks in
/// the k_intent highest logits; equal logits rank by lower cell index.
inline bool should_execute(int target_cell, const std::vector<double>& intention_logits,
                           int k_intent) {
  const int cells = static_cast<int>(intention_logits.size());
  if (cells == 0) throw invalid_input_error("should_execute: empty intention logits");
  if (target_cell < 0 || target_cell >= cells)
    throw invalid_input_error("should_execute: target cell out of range");
  if (k_intent < 1 || k_intent > cells)
    throw invalid_input_error("should_execute: k_intent out of [1, G^2]");
  const double ref = intention_logits[static_cast<std::size_t>(target_cell)];
  int rank = 0;  // number of cells strictly ahead of target_cell
  for (int j = 0; j < cells; ++j) {
    const double v = intention_logits[static_cast<std::size_t>(j)];
    if (v > ref || (v == ref && j < target_cell)) ++rank;
  }
  return rank < k_intent;
}

/// Outcome partition for a gated trace: success on reaching the target,
/// abnormal when the budget ran out while lingering (net progress over the
/// last W = max_frames/3 frames below p_min), normal_end otherwise.
inline Outcome classify_outcome(const std::vector<TraceFrame>& frames,
                                const Command& command, const ControlConfig& cfg) {
  if (frames.empty()) throw invalid_input_error("classify_outcome: gated trace required");
  const std::size_t n = frames.size();
  if (frames.back().distance <= cfg.d_success) return Outcome::success;
  if (static_cast<int>(n) >= command.max_frames) {
    const std::size_t w = static_cast<std::size_t>(std::max(1, command.max_frames / 3));
    const std::size_t then = n > w ? n - 1 - w : 0;
    const double progress = frames[then].distance - frames.back().distance;
    if (progress < cfg.p_min) return Outcome::abnormal;
  }
  return Outcome::normal_end;
}

/// One Rate block per command kind plus overall; the success/abnormal
/// ratios are undefined (not zero) when nothing passed the gate.
struct RateSet {
  int received = 0;
  int gated = 0;
  int success = 0;
  int abnormal = 0;

  std::optional<double> response_rate() const {
    if (received == 0) return std::nullopt;
    return static_cast<double>(gated) / received;
  }
  std::optional<double> success_rate() const {
    if (gated == 0) return std::nullopt;
    return static_cast<double>(success) / gated;
  }
  std::optional<double> abnormal_rate() const {
    if (gated == 0) return std::nullopt;
    return static_cast<double>(abnormal) / gated;
  }
};

struct CommandMetrics {
  RateSet overall;
  RateSet attack;
  RateSet retreat;
  RateSet assemble;

  const RateSet& of(CommandKind k) const {
    switch (k) {
      case CommandKind::attack: return attack;
      case CommandKind::retreat: return retreat;
      case CommandKind::assemble: return assemble;
    }
    return overall;
  }
};

inline CommandMetrics command_metrics(const std::vector<CommandTrace>& traces) {
  if (traces.empty()) throw invalid_input_error("command_metrics: no traces");
  CommandMetrics m;
  for (const CommandTrace& t : traces) {
    RateSet* sets[2] = {&m.overall, nullptr};
    switch (t.command.kind) {
      case CommandKind::attack: sets[1] = &m.attack; break;
      case CommandKind::retreat: sets[1] = &m.retreat; break;
      case CommandKind::assemble: sets[1] = &m.assemble; break;
    }
    for (RateSet* s : sets) {
      s->received += 1;
      if (t.gated) s->gated += 1;
      if (t.outcome == Outcome::success) s->success += 1;
      if (t.outcome == Outcome::abnormal) s->abnormal += 1;
    }
  }
  return m;
}

}  // namespace latalign
