#pragma once
// Simulation glue: command-following agents, single-command execution with
// masked alignment sampling in the loop, and full episode rollouts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "latalign/arena.hpp"
#include "latalign/control.hpp"
#include "latalign/errors.hpp"
#include "latalign/model.hpp"
#include "latalign/rng.hpp"

namespace latalign {

/// Policy interface for free play and commanded execution.
class CommandAgent {
 public:
  virtual ~CommandAgent() = default;
  /// Free-play action from the unmasked forward pass.
  virtual ActionLabel act(const UnitFeatureSet& state, RngStream& rng) = 0;
  /// Commanded action with attention confined to the member set.
  virtual ActionLabel act_masked(const UnitFeatureSet& state, const AttentionSet& att,
                                 const Command& command, RngStream& rng) = 0;
  /// Auxiliary global-intention logits feeding the execution gate.
  virtual std::vector<double> intention_logits(const UnitFeatureSet& state) = 0;
};

/// Greedy decode; argmax ties break toward the lower index.
inline ActionLabel greedy_action(const ActionDistribution& dist) {
  const auto imax = [](const std::vector<double>& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
  };
  ActionLabel a;
  a.level1 = imax(dist.level1_logits);
  if (a.level1 == static_cast<int>(Level1::move)) a.move_dir = imax(dist.move_logits);
  if (a.level1 == static_cast<int>(Level1::attack)) a.target = imax(dist.target_logits);
  a.intention = imax(dist.intention_logits);
  return a;
}

/// Trained-policy agent. The mode picks the alignment branch for both free
/// play and masked execution; the gate always reads the deterministic
/// unmasked auxiliary head, so response behavior is mode-independent.
class ModelAgent : public CommandAgent {
 public:
  ModelAgent(ParameterStore params, AlignmentWeights::Mode mode, int n_avg = -1)
      : params_(std::move(params)),
        mode_(mode),
        n_avg_(n_avg > 0 ? n_avg : params_.hyper.n_avg) {}

  ActionLabel act(const UnitFeatureSet& state, RngStream& rng) override {
    if (mode_ == AlignmentWeights::Mode::deterministic)
      return greedy_action(forward_deterministic(state, params_).pred.dist);
    return greedy_action(forward_stochastic(state, params_, rng, n_avg_).pred.dist);
  }

  ActionLabel act_masked(const UnitFeatureSet& state, const AttentionSet& att,
                         const Command& command, RngStream& rng) override {
    (void)command;  // the masked context is the entire conditioning
    const EmbedCache emb = embed_units(state, params_);
    const std::vector<double> t = attention_scores(emb.X);
    MaskedSampleConfig mc;
    mc.c_conc = params_.hyper.c_conc;
    mc.alpha_floor = params_.hyper.alpha_floor;
    mc.B = params_.hyper.B;
    mc.n_avg = n_avg_;
    const AlignmentWeights w = sample_masked_z(t, att, mode_, rng, mc);
    return greedy_action(predict(params_, emb.X, w.z, state.global_info).dist);
  }

  std::vector<double> intention_logits(const UnitFeatureSet& state) override {
    return forward_deterministic(state, params_).pred.dist.intention_logits;
  }

  const ParameterStore& params() const { return params_; }

 private:
  ParameterStore params_;
  AlignmentWeights::Mode mode_;
  int n_avg_;
};

/// Scripted oracle: walks straight at the commanded target (octant
/// kinematics). Reference upper bound for execution tests.
class OracleAgent : public CommandAgent {
 public:
  explicit OracleAgent(int grid = 6) : cells_(grid * grid) {}

  ActionLabel act(const UnitFeatureSet&, RngStream&) override { return ActionLabel{}; }

  ActionLabel act_masked(const UnitFeatureSet& state, const AttentionSet&,
                         const Command& command, RngStream&) override {
    const int t = command.target_unit;
    if (t < 0 || t >= state.raw.rows)
      throw invalid_input_error("OracleAgent: command target out of range");
    const int hero = state.main_hero_index;
    const double dx = state.raw.at(t, 0) - state.raw.at(hero, 0);
    const double dy = state.raw.at(t, 1) - state.raw.at(hero, 1);
    ActionLabel a;
    if (dx == 0.0 && dy == 0.0) return a;  // on top of the target: idle
    a.level1 = static_cast<int>(Level1::move);
    const int oct =
        static_cast<int>(std::lround(std::atan2(dy, dx) / (M_PI / 4.0)));
    a.move_dir = ((oct % 8) + 8) % 8;
    return a;
  }

  std::vector<double> intention_logits(const UnitFeatureSet&) override {
    return std::vector<double>(static_cast<std::size_t>(cells_), 0.0);
  }

 private:
  int cells_;
};

/// Does nothing; reference lower bound (trips the lingering detector).
class IdleAgent : public CommandAgent {
 public:
  explicit IdleAgent(int grid = 6) : cells_(grid * grid) {}
  ActionLabel act(const UnitFeatureSet&, RngStream&) override { return ActionLabel{}; }
  ActionLabel act_masked(const UnitFeatureSet&, const AttentionSet&, const Command&,
                         RngStream&) override {
    return ActionLabel{};
  }
  std::vector<double> intention_logits(const UnitFeatureSet&) override {
    return std::vector<double>(static_cast<std::size_t>(cells_), 0.0);
  }

 private:
  int cells_;
};

/// Coarse-grid cell currently containing a unit.
inline int target_cell_of(const ArenaState& arena, int unit, int grid) {
  if (unit < 0 || unit >= static_cast<int>(arena.units.size()))
    throw invalid_input_error("target_cell_of: unit out of range");
  const Unit& u = arena.units[static_cast<std::size_t>(unit)];
  return intention_cell(u.x / arena.bounds, u.y / arena.bounds, grid);
}

namespace detail_sim {

inline int grid_from_logits(const std::vector<double>& logits) {
  const int g = static_cast<int>(std::lround(std::sqrt(static_cast<double>(logits.size()))));
  if (g < 1 || g * g != static_cast<int>(logits.size()))
    throw config_error("gate: intention head size is not a square grid");
  return g;
}

inline bool gate_decision(CommandAgent& agent, const ArenaState& arena,
                          const Command& command, const ControlConfig& ccfg) {
  const std::vector<double> logits = agent.intention_logits(extract_features(arena));
  const int grid = grid_from_logits(logits);
  return should_execute(target_cell_of(arena, command.target_unit, grid), logits,
                        ccfg.k_intent);
}

}  // namespace detail_sim

/// Executes one command on a private arena copy. Gate at issue (rejected on
/// failure), then per frame: rebuild the attention set around the target,
/// act with masked alignment, step, stop on success or budget, re-gate and
/// abort (normal_end) if the intention head stops endorsing the target.
inline CommandTrace run_command(CommandAgent& agent, ArenaState arena,
                                const Command& command, const ArenaConfig& acfg,
                                const ControlConfig& ccfg, RngStream& rng,
                                ArenaState* final_state = nullptr) {
  const int n = static_cast<int>(arena.units.size());
  if (command.target_unit < 0 || command.target_unit >= n)
    throw invalid_input_error("run_command: command target out of range");
  if (!arena.units[static_cast<std::size_t>(command.target_unit)].alive)
    throw invalid_input_error("run_command: command target dead");

  CommandTrace trace;
  trace.command = command;
  trace.gated = !ccfg.gate || detail_sim::gate_decision(agent, arena, command, ccfg);
  if (!trace.gated) {
    trace.outcome = Outcome::rejected;
    if (final_state) *final_state = std::move(arena);
    return trace;
  }

  // A command pins the objective marker on its target for the whole window
  // (the command IS the ping); restored before the state is handed back.
  arena.ping_override = command.target_unit;
  arena.ping_unit = command.target_unit;

  const auto distance_to_target = [&]() {
    const Unit& hero = arena.units[0];
    const Unit& tgt = arena.units[static_cast<std::size_t>(command.target_unit)];
    return std::hypot(tgt.x - hero.x, tgt.y - hero.y);
  };

  for (int f = 0; f < command.max_frames; ++f) {
    const UnitFeatureSet fs = extract_features(arena);
    std::vector<bool> alive(arena.units.size());
    for (std::size_t i = 0; i < arena.units.size(); ++i) alive[i] = arena.units[i].alive;
    const AttentionSet att =
        build_attention_set(fs, command.target_unit, ccfg.radius_frac, alive);
    const ActionLabel a = agent.act_masked(fs, att, command, rng);
    step_arena(arena, a, acfg);
    TraceFrame tf;
    tf.x = arena.units[0].x;
    tf.y = arena.units[0].y;
    tf.action = a;
    tf.distance = distance_to_target();
    trace.frames.push_back(tf);
    if (tf.distance <= ccfg.d_success) break;
    if (ccfg.gate && f + 1 < command.max_frames &&
        !detail_sim::gate_decision(agent, arena, command, ccfg))
      break;  // abort: classified normal_end (budget not exhausted)
  }
  trace.outcome = classify_outcome(trace.frames, command, ccfg);
  arena.ping_override = -1;
  arena.ping_unit = scripted_ping(acfg, arena.frame);
  if (final_state) *final_state = std::move(arena);
  return trace;
}

struct EpisodeStats {
  int frames = 0;       // total frames advanced
  int free_frames = 0;  // frames outside command windows
  double damage_dealt = 0.0;        // free-play combat proxy
  double distance_travelled = 0.0;  // free-play hero displacement
};

struct RolloutResult {
  std::vector<CommandTrace> traces;
  EpisodeStats stats;
};

/// Advances the arena T frames: free play from the agent's unmasked forward
/// outside command windows; run_command drives the window (the episode
/// adopts its final state). Commands must be sorted by issue_frame.
inline RolloutResult rollout(CommandAgent& agent, ArenaState arena,
                             const std::vector<Command>& commands, int T,
                             const ArenaConfig& acfg, const ControlConfig& ccfg,
                             RngStream& rng) {
  if (T < 0) throw invalid_input_error("rollout: negative horizon");
  RolloutResult out;
  std::size_t next = 0;
  int t = 0;
  while (t < T) {
    if (next < commands.size() && commands[next].issue_frame <= t) {
      CommandTrace tr =
          run_command(agent, std::move(arena), commands[next], acfg, ccfg, rng, &arena);
      t += static_cast<int>(tr.frames.size());
      out.traces.push_back(std::move(tr));
      ++next;
      continue;
    }
    const UnitFeatureSet fs = extract_features(arena);
    const ActionLabel a = agent.act(fs, rng);
    const StepEffects fx = step_arena(arena, a, acfg);
    out.stats.damage_dealt += fx.damage;
    out.stats.distance_travelled += fx.moved;
    out.stats.free_frames += 1;
    t += 1;
  }
  out.stats.frames = t;
  return out;
}

}  // namespace latalign
