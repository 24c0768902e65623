#pragma once
// Toy MOBA abstraction: bounded 2-D map with anchored-wander scripted
// motion, a locality-exact scripted expert with ground-truth attention,
// dataset generation, and scripted command generation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "latalign/control.hpp"
#include "latalign/errors.hpp"
#include "latalign/model.hpp"
#include "latalign/rng.hpp"

namespace latalign {

enum class UnitKind { hero, soldier, organ, monster, base };
enum class Team { friendly, enemy, neutral };

inline const char* unit_kind_name(UnitKind k) {
  switch (k) {
    case UnitKind::hero: return "hero";
    case UnitKind::soldier: return "soldier";
    case UnitKind::organ: return "organ";
    case UnitKind::monster: return "monster";
    case UnitKind::base: return "base";
  }
  return "?";
}

struct Unit {
  UnitKind kind = UnitKind::soldier;
  Team team = Team::neutral;
  double x = 0.0;
  double y = 0.0;
  double health = 1.0;
  bool alive = true;
  // Scripted-motion bookkeeping: units wander inside wander_radius of a
  // fixed anchor, which keeps every unit identifiable by class + region.
  double anchor_x = 0.0;
  double anchor_y = 0.0;
  double wander_radius = 0.0;
  double damage_taken = 0.0;  // combat-proxy accumulator
};

struct ArenaConfig {
  int heroes_per_side = 2;
  int soldiers_per_side = 6;
  int towers_per_side = 1;  // singleton towers double as unique landmarks
  int monsters = 3;
  double bounds = 20.0;
  double speed = 0.5;  // controlled hero, distance per frame
  double attack_range = 0.9;
  double attack_damage = 0.04;
  double retreat_health = 0.3;  // expert retreat threshold
  double stop_distance = 0.5;   // expert idles this close to its goal
  int roam_block = 100;         // frames per roam objective
  int grid = 6;                 // intention grid (G)
};

struct ArenaState {
  int frame = 0;
  std::vector<Unit> units;
  double bounds = 20.0;
  double speed = 0.5;
  std::uint64_t seed = 0;  // drives scripted motion and health cycles
  int ping_unit = -1;      // the current objective marker (feature-visible)
  int ping_override = -1;  // >= 0 pins the ping (command execution windows)
};

/// Fixed unit ordering: controlled hero, friendly hero(s), enemy heroes,
/// friendly/enemy soldiers, friendly/enemy tower(s), bases, monsters.
struct Census {
  int heroes = 2;
  int soldiers = 6;
  int towers = 1;
  int monsters = 3;

  int friendly_hero(int k) const { return k; }
  int enemy_hero(int k) const { return heroes + k; }
  int friendly_soldier(int k) const { return 2 * heroes + k; }
  int enemy_soldier(int k) const { return 2 * heroes + soldiers + k; }
  int friendly_tower(int k) const { return 2 * heroes + 2 * soldiers + k; }
  int enemy_tower(int k) const { return 2 * heroes + 2 * soldiers + towers + k; }
  int friendly_base() const { return 2 * heroes + 2 * soldiers + 2 * towers; }
  int enemy_base() const { return friendly_base() + 1; }
  int monster(int k) const { return friendly_base() + 2 + k; }
  int total() const { return 2 * heroes + 2 * soldiers + 2 * towers + 2 + monsters; }
};

inline Census census_of(const ArenaConfig& c) {
  return Census{c.heroes_per_side, c.soldiers_per_side, c.towers_per_side, c.monsters};
}

namespace detail_arena {

constexpr std::uint64_t kPlaceStream = 0x504C4143ULL;
constexpr std::uint64_t kMotionStream = 0x4D4F5645ULL;
constexpr std::uint64_t kHealthStream = 0x4845414CULL;
constexpr std::uint64_t kCommandStream = 0x434D4453ULL;
constexpr std::uint64_t kShuffleStream = 0x53485546ULL;
constexpr std::uint64_t kEpisodeStream = 0x45504953ULL;
constexpr int kMotionBlock = 25;  // frames per scripted heading

inline std::uint64_t mix2(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b * 0x9E3779B97F4A7C15ULL);
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

inline double kind_speed(UnitKind k) {
  switch (k) {
    case UnitKind::hero: return 0.3;  // non-controlled heroes
    case UnitKind::soldier: return 0.25;
    case UnitKind::monster: return 0.15;
    case UnitKind::organ:
    case UnitKind::base: return 0.0;
  }
  return 0.0;
}

}  // namespace detail_arena

/// Scripted per-block heading; pure in (seed, unit, block).
inline std::pair<double, double> scripted_step(std::uint64_t seed, int unit,
                                               UnitKind kind, int block) {
  const double sp = detail_arena::kind_speed(kind);
  if (sp == 0.0) return {0.0, 0.0};
  RngStream g(seed, detail_arena::mix2(detail_arena::kMotionStream,
                                       static_cast<std::uint64_t>(unit) * 1000003ULL +
                                           static_cast<std::uint64_t>(block)));
  const double theta = 2.0 * M_PI * g.uniform();
  return {sp * std::cos(theta), sp * std::sin(theta)};
}

/// Baseline health cycle in [0.2, 1.0]; pure in (seed, unit, frame).
inline double health_cycle(std::uint64_t seed, int unit, int frame) {
  RngStream g(seed, detail_arena::mix2(detail_arena::kHealthStream,
                                       static_cast<std::uint64_t>(unit)));
  const double period = 200.0 + 200.0 * g.uniform();
  const double phase = period * g.uniform();
  return 0.6 + 0.4 * std::sin(2.0 * M_PI * (frame + phase) / period);
}

inline void refresh_health(ArenaState& state) {
  for (std::size_t i = 0; i < state.units.size(); ++i) {
    Unit& u = state.units[i];
    const double base = health_cycle(state.seed, static_cast<int>(i), state.frame);
    u.health = std::clamp(base - u.damage_taken, 0.05, 1.0);
  }
}

/// Roam landmarks, canonical order, spanning kinds/teams and both the
/// static and the wandering parts of the map.
inline std::vector<int> roam_pool(const Census& cen) {
  std::vector<int> pool = {cen.enemy_tower(0),      cen.enemy_soldier(0),
                           cen.monster(0),          cen.enemy_base(),
                           cen.friendly_hero(1 % cen.heroes),
                           cen.friendly_tower(0),   cen.enemy_soldier(3 % cen.soldiers),
                           cen.monster(2 % cen.monsters), cen.friendly_base(),
                           cen.enemy_soldier(5 % cen.soldiers)};
  return pool;
}

/// The scripted objective marker: walks the roam pool on the block clock.
/// The marked unit is feature-visible (the ping column), which is what ties
/// the expert's focus to something a feature-based attention can find; the
/// game clock alone reaches the predictor but never the attention scores.
inline int scripted_ping(const ArenaConfig& config, int frame) {
  const std::vector<int> pool = roam_pool(census_of(config));
  const int block = ((frame % 1000) / config.roam_block) %
                    static_cast<int>(pool.size());
  return pool[static_cast<std::size_t>(block)];
}

/// Deterministic layout: bases at opposite corners, towers on the diagonal,
/// soldiers in fixed lane slots along the diagonal, monsters at fixed jungle
/// spots; the seeded stream jitters every spawn inside its wander region.
/// The second enemy hero is anchored in a far corner pocket so the duel rule
/// (which consults only the first enemy hero) stays collision-free.
inline ArenaState new_arena(const ArenaConfig& config, std::uint64_t seed) {
  if (config.heroes_per_side < 1)
    throw config_error("new_arena: heroes_per_side must be >= 1");
  if (config.soldiers_per_side < 0 || config.towers_per_side < 1 || config.monsters < 0)
    throw config_error("new_arena: invalid unit census");
  if (!(config.bounds > 4.0) || !(config.speed > 0.0))
    throw config_error("new_arena: invalid bounds/speed");

  const Census cen = census_of(config);
  const double b = config.bounds;
  ArenaState st;
  st.bounds = b;
  st.speed = config.speed;
  st.seed = seed;
  st.units.resize(static_cast<std::size_t>(cen.total()));

  RngStream place(seed, detail_arena::kPlaceStream);
  const auto put = [&](int idx, UnitKind kind, Team team, double ax, double ay,
                       double wander) {
    Unit& u = st.units[static_cast<std::size_t>(idx)];
    u.kind = kind;
    u.team = team;
    u.anchor_x = ax;
    u.anchor_y = ay;
    u.wander_radius = wander;
    if (wander > 0.0) {
      const double r = wander * std::sqrt(place.uniform());
      const double th = 2.0 * M_PI * place.uniform();
      u.x = ax + r * std::cos(th);
      u.y = ay + r * std::sin(th);
    } else {
      u.x = ax;
      u.y = ay;
    }
    u.x = std::clamp(u.x, 0.5, b - 0.5);
    u.y = std::clamp(u.y, 0.5, b - 0.5);
  };

  // Heroes: controlled hero near its base; the friendly companion anchors at
  // a per-episode random spot (it is class-unique, so region-invariance is
  // not needed); first enemy hero wanders widely around the center; later
  // enemy heroes sit in the far-edge pocket.
  put(cen.friendly_hero(0), UnitKind::hero, Team::friendly, 0.15 * b, 0.1 * b, 1.0);
  for (int k = 1; k < cen.heroes; ++k)
    put(cen.friendly_hero(k), UnitKind::hero, Team::friendly,
        (0.2 + 0.6 * place.uniform()) * b, (0.2 + 0.6 * place.uniform()) * b, 4.0);
  put(cen.enemy_hero(0), UnitKind::hero, Team::enemy, 0.5 * b, 0.5 * b, 6.0);
  for (int k = 1; k < cen.heroes; ++k)
    put(cen.enemy_hero(k), UnitKind::hero, Team::enemy, 0.92 * b,
        (0.5 + 0.05 * k) * b, 1.2);
  // Soldiers: fixed lane slots along the diagonal, alternating sides.
  for (int k = 0; k < cen.soldiers; ++k) {
    const double f = 0.45 - 0.04 * k;
    const double d = (k % 2 == 0) ? 0.04 * b : -0.04 * b;
    put(cen.friendly_soldier(k), UnitKind::soldier, Team::friendly, f * b + d,
        f * b - d, 1.5);
  }
  for (int k = 0; k < cen.soldiers; ++k) {
    const double f = 0.55 + 0.04 * k;
    const double d = (k % 2 == 0) ? 0.04 * b : -0.04 * b;
    put(cen.enemy_soldier(k), UnitKind::soldier, Team::enemy, f * b + d, f * b - d,
        1.5);
  }
  for (int k = 0; k < cen.towers; ++k)
    put(cen.friendly_tower(k), UnitKind::organ, Team::friendly, (0.32 - 0.08 * k) * b,
        (0.32 - 0.08 * k) * b, 0.0);
  for (int k = 0; k < cen.towers; ++k)
    put(cen.enemy_tower(k), UnitKind::organ, Team::enemy, (0.68 + 0.08 * k) * b,
        (0.68 + 0.08 * k) * b, 0.0);
  put(cen.friendly_base(), UnitKind::base, Team::friendly, 0.1 * b, 0.1 * b, 0.0);
  put(cen.enemy_base(), UnitKind::base, Team::enemy, 0.9 * b, 0.9 * b, 0.0);
  const double jungle[3][2] = {{0.3, 0.7}, {0.7, 0.3}, {0.5, 0.2}};
  for (int k = 0; k < cen.monsters; ++k) {
    const auto& j = jungle[k % 3];
    put(cen.monster(k), UnitKind::monster, Team::neutral, j[0] * b,
        j[1] * b + 0.06 * b * (k / 3), 1.5);
  }
  refresh_health(st);
  st.ping_unit = scripted_ping(config, st.frame);
  return st;
}

/// Effects of one frame, for free-play episode stats.
struct StepEffects {
  double moved = 0.0;   // controlled hero displacement
  double damage = 0.0;  // combat-proxy damage dealt by the hero
};

/// Advances one frame: applies the controlled hero's action, then scripted
/// anchored-wander motion for everyone else, then the health refresh.
inline StepEffects step_arena(ArenaState& state, const ActionLabel& action,
                              const ArenaConfig& config) {
  if (state.units.empty() || !state.units[0].alive)
    throw invalid_input_error("step_arena: controlled hero missing or dead");
  const double b = state.bounds;
  StepEffects fx;
  Unit& hero = state.units[0];
  if (action.level1 == static_cast<int>(Level1::move)) {
    if (action.move_dir < 0 || action.move_dir > 7)
      throw invalid_input_error("step_arena: move_dir out of range");
    const double th = action.move_dir * (M_PI / 4.0);
    const double nx = std::clamp(hero.x + state.speed * std::cos(th), 0.5, b - 0.5);
    const double ny = std::clamp(hero.y + state.speed * std::sin(th), 0.5, b - 0.5);
    fx.moved = std::hypot(nx - hero.x, ny - hero.y);
    hero.x = nx;
    hero.y = ny;
  } else if (action.level1 == static_cast<int>(Level1::attack)) {
    const int t = action.target;
    if (t >= 0 && t < static_cast<int>(state.units.size()) && t != 0) {
      Unit& victim = state.units[static_cast<std::size_t>(t)];
      if (victim.alive &&
          std::hypot(victim.x - hero.x, victim.y - hero.y) <= config.attack_range) {
        victim.damage_taken += config.attack_damage;
        fx.damage = config.attack_damage;
      }
    }
  }

  const int block = state.frame / detail_arena::kMotionBlock;
  for (std::size_t i = 1; i < state.units.size(); ++i) {
    Unit& u = state.units[i];
    if (!u.alive) continue;  // dead units never move
    const auto [vx, vy] = scripted_step(state.seed, static_cast<int>(i), u.kind, block);
    if (vx == 0.0 && vy == 0.0) continue;
    double nx = u.x + vx;
    double ny = u.y + vy;
    const double dx = nx - u.anchor_x;
    const double dy = ny - u.anchor_y;
    const double d = std::hypot(dx, dy);
    if (u.wander_radius > 0.0 && d > u.wander_radius) {
      nx = u.anchor_x + dx / d * u.wander_radius;
      ny = u.anchor_y + dy / d * u.wander_radius;
    }
    u.x = std::clamp(nx, 0.5, b - 0.5);
    u.y = std::clamp(ny, 0.5, b - 0.5);
  }
  state.frame += 1;
  refresh_health(state);
  state.ping_unit = state.ping_override >= 0 ? state.ping_override
                                             : scripted_ping(config, state.frame);
  return fx;
}

/// Feature layout per unit: normalized position (2), health (1), team
/// one-hot (3), kind one-hot (5), normalized distance to the hero (1),
/// ping flag (1).
inline UnitFeatureSet extract_features(const ArenaState& state) {
  const int n = static_cast<int>(state.units.size());
  if (n == 0) throw invalid_input_error("extract_features: empty arena");
  const double b = state.bounds;
  const double diag = b * std::sqrt(2.0);
  const Unit& hero = state.units[0];
  UnitFeatureSet fs;
  fs.raw = Matrix(n, 13);
  for (int i = 0; i < n; ++i) {
    const Unit& u = state.units[static_cast<std::size_t>(i)];
    fs.raw.at(i, 0) = u.x / b;
    fs.raw.at(i, 1) = u.y / b;
    fs.raw.at(i, 2) = u.health;
    fs.raw.at(i, 3 + static_cast<int>(u.team)) = 1.0;
    fs.raw.at(i, 6 + static_cast<int>(u.kind)) = 1.0;
    fs.raw.at(i, 11) = std::hypot(u.x - hero.x, u.y - hero.y) / diag;
    fs.raw.at(i, 12) = i == state.ping_unit ? 1.0 : 0.0;
  }
  double mean_health = 0.0;
  for (const Unit& u : state.units) mean_health += u.health;
  fs.global_info = {(state.frame % 1000) / 1000.0,
                    mean_health / static_cast<double>(n)};
  return fs;
}

struct ExpertDecision {
  ActionLabel label;
  std::vector<int> true_attention;  // sorted ascending
};

namespace detail_arena {

inline int octant(double dx, double dy) {
  const int oct = static_cast<int>(std::lround(std::atan2(dy, dx) / (M_PI / 4.0)));
  return ((oct % 8) + 8) % 8;
}

}  // namespace detail_arena

/// Priority rules, each consulting a fixed unit set (locality is exact):
///   1. retreat toward the own base when hero health < threshold
///   2. duel: attack the first enemy hero when inside attack range
///   3. roam toward the pinged landmark (idle when arrived)
/// true_attention = units consulted along the decision path (≤ 3).
inline ExpertDecision expert_action(const ArenaState& state, const ArenaConfig& config) {
  const Census cen = census_of(config);
  if (static_cast<int>(state.units.size()) != cen.total())
    throw config_error("expert_action: unit count does not match the census");
  const Unit& hero = state.units[0];
  if (!hero.alive) throw invalid_input_error("expert_action: controlled hero dead");

  const double b = state.bounds;
  ExpertDecision out;
  const auto move_toward = [&](double gx, double gy) {
    if (std::hypot(gx - hero.x, gy - hero.y) < config.stop_distance) {
      out.label.level1 = static_cast<int>(Level1::idle);
    } else {
      out.label.level1 = static_cast<int>(Level1::move);
      out.label.move_dir = detail_arena::octant(gx - hero.x, gy - hero.y);
    }
    out.label.intention = intention_cell(gx / b, gy / b, config.grid);
  };

  if (hero.health < config.retreat_health) {
    const Unit& base = state.units[static_cast<std::size_t>(cen.friendly_base())];
    move_toward(base.x, base.y);
    out.true_attention = {0, cen.friendly_base()};
    return out;
  }
  const int eh1 = cen.enemy_hero(0);
  const Unit& duelist = state.units[static_cast<std::size_t>(eh1)];
  if (duelist.alive &&
      std::hypot(duelist.x - hero.x, duelist.y - hero.y) <= config.attack_range) {
    out.label.level1 = static_cast<int>(Level1::attack);
    out.label.target = eh1;
    out.label.intention = intention_cell(duelist.x / b, duelist.y / b, config.grid);
    out.true_attention = {0, eh1};
    return out;
  }
  int u = state.ping_unit;
  if (u < 0 || u >= static_cast<int>(state.units.size()))
    u = scripted_ping(config, state.frame);  // states built without a ping
  const Unit& goal = state.units[static_cast<std::size_t>(u)];
  move_toward(goal.x, goal.y);
  out.true_attention = {0, eh1, u};
  std::sort(out.true_attention.begin(), out.true_attention.end());
  out.true_attention.erase(
      std::unique(out.true_attention.begin(), out.true_attention.end()),
      out.true_attention.end());
  return out;
}

inline Sample make_sample(const ArenaState& state, const ArenaConfig& config) {
  Sample s;
  s.state = extract_features(state);
  ExpertDecision d = expert_action(state, config);
  s.label = d.label;
  s.true_attention = std::move(d.true_attention);
  return s;
}

struct DatasetSplit {
  std::vector<Sample> train;
  std::vector<Sample> val;
};

/// Rolls the expert for n_episodes × horizon frames (per-episode derived
/// seeds), shuffles with the seeded stream, splits 90/10.
inline DatasetSplit generate_dataset(int n_episodes, int horizon,
                                     const ArenaConfig& config, std::uint64_t seed) {
  if (n_episodes < 1 || horizon < 1)
    throw invalid_input_error("generate_dataset: n_episodes and horizon must be >= 1");
  std::vector<Sample> all;
  all.reserve(static_cast<std::size_t>(n_episodes) * static_cast<std::size_t>(horizon));
  for (int e = 0; e < n_episodes; ++e) {
    ArenaState st = new_arena(
        config, detail_arena::mix2(seed, detail_arena::kEpisodeStream +
                                             static_cast<std::uint64_t>(e)));
    for (int f = 0; f < horizon; ++f) {
      Sample s = make_sample(st, config);
      const ActionLabel act = s.label;
      all.push_back(std::move(s));
      step_arena(st, act, config);
    }
  }
  RngStream shuf(seed, detail_arena::kShuffleStream);
  for (std::size_t i = all.size(); i > 1; --i) {
    const std::size_t j = shuf.uniform_below(i);
    std::swap(all[i - 1], all[j]);
  }
  DatasetSplit split;
  const std::size_t n_val = all.size() / 10;
  split.train.assign(all.begin(), all.end() - static_cast<std::ptrdiff_t>(n_val));
  split.val.assign(all.end() - static_cast<std::ptrdiff_t>(n_val), all.end());
  return split;
}

/// Scripted command issuing: per-kind probability per eligible frame, one
/// active command at a time (a cooldown separates windows). Targets come
/// from the initial roster, so the schedule is trajectory-independent.
struct CommandRules {
  // Rates chosen so a default simulation run collects a few hundred
  // commands of every kind.
  double p_attack = 0.02;
  double p_retreat = 0.017;
  double p_assemble = 0.016;
  int max_frames = 60;
  int cooldown = 15;
};

inline std::vector<Command> generate_commands(const ArenaState& initial, int horizon,
                                              const CommandRules& rules,
                                              const ArenaConfig& config,
                                              std::uint64_t seed) {
  if (horizon < 0) throw invalid_input_error("generate_commands: horizon must be >= 0");
  const double p_total = rules.p_attack + rules.p_retreat + rules.p_assemble;
  if (rules.p_attack < 0.0 || rules.p_retreat < 0.0 || rules.p_assemble < 0.0 ||
      p_total > 1.0)
    throw invalid_input_error("generate_commands: invalid probabilities");
  const Census cen = census_of(config);

  std::vector<int> enemies;
  std::vector<int> friendly_heroes;
  for (std::size_t i = 0; i < initial.units.size(); ++i) {
    const Unit& u = initial.units[i];
    if (!u.alive) continue;
    if (u.team == Team::enemy) enemies.push_back(static_cast<int>(i));
    if (u.team == Team::friendly && u.kind == UnitKind::hero && i != 0)
      friendly_heroes.push_back(static_cast<int>(i));
  }

  RngStream g(seed, detail_arena::kCommandStream);
  std::vector<Command> out;
  int next_free = 0;
  for (int f = 0; f < horizon; ++f) {
    if (f < next_free) continue;
    const double u = g.uniform();
    Command cmd;
    cmd.issue_frame = f;
    cmd.max_frames = rules.max_frames;
    if (u <= rules.p_attack) {
      if (enemies.empty()) continue;
      cmd.kind = CommandKind::attack;
      cmd.target_unit = enemies[g.uniform_below(enemies.size())];
    } else if (u <= rules.p_attack + rules.p_retreat) {
      cmd.kind = CommandKind::retreat;
      cmd.target_unit = cen.friendly_base();
    } else if (u <= p_total) {
      if (friendly_heroes.empty()) continue;
      cmd.kind = CommandKind::assemble;
      cmd.target_unit = friendly_heroes[g.uniform_below(friendly_heroes.size())];
    } else {
      continue;
    }
    out.push_back(cmd);
    next_free = f + rules.max_frames + rules.cooldown;
  }
  return out;
}

}  // namespace latalign
