#pragma once
// Run configuration: line-oriented `section.key = value` files validated
// against a fixed schema. Unknown keys are errors; the effective config
// (defaults resolved) can be echoed back in canonical form.

#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "latalign/arena.hpp"
#include "latalign/control.hpp"
#include "latalign/errors.hpp"
#include "latalign/tensor.hpp"
#include "latalign/train.hpp"

namespace latalign {

/// Run-level hyper defaults. The bare Hyper keeps the paper-literal
/// α = sparsemax(t) scale (c_conc 1) and the permissive module floor; runs
/// train with c_conc = 25 and a 1e-3 floor instead. The raised floor keeps
/// digamma terms at union-lifted coordinates bounded (ψ(2e-6) ≈ -5e5 would
/// dominate every clipped batch), and the larger scale keeps small attention
/// coordinates above that floor, so the stochastic posterior retains
/// multi-coordinate support and genuine draw noise at control time.
inline Hyper default_run_hyper() {
  Hyper h;
  h.c_conc = 25.0;
  h.alpha_floor = 1e-3;
  return h;
}

struct RunConfig {
  ArenaConfig arena;
  Hyper hyper = default_run_hyper();  // d_in and g_dim are pinned by the arena
  TrainConfig train;
  ControlConfig control;
  CommandRules commands;
  int data_episodes = 30;   // x data_horizon = 30k states, a 90/10 split
  int data_horizon = 1000;  // one full scripted-ping cycle per episode
  int sim_episodes = 100;
  int sim_horizon = 900;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
};

namespace detail_cfg {

inline int parse_int(const std::string& v) {
  std::size_t used = 0;
  int r = 0;
  try {
    r = std::stoi(v, &used);
  } catch (const std::exception&) {
    throw config_error("not an integer: '" + v + "'");
  }
  if (used != v.size()) throw config_error("not an integer: '" + v + "'");
  return r;
}

inline std::uint64_t parse_u64(const std::string& v) {
  std::size_t used = 0;
  unsigned long long r = 0;
  try {
    r = std::stoull(v, &used);
  } catch (const std::exception&) {
    throw config_error("not an unsigned integer: '" + v + "'");
  }
  if (used != v.size()) throw config_error("not an unsigned integer: '" + v + "'");
  return r;
}

inline double parse_double(const std::string& v) {
  std::size_t used = 0;
  double r = 0.0;
  try {
    r = std::stod(v, &used);
  } catch (const std::exception&) {
    throw config_error("not a number: '" + v + "'");
  }
  if (used != v.size()) throw config_error("not a number: '" + v + "'");
  return r;
}

inline std::string format_double(double v) { return nlohmann::json(v).dump(); }

struct Key {
  const char* name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline const std::vector<Key>& schema() {
  static const std::vector<Key> keys = [] {
    std::vector<Key> k;
    const auto add_int = [&k](const char* name, int RunConfig::*field) {
      k.push_back({name,
                   [field](RunConfig& c, const std::string& v) { c.*field = parse_int(v); },
                   [field](const RunConfig& c) { return std::to_string(c.*field); }});
    };
    const auto add = [&k](const char* name, auto setter, auto getter) {
      k.push_back({name, setter, getter});
    };
    // convenience wrappers over nested blocks
    #define LATALIGN_INT_KEY(NAME, EXPR)                                              \
      add(NAME, [](RunConfig& c, const std::string& v) { EXPR = parse_int(v); },      \
          [](const RunConfig& c) { return std::to_string(EXPR); })
    #define LATALIGN_DBL_KEY(NAME, EXPR)                                              \
      add(NAME, [](RunConfig& c, const std::string& v) { EXPR = parse_double(v); },   \
          [](const RunConfig& c) { return format_double(EXPR); })

    add("seed",
        [](RunConfig& c, const std::string& v) { c.seed = parse_u64(v); },
        [](const RunConfig& c) { return std::to_string(c.seed); });
    add("out",
        [](RunConfig& c, const std::string& v) { c.out_dir = v; },
        [](const RunConfig& c) { return c.out_dir; });
    add_int("data.episodes", &RunConfig::data_episodes);
    add_int("data.horizon", &RunConfig::data_horizon);
    add_int("sim.episodes", &RunConfig::sim_episodes);
    add_int("sim.horizon", &RunConfig::sim_horizon);
    LATALIGN_INT_KEY("arena.heroes_per_side", c.arena.heroes_per_side);
    LATALIGN_INT_KEY("arena.soldiers_per_side", c.arena.soldiers_per_side);
    LATALIGN_INT_KEY("arena.towers_per_side", c.arena.towers_per_side);
    LATALIGN_INT_KEY("arena.monsters", c.arena.monsters);
    LATALIGN_DBL_KEY("arena.bounds", c.arena.bounds);
    LATALIGN_DBL_KEY("arena.speed", c.arena.speed);
    LATALIGN_DBL_KEY("arena.attack_range", c.arena.attack_range);
    LATALIGN_DBL_KEY("arena.attack_damage", c.arena.attack_damage);
    LATALIGN_DBL_KEY("arena.retreat_health", c.arena.retreat_health);
    LATALIGN_DBL_KEY("arena.stop_distance", c.arena.stop_distance);
    LATALIGN_INT_KEY("arena.roam_block", c.arena.roam_block);
    LATALIGN_INT_KEY("model.d_embed", c.hyper.d_embed);
    LATALIGN_INT_KEY("model.h_embed", c.hyper.h_embed);
    LATALIGN_INT_KEY("model.h1", c.hyper.h1);
    LATALIGN_INT_KEY("model.h2", c.hyper.h2);
    LATALIGN_INT_KEY("model.grid", c.hyper.grid);
    LATALIGN_INT_KEY("model.n_avg", c.hyper.n_avg);
    LATALIGN_INT_KEY("model.B", c.hyper.B);
    LATALIGN_DBL_KEY("model.c_conc", c.hyper.c_conc);
    LATALIGN_DBL_KEY("model.kl_weight", c.hyper.kl_weight);
    LATALIGN_DBL_KEY("model.alpha_floor", c.hyper.alpha_floor);
    LATALIGN_DBL_KEY("model.lambda_int", c.hyper.lambda_int);
    LATALIGN_INT_KEY("train.epochs", c.train.epochs);
    LATALIGN_INT_KEY("train.batch_size", c.train.batch_size);
    LATALIGN_DBL_KEY("train.lr", c.train.lr);
    LATALIGN_DBL_KEY("train.lr_decay", c.train.lr_decay);
    LATALIGN_DBL_KEY("train.momentum", c.train.momentum);
    LATALIGN_DBL_KEY("train.init_scale", c.train.init_scale);
    LATALIGN_DBL_KEY("train.clip_norm", c.train.clip_norm);
    LATALIGN_DBL_KEY("control.radius_frac", c.control.radius_frac);
    LATALIGN_DBL_KEY("control.d_success", c.control.d_success);
    LATALIGN_DBL_KEY("control.p_min", c.control.p_min);
    LATALIGN_INT_KEY("control.k_intent", c.control.k_intent);
    LATALIGN_DBL_KEY("commands.p_attack", c.commands.p_attack);
    LATALIGN_DBL_KEY("commands.p_retreat", c.commands.p_retreat);
    LATALIGN_DBL_KEY("commands.p_assemble", c.commands.p_assemble);
    LATALIGN_INT_KEY("commands.max_frames", c.commands.max_frames);
    LATALIGN_INT_KEY("commands.cooldown", c.commands.cooldown);
    #undef LATALIGN_INT_KEY
    #undef LATALIGN_DBL_KEY
    return k;
  }();
  return keys;
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail_cfg

inline void set_config_key(RunConfig& cfg, const std::string& key,
                           const std::string& value) {
  for (const detail_cfg::Key& k : detail_cfg::schema()) {
    if (key == k.name) {
      try {
        k.set(cfg, value);
      } catch (const config_error& e) {
        throw config_error("config key '" + key + "': " + e.what());
      }
      return;
    }
  }
  throw config_error("unknown config key: '" + key + "'");
}

/// Derived fields and cross-field checks; call after the last override.
inline void finalize_config(RunConfig& cfg) {
  cfg.hyper.d_in = 13;  // the arena feature layout
  cfg.hyper.g_dim = 2;
  cfg.arena.grid = cfg.hyper.grid;
  if (cfg.hyper.grid < 1) throw config_error("model.grid must be >= 1");
  if (cfg.control.k_intent < 1 || cfg.control.k_intent > cfg.hyper.grid * cfg.hyper.grid)
    throw config_error("control.k_intent must lie in [1, grid^2]");
  if (cfg.train.epochs < 1 || cfg.train.batch_size < 1)
    throw config_error("train.epochs and train.batch_size must be >= 1");
  if (cfg.data_episodes < 1 || cfg.data_horizon < 1)
    throw config_error("data.episodes and data.horizon must be >= 1");
  if (cfg.sim_episodes < 1 || cfg.sim_horizon < 1)
    throw config_error("sim.episodes and sim.horizon must be >= 1");
  if (cfg.hyper.n_avg < 1 || cfg.hyper.B < 0)
    throw config_error("model.n_avg must be >= 1 and model.B >= 0");
  const double p =
      cfg.commands.p_attack + cfg.commands.p_retreat + cfg.commands.p_assemble;
  if (cfg.commands.p_attack < 0 || cfg.commands.p_retreat < 0 ||
      cfg.commands.p_assemble < 0 || p > 1.0)
    throw config_error("commands.* probabilities must be >= 0 and sum to <= 1");
}

/// Parses `key = value` lines; '#' starts a comment; blank lines ignored.
inline RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = detail_cfg::trim(line);
    if (t.empty()) continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw config_error("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail_cfg::trim(t.substr(0, eq));
    const std::string value = detail_cfg::trim(t.substr(eq + 1));
    if (key.empty()) throw config_error("line " + std::to_string(line_no) + ": empty key");
    set_config_key(cfg, key, value);
  }
  finalize_config(cfg);
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw config_error("cannot open config file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  try {
    return parse_config_text(buf.str());
  } catch (const config_error& e) {
    throw config_error(path + ": " + e.what());
  }
}

/// Canonical echo of every key at its effective value, schema order.
inline std::string effective_config(const RunConfig& cfg) {
  std::ostringstream os;
  for (const detail_cfg::Key& k : detail_cfg::schema())
    os << k.name << " = " << k.get(cfg) << '\n';
  return os.str();
}

}  // namespace latalign
