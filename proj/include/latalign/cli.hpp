#pragma once
// Batch entry points behind the CLI: data generation, training, gradient
// checks, command-execution simulation, and report emission. Each cmd_*
// returns an exit code; configuration/data problems surface as the typed
// errors mapped by the binary's main().

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "latalign/arena.hpp"
#include "latalign/checkpoint.hpp"
#include "latalign/config.hpp"
#include "latalign/control.hpp"
#include "latalign/dirichlet.hpp"
#include "latalign/errors.hpp"
#include "latalign/finite_diff.hpp"
#include "latalign/io.hpp"
#include "latalign/model.hpp"
#include "latalign/rng.hpp"
#include "latalign/rsvi.hpp"
#include "latalign/sim.hpp"
#include "latalign/simplex.hpp"
#include "latalign/train.hpp"

namespace latalign {

namespace detail_cli {

constexpr std::uint64_t kTrainStream = 0x5452414EULL;
constexpr std::uint64_t kSimStream = 0x53494D52ULL;
constexpr std::uint64_t kSimArena = 0x53494D41ULL;
constexpr std::uint64_t kSimCmds = 0x53494D43ULL;

inline std::string out_path(const RunConfig& cfg, const std::string& name) {
  return (std::filesystem::path(cfg.out_dir) / name).string();
}

/// Creates the output directory and echoes the effective configuration.
inline void prepare_out(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream os(out_path(cfg, "config.effective"), std::ios::binary);
  if (!os) throw data_error("cannot write to output directory " + cfg.out_dir);
  os << effective_config(cfg);
}

/// Configuration fingerprint for dataset headers. The output directory only
/// says where files land, so it is pinned before hashing.
inline std::uint64_t semantic_config_hash(const RunConfig& cfg) {
  RunConfig c = cfg;
  c.out_dir = "out";
  return fnv1a64(effective_config(c));
}

inline const char* mode_suffix(AlignmentWeights::Mode m) {
  return m == AlignmentWeights::Mode::deterministic ? "det" : "stoch";
}

inline void print_rates(std::ostream& log, const char* name, const RateSet& r) {
  const auto cell = [](const std::optional<double>& v) {
    return v.has_value() ? detail_io::num(*v) : std::string("undefined");
  };
  log << "  " << name << ": received=" << r.received << " gated=" << r.gated
      << " response=" << cell(r.response_rate())
      << " success=" << cell(r.success_rate())
      << " abnormal=" << cell(r.abnormal_rate()) << "\n";
}

}  // namespace detail_cli

// ---------------------------------------------------------------------------
// gen-data

inline int cmd_gen_data(const RunConfig& cfg, std::ostream& log) {
  detail_cli::prepare_out(cfg);
  const DatasetSplit ds =
      generate_dataset(cfg.data_episodes, cfg.data_horizon, cfg.arena, cfg.seed);
  const std::uint64_t hash = detail_cli::semantic_config_hash(cfg);
  save_samples(detail_cli::out_path(cfg, "train.jsonl"), ds.train, hash, cfg.seed);
  save_samples(detail_cli::out_path(cfg, "val.jsonl"), ds.val, hash, cfg.seed);
  log << "gen-data: episodes=" << cfg.data_episodes << " horizon=" << cfg.data_horizon
      << " train=" << ds.train.size() << " val=" << ds.val.size() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

inline int cmd_train(const RunConfig& cfg, TrainMode mode,
                     const std::string& prior_checkpoint, std::ostream& log) {
  if (mode == TrainMode::stochastic && prior_checkpoint.empty()) {
    log << "train: stochastic mode requires --prior-checkpoint "
           "(the trained deterministic model)\n";
    return kExitUsage;
  }
  detail_cli::prepare_out(cfg);
  const LoadedDataset tr = load_samples(detail_cli::out_path(cfg, "train.jsonl"));
  const LoadedDataset va = load_samples(detail_cli::out_path(cfg, "val.jsonl"));

  // Stochastic refinement both uses the deterministic checkpoint as the
  // frozen prior and warm-starts from its weights.
  PriorProvider prior;
  ParameterStore prior_params;
  if (mode == TrainMode::stochastic) {
    prior_params = checkpoint_load(prior_checkpoint);
    // α⁰ and α must share one concentration scale: evaluate the prior under
    // the current run's hyper, not whatever the checkpoint was saved with.
    prior_params.hyper = cfg.hyper;
    prior = make_encoder_prior(prior_params);
  }

  const char* sfx = mode == TrainMode::deterministic ? "det" : "stoch";
  RngStream rng(cfg.seed, detail_cli::kTrainStream +
                              (mode == TrainMode::stochastic ? 1 : 0));
  TrainReport report;
  const ParameterStore params =
      train(tr.samples, va.samples, cfg.hyper, cfg.train, mode,
            prior ? &prior : nullptr, rng, &report,
            prior ? &prior_params : nullptr);

  checkpoint_save(params, detail_cli::out_path(cfg, std::string("model_") + sfx + ".ckpt"));
  save_epoch_log(detail_cli::out_path(cfg, std::string("epochs_") + sfx + ".jsonl"),
                 report);
  const EpochStats& last = report.epochs.back();
  log << "train[" << sfx << "]: epochs=" << report.epochs.size()
      << " final_loss=" << last.train_loss
      << " val_level1_acc=" << last.val_level1_acc
      << " val_move_acc=" << last.val_move_acc
      << " val_intent_acc=" << last.val_intent_acc;
  if (mode == TrainMode::stochastic) log << " kl_mean=" << last.kl_mean;
  log << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradCheckResult {
  std::string name;
  bool pass = false;
  double measured = 0.0;
  double tol = 0.0;
};

namespace detail_cli {

/// Brute-force sparsemax via support enumeration (KKT feasibility).
inline std::vector<double> sparsemax_enum(const std::vector<double>& v) {
  const int n = static_cast<int>(v.size());
  for (int mask = 1; mask < (1 << n); ++mask) {
    double sum = 0.0;
    int k = 0;
    for (int i = 0; i < n; ++i)
      if (mask & (1 << i)) {
        sum += v[static_cast<std::size_t>(i)];
        ++k;
      }
    const double tau = (sum - 1.0) / k;
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      const double vi = v[static_cast<std::size_t>(i)];
      if (mask & (1 << i)) ok = vi - tau > 0.0;
      else ok = vi - tau <= 0.0;
    }
    if (ok) {
      std::vector<double> z(static_cast<std::size_t>(n), 0.0);
      for (int i = 0; i < n; ++i)
        if (mask & (1 << i)) z[static_cast<std::size_t>(i)] = v[static_cast<std::size_t>(i)] - tau;
      return z;
    }
  }
  throw evaluation_error("sparsemax_enum: no feasible support");
}

/// Distance of the score vector from its support-changing boundary.
inline double support_margin(const std::vector<double>& t) {
  const SimplexVector z = sparsemax(t);
  if (z.support.empty()) return 0.0;
  const int s0 = z.support.front();
  const double tau =
      t[static_cast<std::size_t>(s0)] - z.values[static_cast<std::size_t>(s0)];
  double margin = std::numeric_limits<double>::infinity();
  std::vector<bool> in(t.size(), false);
  for (int i : z.support) {
    in[static_cast<std::size_t>(i)] = true;
    margin = std::min(margin, z.values[static_cast<std::size_t>(i)]);
  }
  for (std::size_t i = 0; i < t.size(); ++i)
    if (!in[i]) margin = std::min(margin, tau - t[i]);
  return margin;
}

inline UnitFeatureSet random_state(int n, int d_in, RngStream& g) {
  UnitFeatureSet fs;
  fs.raw = Matrix(n, d_in);
  for (double& v : fs.raw.data) v = g.uniform();
  fs.global_info = {g.uniform(), g.uniform()};
  return fs;
}

/// Random small model whose attention sits away from support boundaries
/// (finite differences would otherwise cross a kink).
struct GradCheckFixture {
  Hyper hyper;
  ParameterStore params;
  UnitFeatureSet state;
  ActionLabel label;
};

inline GradCheckFixture screened_fixture(std::uint64_t seed_start, int n,
                                         double min_margin) {
  for (std::uint64_t seed = seed_start;; ++seed) {
    Hyper h;
    h.d_in = 6;
    h.d_embed = 3;
    h.h_embed = 5;
    h.h1 = 6;
    h.h2 = 5;
    h.grid = 2;
    h.n_avg = 2;
    h.c_conc = 1.0;
    h.kl_weight = 0.3;
    RngStream g(seed, 0);
    ParameterStore params = make_model_params(h);
    init_model_params(params, g, 0.6);
    UnitFeatureSet fs = random_state(n, h.d_in, g);
    const EmbedCache emb = embed_units(fs, params);
    if (support_margin(attention_scores(emb.X)) < min_margin) continue;
    GradCheckFixture fx;
    fx.hyper = h;
    fx.params = std::move(params);
    fx.state = std::move(fs);
    fx.label.level1 = static_cast<int>(Level1::attack);
    fx.label.target = n - 1;
    fx.label.intention = 1;
    return fx;
  }
}

}  // namespace detail_cli

/// Fast re-derivations of the module oracles, one named check each.
/// inject_bug perturbs the sparsemax Jacobian check (harness self-test).
inline std::vector<GradCheckResult> run_gradcheck(std::uint64_t seed,
                                                  bool inject_bug = false) {
  using namespace detail_cli;
  std::vector<GradCheckResult> results;
  const auto record = [&](const std::string& name, double measured, double tol) {
    results.push_back({name, measured <= tol, measured, tol});
  };

  {  // sparsemax vs support enumeration
    RngStream g(seed, 11);
    double worst = 0.0;
    for (int trial = 0; trial < 2000; ++trial) {
      const int n = 2 + static_cast<int>(g.uniform_below(5));
      std::vector<double> v(static_cast<std::size_t>(n));
      for (double& x : v) x = 6.0 * g.uniform() - 3.0;
      const SimplexVector z = sparsemax(v);
      const std::vector<double> oracle = sparsemax_enum(v);
      for (int i = 0; i < n; ++i)
        worst = std::max(worst, std::fabs(z.values[static_cast<std::size_t>(i)] -
                                          oracle[static_cast<std::size_t>(i)]));
    }
    record("sparsemax.projection", worst, 1e-9);
  }

  {  // sparsemax Jacobian vs central differences
    RngStream g(seed, 12);
    double worst = 0.0;
    int done = 0;
    while (done < 50) {
      std::vector<double> v(5);
      for (double& x : v) x = 2.0 * g.uniform() - 1.0;
      if (support_margin(v) < 1e-3) continue;
      std::vector<double> u(5);
      for (double& x : u) x = 2.0 * g.uniform() - 1.0;
      std::vector<double> analytic = sparsemax_backward(v, u);
      if (inject_bug)
        for (double& x : analytic) x += 1e-3;  // deliberate harness probe
      const double h = 1e-6;
      for (std::size_t j = 0; j < v.size(); ++j) {
        std::vector<double> vp = v, vm = v;
        vp[j] += h;
        vm[j] -= h;
        const SimplexVector zp = sparsemax(vp);
        const SimplexVector zm = sparsemax(vm);
        double fd = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i)
          fd += u[i] * (zp.values[i] - zm.values[i]) / (2.0 * h);
        worst = std::max(worst, std::fabs(analytic[j] - fd));
      }
      ++done;
    }
    record("sparsemax.jacobian", worst, 1e-5);
  }

  {  // gamma sampler moments
    RngStream rng(seed, 13);
    double worst = 0.0;
    for (const double alpha : {0.5, 2.0}) {
      const int n = 20000;
      double s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;
      for (int i = 0; i < n; ++i) {
        const double x = gamma_sample(alpha, 4, rng).value;
        s1 += x;
        s2 += x * x;
        s3 += x * x * x;
        s4 += x * x * x * x;
      }
      const double m = s1 / n;
      const double m2 = s2 / n, m3 = s3 / n, m4 = s4 / n;
      const double var = m2 - m * m;
      const double se_mean = std::sqrt(var / n);
      // fourth central moment for the variance's standard error
      const double mu4 = m4 - 4 * m3 * m + 6 * m2 * m * m - 3 * m * m * m * m;
      const double se_var = std::sqrt(std::max(mu4 - var * var, 0.0) / n);
      worst = std::max(worst, std::fabs(m - alpha) / se_mean);
      worst = std::max(worst, std::fabs(var - alpha) / se_var);
    }
    record("gamma.moments", worst, 4.0);
  }

  {  // dirichlet mean
    RngStream rng(seed, 14);
    const DirichletParams dp = make_dirichlet_params({1.2, 0.7, 2.1}, 1e-6);
    const int n = 20000;
    std::vector<double> s1(3, 0.0), s2(3, 0.0);
    for (int i = 0; i < n; ++i) {
      const DirichletSampleResult one = dirichlet_sample(dp, 4, 1, rng);
      for (int c = 0; c < 3; ++c) {
        const double z = one.samples[0].z.values[static_cast<std::size_t>(c)];
        s1[static_cast<std::size_t>(c)] += z;
        s2[static_cast<std::size_t>(c)] += z * z;
      }
    }
    double worst = 0.0;
    const double a0 = 1.2 + 0.7 + 2.1;
    const double expect[3] = {1.2 / a0, 0.7 / a0, 2.1 / a0};
    for (int c = 0; c < 3; ++c) {
      const double m = s1[static_cast<std::size_t>(c)] / n;
      const double var = s2[static_cast<std::size_t>(c)] / n - m * m;
      worst = std::max(worst, std::fabs(m - expect[c]) / std::sqrt(var / n));
    }
    record("dirichlet.mean", worst, 4.0);
  }

  {  // analytic KL vs Monte Carlo
    RngStream g(seed, 15);
    RngStream rng(seed, 16);
    double worst = 0.0;
    for (const int dim : {2, 3, 4}) {
      std::vector<double> qa(static_cast<std::size_t>(dim)), pa(static_cast<std::size_t>(dim));
      for (double& x : qa) x = 0.3 + 2.7 * g.uniform();
      for (double& x : pa) x = 0.3 + 2.7 * g.uniform();
      const DirichletParams q = make_dirichlet_params(std::move(qa), 1e-6);
      const DirichletParams p = make_dirichlet_params(std::move(pa), 1e-6);
      const double analytic = dirichlet_kl(q, p).value;
      const int n = 30000;
      double s1 = 0.0, s2 = 0.0;
      for (int i = 0; i < n; ++i) {
        const DirichletSampleResult one = dirichlet_sample(q, 4, 1, rng);
        const double d =
            dirichlet_log_pdf(one.samples[0].z, q) - dirichlet_log_pdf(one.samples[0].z, p);
        s1 += d;
        s2 += d * d;
      }
      const double m = s1 / n;
      const double se = std::sqrt((s2 / n - m * m) / n);
      worst = std::max(worst, std::fabs(m - analytic) / se);
    }
    record("dirichlet.kl", worst, 4.0);
  }

  {  // RSVI gradient on a linear functional
    RngStream rng(seed, 17);
    const std::vector<double> alpha = {1.1, 0.6, 1.8};
    const DirichletParams dp = make_dirichlet_params(alpha, 1e-6);
    const std::vector<double> w = {1.0, 2.0, 3.0};
    const auto f = [&w](const std::vector<double>& z) {
      double s = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) s += w[i] * z[i];
      return s;
    };
    const auto grad_f = [&w](const std::vector<double>& z) {
      (void)z;
      return w;
    };
    const RsviGradient rg = rsvi_gradient(dp, 4, f, grad_f, 30000, rng);
    // d/dα_i of Σ_j w_j α_j / A = (w_i − ⟨w, α⟩/A) / A
    const double a0 = alpha[0] + alpha[1] + alpha[2];
    double wa = 0.0;
    for (std::size_t i = 0; i < 3; ++i) wa += w[i] * alpha[i];
    double worst = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      const double expect = (w[i] - wa / a0) / a0;
      const double est = rg.g_rep[i] + rg.g_cor[i];
      worst = std::max(worst, std::fabs(est - expect) / rg.std_err[i]);
    }
    record("rsvi.linear", worst, 4.0);
  }

  {  // deterministic model backward vs finite differences over all params
    double worst = 0.0;
    for (int cfg_i = 0; cfg_i < 3; ++cfg_i) {
      GradCheckFixture fx = screened_fixture(seed * 97 + 7000 + 100 * static_cast<std::uint64_t>(cfg_i),
                                             3 + cfg_i % 2, 1e-3);
      ParameterStore grads = zeros_like(fx.params);
      backward_deterministic(fx.state, fx.params,
                             forward_deterministic(fx.state, fx.params), fx.label, 1.0,
                             grads);
      const double h = 1e-5;
      for (auto& [name, m] : fx.params.tensors) {
        for (std::size_t i = 0; i < m.data.size(); ++i) {
          const double saved = m.data[i];
          m.data[i] = saved + h;
          const double up = policy_loss(
              forward_deterministic(fx.state, fx.params).pred.dist, fx.label,
              fx.hyper.lambda_int);
          m.data[i] = saved - h;
          const double dn = policy_loss(
              forward_deterministic(fx.state, fx.params).pred.dist, fx.label,
              fx.hyper.lambda_int);
          m.data[i] = saved;
          const double fd = (up - dn) / (2.0 * h);
          const double err = std::fabs(grads.at(name).data[i] - fd) / (1.0 + std::fabs(fd));
          worst = std::max(worst, err);
        }
      }
    }
    record("model.backward", worst, 1e-4);
  }

  {  // stochastic ELBO: predictor-path gradients under common random numbers
    GradCheckFixture fx = screened_fixture(seed * 131 + 9000, 3, 5e-3);
    const std::vector<double> prior = {0.5, 0.3, 0.2};
    const auto loss_at = [&](const ParameterStore& p) {
      RngStream rng(seed, 991);  // re-seeded: same draws each evaluation
      ParameterStore sink = zeros_like(p);
      return elbo_loss(fx.state, fx.label, p, prior, rng, 0.0, sink).loss;
    };
    ParameterStore grads = zeros_like(fx.params);
    {
      RngStream rng(seed, 991);
      elbo_loss(fx.state, fx.label, fx.params, prior, rng, 1.0, grads);
    }
    double worst = 0.0;
    const double h = 1e-5;
    ParameterStore probe = fx.params;
    for (auto& [name, m] : probe.tensors) {
      if (name.rfind("embed.", 0) == 0) continue;  // φ-path is Monte Carlo
      for (std::size_t i = 0; i < m.data.size(); ++i) {
        const double saved = m.data[i];
        m.data[i] = saved + h;
        const double up = loss_at(probe);
        m.data[i] = saved - h;
        const double dn = loss_at(probe);
        m.data[i] = saved;
        const double fd = (up - dn) / (2.0 * h);
        const double err = std::fabs(grads.at(name).data[i] - fd) / (1.0 + std::fabs(fd));
        worst = std::max(worst, err);
      }
    }
    record("elbo.predictor_path", worst, 1e-4);
  }

  return results;
}

inline int cmd_gradcheck(const RunConfig& cfg, bool inject_bug, std::ostream& log) {
  const std::vector<GradCheckResult> results = run_gradcheck(cfg.seed, inject_bug);
  bool all_pass = true;
  for (const GradCheckResult& r : results) {
    log << (r.pass ? "PASS" : "FAIL") << ' ' << r.name << " measured=" << r.measured
        << " tol=" << r.tol << "\n";
    all_pass = all_pass && r.pass;
  }
  log << "gradcheck: " << (all_pass ? "all checks passed" : "CHECK FAILURES") << "\n";
  return all_pass ? kExitOk : kExitCheckFailure;
}

// ---------------------------------------------------------------------------
// simulate

inline int cmd_simulate(const RunConfig& cfg, const std::string& checkpoint_path,
                        AlignmentWeights::Mode mode, bool gate_enabled,
                        std::ostream& log) {
  if (checkpoint_path.empty()) {
    log << "simulate: a model checkpoint is required\n";
    return kExitUsage;
  }
  detail_cli::prepare_out(cfg);
  ModelAgent agent(checkpoint_load(checkpoint_path), mode);
  ControlConfig ccfg = cfg.control;
  ccfg.gate = gate_enabled;

  std::vector<CommandTrace> traces;
  for (int e = 0; e < cfg.sim_episodes; ++e) {
    const std::uint64_t eu = static_cast<std::uint64_t>(e);
    const ArenaState arena =
        new_arena(cfg.arena, detail_arena::mix2(cfg.seed, detail_cli::kSimArena + eu));
    const std::vector<Command> cmds =
        generate_commands(arena, cfg.sim_horizon, cfg.commands, cfg.arena,
                          detail_arena::mix2(cfg.seed, detail_cli::kSimCmds + eu));
    RngStream rng(cfg.seed, detail_cli::kSimStream + eu);
    RolloutResult r = rollout(agent, arena, cmds, cfg.sim_horizon, cfg.arena, ccfg, rng);
    for (CommandTrace& t : r.traces) traces.push_back(std::move(t));
  }

  const char* sfx = detail_cli::mode_suffix(mode);
  save_traces(detail_cli::out_path(cfg, std::string("traces_") + sfx + ".jsonl"), traces);
  CommandMetrics metrics;
  if (!traces.empty()) metrics = command_metrics(traces);
  save_metrics_csv(detail_cli::out_path(cfg, std::string("metrics_") + sfx + ".csv"),
                   metrics);
  log << "simulate[" << sfx << "]: episodes=" << cfg.sim_episodes
      << " commands=" << traces.size() << (gate_enabled ? "" : " (gate disabled)")
      << "\n";
  detail_cli::print_rates(log, "overall", metrics.overall);
  detail_cli::print_rates(log, "attack", metrics.attack);
  detail_cli::print_rates(log, "retreat", metrics.retreat);
  detail_cli::print_rates(log, "assemble", metrics.assemble);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// report

inline int cmd_report(const RunConfig& cfg, const std::vector<std::string>& trace_files,
                      std::ostream& log) {
  if (trace_files.empty()) {
    log << "report: at least one trace file is required\n";
    return kExitUsage;
  }
  detail_cli::prepare_out(cfg);
  std::vector<CommandTrace> all;
  for (const std::string& path : trace_files) {
    const std::vector<CommandTrace> traces = load_traces(path);
    log << path << ": " << traces.size() << " traces\n";
    if (traces.empty()) {
      log << "  (no commands)\n";
    } else {
      const CommandMetrics m = command_metrics(traces);
      detail_cli::print_rates(log, "overall", m.overall);
      detail_cli::print_rates(log, "attack", m.attack);
      detail_cli::print_rates(log, "retreat", m.retreat);
      detail_cli::print_rates(log, "assemble", m.assemble);
    }
    for (const CommandTrace& t : traces) all.push_back(t);
  }
  CommandMetrics aggregate;
  if (!all.empty()) aggregate = command_metrics(all);
  log << "aggregate over " << trace_files.size() << " file(s):\n";
  detail_cli::print_rates(log, "overall", aggregate.overall);
  detail_cli::print_rates(log, "attack", aggregate.attack);
  detail_cli::print_rates(log, "retreat", aggregate.retreat);
  detail_cli::print_rates(log, "assemble", aggregate.assemble);
  save_metrics_csv(detail_cli::out_path(cfg, "report.csv"), aggregate);
  return kExitOk;
}

}  // namespace latalign
