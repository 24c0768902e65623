// latalign command-line front end. Thin: flags plus exit-code mapping, all
// behavior lives in the library's cmd_* entry points.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "latalign/cli.hpp"
#include "latalign/config.hpp"
#include "latalign/errors.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

void add_common(CLI::App* sub, CommonFlags* fl) {
  sub->add_option("--config", fl->config_path, "run configuration file");
  sub->add_option("--seed", fl->seed, "override the config seed");
  sub->add_option("--out", fl->out_dir, "override the output directory");
}

latalign::RunConfig resolve(const CommonFlags& fl) {
  latalign::RunConfig cfg;
  if (!fl.config_path.empty()) cfg = latalign::load_config(fl.config_path);
  if (fl.seed) cfg.seed = *fl.seed;
  if (fl.out_dir) cfg.out_dir = *fl.out_dir;
  latalign::finalize_config(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deep latent alignment: toy arena, training, and control"};
  app.require_subcommand(1);

  CommonFlags gen_fl, train_fl, grad_fl, sim_fl, rep_fl;
  std::string mode_str = "det";
  std::string prior_checkpoint;
  std::string sim_checkpoint;
  std::string sim_mode_str = "det";
  bool no_gate = false;
  bool inject_bug = false;
  std::vector<std::string> trace_files;

  CLI::App* gen = app.add_subcommand("gen-data", "generate the imitation dataset");
  add_common(gen, &gen_fl);

  CLI::App* trn = app.add_subcommand("train", "train the policy by imitation");
  add_common(trn, &train_fl);
  trn->add_option("--mode", mode_str, "det|stoch")
      ->check(CLI::IsMember({"det", "stoch"}));
  trn->add_option("--prior-checkpoint", prior_checkpoint,
                  "deterministic checkpoint supplying the encoder prior");

  CLI::App* grd = app.add_subcommand("gradcheck", "verify gradients and samplers");
  add_common(grd, &grad_fl);
  grd->add_flag("--inject-bug", inject_bug,
                "perturb one analytic gradient (harness self-test)");

  CLI::App* sim = app.add_subcommand("simulate", "roll out commanded episodes");
  add_common(sim, &sim_fl);
  sim->add_option("--checkpoint", sim_checkpoint, "trained model checkpoint")
      ->required();
  sim->add_option("--mode", sim_mode_str, "det|stoch")
      ->check(CLI::IsMember({"det", "stoch"}));
  sim->add_flag("--no-gate", no_gate, "execute every command without gating");

  CLI::App* rep = app.add_subcommand("report", "summarize command traces");
  add_common(rep, &rep_fl);
  rep->add_option("traces", trace_files, "trace files (JSONL)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? latalign::kExitOk : latalign::kExitUsage;
  }

  try {
    if (gen->parsed()) return latalign::cmd_gen_data(resolve(gen_fl), std::cout);
    if (trn->parsed()) {
      const auto mode = mode_str == "det" ? latalign::TrainMode::deterministic
                                          : latalign::TrainMode::stochastic;
      return latalign::cmd_train(resolve(train_fl), mode, prior_checkpoint, std::cout);
    }
    if (grd->parsed())
      return latalign::cmd_gradcheck(resolve(grad_fl), inject_bug, std::cout);
    if (sim->parsed()) {
      const auto mode = sim_mode_str == "det"
                            ? latalign::AlignmentWeights::Mode::deterministic
                            : latalign::AlignmentWeights::Mode::stochastic;
      return latalign::cmd_simulate(resolve(sim_fl), sim_checkpoint, mode, !no_gate,
                                    std::cout);
    }
    if (rep->parsed()) return latalign::cmd_report(resolve(rep_fl), trace_files, std::cout);
  } catch (const latalign::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return latalign::kExitConfig;
  } catch (const latalign::data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return latalign::kExitData;
  } catch (const latalign::checkpoint_error& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return latalign::kExitData;
  } catch (const latalign::invalid_input_error& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return latalign::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return latalign::kExitInternal;
  }
  return latalign::kExitUsage;
}
