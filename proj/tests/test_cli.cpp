// Configuration, file formats, and batch entry points: key/value parsing
// with the canonical echo, JSONL dataset/trace round trips, the metrics
// CSV, gradient-check harness self-tests, and end-to-end subcommand runs
// with byte-level reproducibility.

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "latalign/cli.hpp"

using namespace latalign;
namespace fs = std::filesystem;

namespace {

/// Fresh scratch directory under the test working directory.
fs::path scratch(const std::string& name) {
  const fs::path p = fs::path("cli_scratch") / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  os << text;
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

long count_lines(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  long n = 0;
  std::string line;
  while (std::getline(is, line)) ++n;
  return n;
}

/// A config small enough for subcommand tests to finish in seconds.
RunConfig tiny_config(const fs::path& out) {
  RunConfig cfg;
  cfg.seed = 11;
  cfg.out_dir = out.string();
  cfg.data_episodes = 1;
  cfg.data_horizon = 40;
  cfg.sim_episodes = 1;
  cfg.sim_horizon = 150;
  cfg.hyper.d_embed = 6;
  cfg.hyper.h_embed = 10;
  cfg.hyper.h1 = 12;
  cfg.hyper.h2 = 12;
  cfg.hyper.n_avg = 2;
  cfg.hyper.B = 2;
  cfg.train.epochs = 2;
  cfg.train.batch_size = 16;
  cfg.commands.p_attack = 0.05;
  cfg.commands.p_retreat = 0.02;
  cfg.commands.p_assemble = 0.02;
  finalize_config(cfg);
  return cfg;
}

CommandTrace make_trace(CommandKind kind, Outcome outcome, bool gated, int frames) {
  CommandTrace t;
  t.command.kind = kind;
  t.command.target_unit = 3;
  t.command.issue_frame = 17;
  t.command.max_frames = 60;
  t.gated = gated;
  t.outcome = outcome;
  for (int i = 0; i < frames; ++i) {
    TraceFrame f;
    f.x = 1.0 + 0.25 * i;
    f.y = 2.0 - 0.125 * i;
    f.distance = 5.0 - i;
    f.action.level1 = 1;
    f.action.move_dir = i % 8;
    f.action.intention = 7;
    t.frames.push_back(f);
  }
  return t;
}

}  // namespace

TEST_CASE("config: defaults and derived fields") {
  RunConfig cfg;
  finalize_config(cfg);
  CHECK(cfg.seed == 1);
  CHECK(cfg.hyper.d_in == 13);
  CHECK(cfg.hyper.g_dim == 2);
  CHECK(cfg.arena.grid == cfg.hyper.grid);
  CHECK(cfg.out_dir == "out");
}

TEST_CASE("config: text parsing, comments, and overrides") {
  const std::string text =
      "# run setup\n"
      "seed = 99\n"
      "out = runs/a\n"
      "\n"
      "arena.bounds = 24.5   # wider map\n"
      "model.grid = 4\n"
      "control.k_intent = 16\n"
      "train.lr = 0.125\n";
  const RunConfig cfg = parse_config_text(text);
  CHECK(cfg.seed == 99);
  CHECK(cfg.out_dir == "runs/a");
  CHECK(cfg.arena.bounds == 24.5);
  CHECK(cfg.hyper.grid == 4);
  CHECK(cfg.arena.grid == 4);
  CHECK(cfg.control.k_intent == 16);
  CHECK(cfg.train.lr == 0.125);
}

TEST_CASE("config: malformed input is rejected with the offending line") {
  CHECK_THROWS_MATCHES(parse_config_text("seed = 5\nnope.key = 1\n"), config_error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("unknown config key")));
  CHECK_THROWS_MATCHES(
      parse_config_text("train.epochs = banana\n"), config_error,
      Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("train.epochs")));
  CHECK_THROWS_MATCHES(parse_config_text("just a line\n"), config_error,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("line 1")));
  CHECK_THROWS_AS(parse_config_text("= 3\n"), config_error);
}

TEST_CASE("config: finalize validates cross-field constraints") {
  RunConfig cfg;
  cfg.control.k_intent = 0;
  CHECK_THROWS_AS(finalize_config(cfg), config_error);
  cfg = RunConfig{};
  cfg.control.k_intent = 37;  // grid 6 → max 36
  CHECK_THROWS_AS(finalize_config(cfg), config_error);
  cfg = RunConfig{};
  cfg.commands.p_attack = 0.9;
  cfg.commands.p_retreat = 0.2;
  CHECK_THROWS_AS(finalize_config(cfg), config_error);
  cfg = RunConfig{};
  cfg.train.epochs = 0;
  CHECK_THROWS_AS(finalize_config(cfg), config_error);
}

TEST_CASE("config: effective echo is canonical and round-trips") {
  RunConfig cfg = parse_config_text("seed = 1234\nmodel.c_conc = 2.5\narena.speed = 0.75\n");
  const std::string echo = effective_config(cfg);
  CHECK(echo.find("seed = 1234\n") != std::string::npos);
  CHECK(echo.find("model.c_conc = 2.5\n") != std::string::npos);
  const RunConfig back = parse_config_text(echo);
  CHECK(effective_config(back) == echo);
}

TEST_CASE("io: fnv1a64 known vectors and file checksum") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  const fs::path dir = scratch("fnv");
  write_file(dir / "x.txt", "a");
  CHECK(file_checksum((dir / "x.txt").string()) == fnv1a64("a"));
}

TEST_CASE("io: dataset files round-trip bitwise") {
  const fs::path dir = scratch("dataset");
  ArenaConfig acfg;
  const DatasetSplit ds = generate_dataset(1, 30, acfg, 5);
  REQUIRE(!ds.train.empty());

  const std::string a = (dir / "a.jsonl").string();
  const std::string b = (dir / "b.jsonl").string();
  save_samples(a, ds.train, 0xABCDULL, 5);
  const LoadedDataset loaded = load_samples(a);
  CHECK(loaded.header.version == 1);
  CHECK(loaded.header.config_hash == 0xABCDULL);
  CHECK(loaded.header.seed == 5);
  CHECK(loaded.header.count == static_cast<int>(ds.train.size()));
  REQUIRE(loaded.samples.size() == ds.train.size());
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    CHECK(loaded.samples[i].state.raw.data == ds.train[i].state.raw.data);
    CHECK(loaded.samples[i].state.global_info == ds.train[i].state.global_info);
    CHECK(loaded.samples[i].label.level1 == ds.train[i].label.level1);
    CHECK(loaded.samples[i].label.move_dir == ds.train[i].label.move_dir);
    CHECK(loaded.samples[i].label.target == ds.train[i].label.target);
    CHECK(loaded.samples[i].label.intention == ds.train[i].label.intention);
    CHECK(loaded.samples[i].true_attention == ds.train[i].true_attention);
  }
  save_samples(b, loaded.samples, loaded.header.config_hash, loaded.header.seed);
  CHECK(file_checksum(a) == file_checksum(b));
}

TEST_CASE("io: malformed dataset files raise data errors") {
  const fs::path dir = scratch("bad_dataset");
  const std::string p = (dir / "bad.jsonl").string();

  SECTION("missing file") { CHECK_THROWS_AS(load_samples(p), data_error); }
  SECTION("wrong format tag") {
    write_file(p, "{\"format\":\"something.else\",\"version\":1}\n");
    CHECK_THROWS_MATCHES(load_samples(p), data_error,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("not a dataset file")));
  }
  SECTION("broken JSON carries the line number") {
    write_file(p,
               "{\"format\":\"latalign.dataset\",\"version\":1,\"config_hash\":0,"
               "\"seed\":0,\"count\":1}\n{oops\n");
    CHECK_THROWS_MATCHES(load_samples(p), data_error,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring(":2:")));
  }
  SECTION("header count mismatch") {
    write_file(p,
               "{\"format\":\"latalign.dataset\",\"version\":1,\"config_hash\":0,"
               "\"seed\":0,\"count\":3}\n");
    CHECK_THROWS_MATCHES(load_samples(p), data_error,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("does not match")));
  }
  SECTION("ragged unit rows") {
    write_file(p,
               "{\"format\":\"latalign.dataset\",\"version\":1,\"config_hash\":0,"
               "\"seed\":0,\"count\":1}\n"
               "{\"units\":[[1,2],[3]],\"global\":[0,0],\"label\":{\"level1\":0,"
               "\"move_dir\":-1,\"target\":-1,\"intention\":0},\"true_attention\":[0]}\n");
    CHECK_THROWS_MATCHES(load_samples(p), data_error,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("ragged")));
  }
}

TEST_CASE("io: trace files round-trip") {
  const fs::path dir = scratch("traces");
  std::vector<CommandTrace> traces;
  traces.push_back(make_trace(CommandKind::attack, Outcome::success, true, 4));
  traces.push_back(make_trace(CommandKind::retreat, Outcome::rejected, false, 0));
  traces.push_back(make_trace(CommandKind::assemble, Outcome::abnormal, true, 2));

  const std::string p = (dir / "t.jsonl").string();
  save_traces(p, traces);
  const std::vector<CommandTrace> back = load_traces(p);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].command.kind == traces[i].command.kind);
    CHECK(back[i].command.target_unit == traces[i].command.target_unit);
    CHECK(back[i].command.issue_frame == traces[i].command.issue_frame);
    CHECK(back[i].command.max_frames == traces[i].command.max_frames);
    CHECK(back[i].gated == traces[i].gated);
    CHECK(back[i].outcome == traces[i].outcome);
    REQUIRE(back[i].frames.size() == traces[i].frames.size());
    for (std::size_t f = 0; f < back[i].frames.size(); ++f) {
      CHECK(back[i].frames[f].x == traces[i].frames[f].x);
      CHECK(back[i].frames[f].y == traces[i].frames[f].y);
      CHECK(back[i].frames[f].distance == traces[i].frames[f].distance);
      CHECK(back[i].frames[f].action.move_dir == traces[i].frames[f].action.move_dir);
    }
  }
  write_file(dir / "junk.jsonl", "{not json\n");
  CHECK_THROWS_AS(load_traces((dir / "junk.jsonl").string()), data_error);
}

TEST_CASE("io: metrics CSV writes undefined for empty denominators") {
  CommandMetrics m;
  m.overall = {10, 8, 6, 1};
  m.attack = {10, 8, 6, 1};
  // retreat/assemble untouched: received 0 everywhere
  const std::string csv = metrics_csv(m);
  const std::string expected =
      "kind,received,gated,response_rate,success_rate,abnormal_rate\n"
      "overall,10,8,0.8,0.75,0.125\n"
      "attack,10,8,0.8,0.75,0.125\n"
      "retreat,0,0,undefined,undefined,undefined\n"
      "assemble,0,0,undefined,undefined,undefined\n";
  CHECK(csv == expected);
}

TEST_CASE("io: epoch log has one JSON line per epoch") {
  const fs::path dir = scratch("epochs");
  TrainReport report;
  for (int e = 0; e < 3; ++e) {
    EpochStats s;
    s.epoch = e;
    s.train_loss = 2.0 - 0.5 * e;
    s.val_level1_acc = 0.5 + 0.1 * e;
    report.epochs.push_back(s);
  }
  const std::string p = (dir / "log.jsonl").string();
  save_epoch_log(p, report);
  CHECK(count_lines(p) == 3);
  std::ifstream is(p);
  std::string line;
  std::getline(is, line);
  const auto j = nlohmann::json::parse(line);
  CHECK(j.at("epoch").get<int>() == 0);
  CHECK(j.at("train_loss").get<double>() == 2.0);
}

TEST_CASE("cmd: gen-data is byte-reproducible and seed-sensitive") {
  const fs::path root = scratch("gen");
  std::ostringstream log;

  RunConfig a = tiny_config(root / "a");
  RunConfig b = tiny_config(root / "b");
  REQUIRE(cmd_gen_data(a, log) == kExitOk);
  REQUIRE(cmd_gen_data(b, log) == kExitOk);
  CHECK(file_checksum((root / "a" / "train.jsonl").string()) ==
        file_checksum((root / "b" / "train.jsonl").string()));
  CHECK(file_checksum((root / "a" / "val.jsonl").string()) ==
        file_checksum((root / "b" / "val.jsonl").string()));
  CHECK(read_file(root / "a" / "config.effective") != "");

  RunConfig c = tiny_config(root / "c");
  c.seed = 12;
  REQUIRE(cmd_gen_data(c, log) == kExitOk);
  CHECK(file_checksum((root / "a" / "train.jsonl").string()) !=
        file_checksum((root / "c" / "train.jsonl").string()));
}

TEST_CASE("cmd: train, simulate, and report chain end to end") {
  const fs::path root = scratch("chain");
  std::ostringstream log;
  RunConfig cfg = tiny_config(root / "run");
  REQUIRE(cmd_gen_data(cfg, log) == kExitOk);

  SECTION("deterministic training writes checkpoint and epoch log") {
    REQUIRE(cmd_train(cfg, TrainMode::deterministic, "", log) == kExitOk);
    const fs::path ckpt = root / "run" / "model_det.ckpt";
    REQUIRE(fs::exists(ckpt));
    CHECK(count_lines(root / "run" / "epochs_det.jsonl") == cfg.train.epochs);
    const ParameterStore params = checkpoint_load(ckpt.string());
    CHECK(params.hyper.d_embed == cfg.hyper.d_embed);
    CHECK(params.tensors.count("embed.W1") == 1);

    SECTION("stochastic training requires the prior checkpoint") {
      CHECK(cmd_train(cfg, TrainMode::stochastic, "", log) == kExitUsage);
      RunConfig scfg = cfg;
      scfg.train.epochs = 1;
      REQUIRE(cmd_train(scfg, TrainMode::stochastic, ckpt.string(), log) == kExitOk);
      CHECK(fs::exists(root / "run" / "model_stoch.ckpt"));
      CHECK(count_lines(root / "run" / "epochs_stoch.jsonl") == 1);
    }

    SECTION("simulate writes traces and metrics, reproducibly") {
      REQUIRE(cmd_simulate(cfg, ckpt.string(),
                           AlignmentWeights::Mode::deterministic, true, log) == kExitOk);
      const fs::path traces = root / "run" / "traces_det.jsonl";
      REQUIRE(fs::exists(traces));
      REQUIRE(fs::exists(root / "run" / "metrics_det.csv"));

      RunConfig again = cfg;
      again.out_dir = (root / "run2").string();
      REQUIRE(cmd_simulate(again, ckpt.string(),
                           AlignmentWeights::Mode::deterministic, true, log) == kExitOk);
      CHECK(file_checksum(traces.string()) ==
            file_checksum((root / "run2" / "traces_det.jsonl").string()));

      const std::vector<CommandTrace> t = load_traces(traces.string());
      CHECK(!t.empty());  // tiny seed chosen so the schedule is non-empty

      SECTION("no-gate executes every command") {
        RunConfig open = cfg;
        open.out_dir = (root / "open").string();
        REQUIRE(cmd_simulate(open, ckpt.string(),
                             AlignmentWeights::Mode::deterministic, false, log) ==
                kExitOk);
        const std::vector<CommandTrace> ot =
            load_traces((root / "open" / "traces_det.jsonl").string());
        REQUIRE(!ot.empty());
        for (const CommandTrace& ct : ot) CHECK(ct.gated);
      }

      SECTION("report aggregates trace files") {
        RunConfig rcfg = cfg;
        rcfg.out_dir = (root / "rep").string();
        REQUIRE(cmd_report(rcfg, {traces.string()}, log) == kExitOk);
        REQUIRE(fs::exists(root / "rep" / "report.csv"));
        CHECK(read_file(root / "rep" / "report.csv") ==
              metrics_csv(command_metrics(t)));
      }
    }
  }

  SECTION("report without inputs is a usage error") {
    CHECK(cmd_report(cfg, {}, log) == kExitUsage);
  }

  SECTION("train without data files is a data error") {
    RunConfig empty = cfg;
    empty.out_dir = (root / "nodata").string();
    CHECK_THROWS_AS(cmd_train(empty, TrainMode::deterministic, "", log), data_error);
  }
}

TEST_CASE("gradcheck: all checks pass and the injected bug is caught by name") {
  const std::vector<GradCheckResult> ok = run_gradcheck(7);
  REQUIRE(ok.size() == 8);
  for (const GradCheckResult& r : ok) {
    INFO(r.name << " measured=" << r.measured << " tol=" << r.tol);
    CHECK(r.pass);
  }

  const std::vector<GradCheckResult> bad = run_gradcheck(7, true);
  int failures = 0;
  for (const GradCheckResult& r : bad) {
    if (!r.pass) {
      ++failures;
      CHECK(r.name == "sparsemax.jacobian");
    }
  }
  CHECK(failures == 1);

  std::ostringstream log;
  RunConfig cfg;
  cfg.seed = 7;
  finalize_config(cfg);
  cfg.out_dir = scratch("gradcheck").string();
  CHECK(cmd_gradcheck(cfg, false, log) == kExitOk);
  CHECK(log.str().find("PASS sparsemax.projection") != std::string::npos);
  CHECK(cmd_gradcheck(cfg, true, log) == kExitCheckFailure);
  CHECK(log.str().find("FAIL sparsemax.jacobian") != std::string::npos);
}
