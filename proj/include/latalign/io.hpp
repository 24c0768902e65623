#pragma once
// File formats: JSONL datasets (header line + one sample per line), JSONL
// command traces and epoch logs, CSV metrics. All writers are
// deterministic byte-for-byte given identical inputs.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "latalign/arena.hpp"
#include "latalign/control.hpp"
#include "latalign/errors.hpp"
#include "latalign/model.hpp"
#include "latalign/train.hpp"

namespace latalign {

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

/// FNV-1a over a file's bytes; the reproducibility checks compare these.
inline std::uint64_t file_checksum(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("file_checksum: cannot open " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return fnv1a64(buf.str());
}

namespace detail_io {

using json = nlohmann::ordered_json;

inline json label_to_json(const ActionLabel& a) {
  return json{{"level1", a.level1},
              {"move_dir", a.move_dir},
              {"target", a.target},
              {"intention", a.intention}};
}

inline ActionLabel label_from_json(const json& j) {
  ActionLabel a;
  a.level1 = j.at("level1").get<int>();
  a.move_dir = j.at("move_dir").get<int>();
  a.target = j.at("target").get<int>();
  a.intention = j.at("intention").get<int>();
  return a;
}

inline const char* outcome_token(Outcome o) { return outcome_name(o); }

inline Outcome outcome_from_token(const std::string& s) {
  if (s == "success") return Outcome::success;
  if (s == "abnormal") return Outcome::abnormal;
  if (s == "normal_end") return Outcome::normal_end;
  if (s == "rejected") return Outcome::rejected;
  throw data_error("unknown outcome: " + s);
}

inline CommandKind kind_from_token(const std::string& s) {
  if (s == "attack") return CommandKind::attack;
  if (s == "retreat") return CommandKind::retreat;
  if (s == "assemble") return CommandKind::assemble;
  throw data_error("unknown command kind: " + s);
}

/// Shortest-round-trip decimal form (what the JSON writer emits).
inline std::string num(double v) { return json(v).dump(); }

}  // namespace detail_io

// ---------------------------------------------------------------------------
// Dataset files

struct DatasetHeader {
  int version = 1;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  int count = 0;
};

inline void save_samples(const std::string& path, const std::vector<Sample>& samples,
                         std::uint64_t config_hash, std::uint64_t seed) {
  using detail_io::json;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("save_samples: cannot open " + path);
  const json header = {{"format", "latalign.dataset"},
                       {"version", 1},
                       {"config_hash", config_hash},
                       {"seed", seed},
                       {"count", static_cast<int>(samples.size())}};
  os << header.dump() << '\n';
  for (const Sample& s : samples) {
    json units = json::array();
    for (int r = 0; r < s.state.raw.rows; ++r) {
      json row = json::array();
      for (int c = 0; c < s.state.raw.cols; ++c) row.push_back(s.state.raw.at(r, c));
      units.push_back(std::move(row));
    }
    const json line = {{"units", std::move(units)},
                       {"global", s.state.global_info},
                       {"label", detail_io::label_to_json(s.label)},
                       {"true_attention", s.true_attention}};
    os << line.dump() << '\n';
  }
  if (!os) throw data_error("save_samples: write failed on " + path);
}

struct LoadedDataset {
  DatasetHeader header;
  std::vector<Sample> samples;
};

inline LoadedDataset load_samples(const std::string& path) {
  using detail_io::json;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("load_samples: cannot open " + path);
  LoadedDataset out;
  std::string line;
  int line_no = 0;
  const auto fail = [&](const std::string& why) {
    throw data_error(path + ":" + std::to_string(line_no) + ": " + why);
  };
  try {
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty()) continue;
      const json j = json::parse(line);
      if (line_no == 1) {
        if (j.value("format", "") != std::string("latalign.dataset"))
          fail("not a dataset file");
        out.header.version = j.at("version").get<int>();
        if (out.header.version != 1) fail("unsupported dataset version");
        out.header.config_hash = j.at("config_hash").get<std::uint64_t>();
        out.header.seed = j.at("seed").get<std::uint64_t>();
        out.header.count = j.at("count").get<int>();
        continue;
      }
      Sample s;
      const json& units = j.at("units");
      const int n = static_cast<int>(units.size());
      if (n == 0) fail("sample with no units");
      const int cols = static_cast<int>(units.at(0).size());
      s.state.raw = Matrix(n, cols);
      for (int r = 0; r < n; ++r) {
        const json& row = units.at(static_cast<std::size_t>(r));
        if (static_cast<int>(row.size()) != cols) fail("ragged unit rows");
        for (int c = 0; c < cols; ++c)
          s.state.raw.at(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
      }
      s.state.global_info = j.at("global").get<std::vector<double>>();
      s.label = detail_io::label_from_json(j.at("label"));
      s.true_attention = j.at("true_attention").get<std::vector<int>>();
      out.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    fail(std::string("malformed JSON: ") + e.what());
  }
  if (line_no == 0) throw data_error(path + ": empty dataset file");
  if (static_cast<int>(out.samples.size()) != out.header.count)
    throw data_error(path + ": sample count " + std::to_string(out.samples.size()) +
                     " does not match header count " +
                     std::to_string(out.header.count));
  return out;
}

// ---------------------------------------------------------------------------
// Command traces

inline void save_traces(const std::string& path,
                        const std::vector<CommandTrace>& traces) {
  using detail_io::json;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("save_traces: cannot open " + path);
  for (const CommandTrace& t : traces) {
    json frames = json::array();
    for (const TraceFrame& f : t.frames)
      frames.push_back(json{{"x", f.x},
                            {"y", f.y},
                            {"distance", f.distance},
                            {"action", detail_io::label_to_json(f.action)}});
    const json line = {
        {"command",
         {{"kind", command_kind_name(t.command.kind)},
          {"target", t.command.target_unit},
          {"issue_frame", t.command.issue_frame},
          {"max_frames", t.command.max_frames}}},
        {"gated", t.gated},
        {"outcome", detail_io::outcome_token(t.outcome)},
        {"frames", std::move(frames)}};
    os << line.dump() << '\n';
  }
  if (!os) throw data_error("save_traces: write failed on " + path);
}

inline std::vector<CommandTrace> load_traces(const std::string& path) {
  using detail_io::json;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw data_error("load_traces: cannot open " + path);
  std::vector<CommandTrace> out;
  std::string line;
  int line_no = 0;
  try {
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty()) continue;
      const json j = json::parse(line);
      CommandTrace t;
      const json& c = j.at("command");
      t.command.kind = detail_io::kind_from_token(c.at("kind").get<std::string>());
      t.command.target_unit = c.at("target").get<int>();
      t.command.issue_frame = c.at("issue_frame").get<int>();
      t.command.max_frames = c.at("max_frames").get<int>();
      t.gated = j.at("gated").get<bool>();
      t.outcome = detail_io::outcome_from_token(j.at("outcome").get<std::string>());
      for (const json& fj : j.at("frames")) {
        TraceFrame f;
        f.x = fj.at("x").get<double>();
        f.y = fj.at("y").get<double>();
        f.distance = fj.at("distance").get<double>();
        f.action = detail_io::label_from_json(fj.at("action"));
        t.frames.push_back(f);
      }
      out.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw data_error(path + ":" + std::to_string(line_no) + ": malformed JSON: " +
                     e.what());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Epoch logs and metrics

inline void save_epoch_log(const std::string& path, const TrainReport& report) {
  using detail_io::json;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("save_epoch_log: cannot open " + path);
  for (const EpochStats& e : report.epochs) {
    const json line = {{"epoch", e.epoch},
                       {"train_loss", e.train_loss},
                       {"val_level1_acc", e.val_level1_acc},
                       {"val_move_acc", e.val_move_acc},
                       {"val_target_acc", e.val_target_acc},
                       {"val_intent_acc", e.val_intent_acc},
                       {"kl_mean", e.kl_mean},
                       {"floored_coords", e.floored_coords}};
    os << line.dump() << '\n';
  }
  if (!os) throw data_error("save_epoch_log: write failed on " + path);
}

/// CSV with per-kind and overall rates; gated-conditional rates of an empty
/// denominator are written as "undefined", never as zero.
inline std::string metrics_csv(const CommandMetrics& m) {
  std::ostringstream os;
  os << "kind,received,gated,response_rate,success_rate,abnormal_rate\n";
  const auto cell = [](const std::optional<double>& v) {
    return v.has_value() ? detail_io::num(*v) : std::string("undefined");
  };
  const auto row = [&](const char* name, const RateSet& r) {
    os << name << ',' << r.received << ',' << r.gated << ',' << cell(r.response_rate())
       << ',' << cell(r.success_rate()) << ',' << cell(r.abnormal_rate()) << '\n';
  };
  row("overall", m.overall);
  row("attack", m.attack);
  row("retreat", m.retreat);
  row("assemble", m.assemble);
  return os.str();
}

inline void save_metrics_csv(const std::string& path, const CommandMetrics& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("save_metrics_csv: cannot open " + path);
  os << metrics_csv(m);
  if (!os) throw data_error("save_metrics_csv: write failed on " + path);
}

}  // namespace latalign
