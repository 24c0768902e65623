#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "latalign/checkpoint.hpp"
#include "latalign/finite_diff.hpp"
#include "latalign/model.hpp"
#include "latalign/rng.hpp"
#include "latalign/tensor.hpp"

using namespace latalign;

namespace {

Hyper tiny_hyper(int d_embed = 3, int grid = 2) {
  Hyper h;
  h.d_embed = d_embed;
  h.h_embed = 5;
  h.h1 = 6;
  h.h2 = 5;
  h.grid = grid;
  return h;
}

UnitFeatureSet random_state(int n, RngStream& g) {
  UnitFeatureSet s;
  s.raw = Matrix(n, 13);
  for (double& v : s.raw.data) v = g.uniform();
  s.global_info = {g.uniform(), g.uniform()};
  return s;
}

ActionLabel random_label(int n, int grid, RngStream& g) {
  ActionLabel l;
  l.level1 = static_cast<int>(g.uniform_below(3));
  if (l.level1 == 1) l.move_dir = static_cast<int>(g.uniform_below(8));
  if (l.level1 == 2) l.target = static_cast<int>(g.uniform_below(static_cast<std::uint64_t>(n)));
  l.intention = static_cast<int>(g.uniform_below(static_cast<std::uint64_t>(grid * grid)));
  return l;
}

/// Margin of the sparsemax support against coordinate flips; gradient
/// finite-difference checks need the support stable under ±h probes.
double support_margin(const std::vector<double>& t) {
  const SimplexVector z = sparsemax(t);
  const int i0 = z.support.front();
  const double tau = t[static_cast<std::size_t>(i0)] - z.values[static_cast<std::size_t>(i0)];
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double zi = z.values[i];
    margin = std::min(margin, zi > 0.0 ? zi : tau - t[i]);
  }
  return margin;
}

}  // namespace

TEST_CASE("embed_units basics") {
  const Hyper h = tiny_hyper();
  ParameterStore zero = make_model_params(h);
  RngStream g(1, 0);
  const UnitFeatureSet s = random_state(4, g);
  const EmbedCache emb = embed_units(s, zero);
  for (double v : emb.X.data) REQUIRE(v == 0.0);

  ParameterStore params = make_model_params(h);
  init_model_params(params, g, 0.5);
  UnitFeatureSet twin = s;
  for (int c = 0; c < 13; ++c) twin.raw.at(2, c) = twin.raw.at(3, c);
  const EmbedCache e2 = embed_units(twin, params);
  for (int c = 0; c < h.d_embed; ++c) REQUIRE(e2.X.at(2, c) == e2.X.at(3, c));
  for (double v : e2.X.data) REQUIRE(std::isfinite(v));
}

TEST_CASE("embedder gradient matches finite differences") {
  const Hyper h = tiny_hyper();
  RngStream g(2, 0);
  ParameterStore params = make_model_params(h);
  init_model_params(params, g, 0.5);
  const UnitFeatureSet s = random_state(4, g);
  // Scalar probe: f = Σ w_ij X_ij for random w.
  Matrix w(4, h.d_embed);
  for (double& v : w.data) v = 2.0 * g.uniform() - 1.0;

  ParameterStore grads = zeros_like(params);
  const EmbedCache emb = embed_units(s, params);
  embedder_backward(params, emb, w, grads);

  for (const char* name : {"embed.W1", "embed.b1", "embed.W2", "embed.b2"}) {
    Matrix& tensor = params.at(name);
    const Matrix& grad = grads.at(name);
    for (std::size_t k = 0; k < tensor.data.size(); ++k) {
      const double orig = tensor.data[k];
      const double hstep = 1e-6;
      tensor.data[k] = orig + hstep;
      const EmbedCache ep = embed_units(s, params);
      tensor.data[k] = orig - hstep;
      const EmbedCache em = embed_units(s, params);
      tensor.data[k] = orig;
      double fp = 0.0, fm = 0.0;
      for (std::size_t i = 0; i < w.data.size(); ++i) {
        fp += w.data[i] * ep.X.data[i];
        fm += w.data[i] * em.X.data[i];
      }
      const double fd = (fp - fm) / (2.0 * hstep);
      REQUIRE_THAT(grad.data[k], Catch::Matchers::WithinAbs(fd, 1e-4 * (1.0 + std::fabs(fd))));
    }
  }
}

TEST_CASE("attention_scores fixed cases and oracle") {
  {
    // Orthonormal identity rows: only the self-score survives.
    Matrix X(3, 3);
    for (int i = 0; i < 3; ++i) X.at(i, i) = 1.0;
    const auto t = attention_scores(X);
    REQUIRE_THAT(t[0], Catch::Matchers::WithinAbs(1.0 / std::sqrt(3.0), 1e-15));
    REQUIRE(t[1] == 0.0);
    REQUIRE(t[2] == 0.0);
  }
  {
    Matrix X(4, 2);
    for (int i = 0; i < 4; ++i) {
      X.at(i, 0) = 0.3;
      X.at(i, 1) = -0.7;
    }
    const auto t = attention_scores(X);
    const double want = (0.3 * 0.3 + 0.7 * 0.7) / std::sqrt(2.0);
    for (double v : t) REQUIRE_THAT(v, Catch::Matchers::WithinAbs(want, 1e-15));
  }
  {
    RngStream g(3, 0);
    Matrix X(5, 4);
    for (double& v : X.data) v = g.normal();
    const auto t = attention_scores(X);
    for (int i = 0; i < 5; ++i) {
      double acc = 0.0;
      for (int c = 0; c < 4; ++c) acc += X.at(0, c) * X.at(i, c);
      REQUIRE_THAT(t[static_cast<std::size_t>(i)],
                   Catch::Matchers::WithinAbs(acc / 2.0, 1e-12));
    }
  }
}

TEST_CASE("fuse fixed cases and gradients") {
  RngStream g(4, 0);
  Matrix X(4, 3);
  for (double& v : X.data) v = g.normal();
  {
    SimplexVector z;
    z.values = {0.0, 0.0, 1.0, 0.0};
    z.support = {2};
    const auto c = fuse(X, z);
    for (int col = 0; col < 3; ++col) REQUIRE(c[static_cast<std::size_t>(col)] == X.at(2, col));
  }
  {
    SimplexVector z;
    z.values = {0.5, 0.5, 0.0, 0.0};
    z.support = {0, 1};
    const auto c = fuse(X, z);
    for (int col = 0; col < 3; ++col)
      REQUIRE_THAT(c[static_cast<std::size_t>(col)],
                   Catch::Matchers::WithinAbs(0.5 * (X.at(0, col) + X.at(1, col)), 1e-15));
  }
  {
    // f = ⟨w, fuse(X, z)⟩: df/dz_i = ⟨w, X_i⟩ and df/dX_i = z_i w.
    std::vector<double> w = {0.4, -1.1, 0.7};
    SimplexVector z;
    z.values = {0.2, 0.3, 0.1, 0.4};
    z.support = {0, 1, 2, 3};
    const auto f_of_z = [&](const std::vector<double>& zv) {
      SimplexVector zz;
      zz.values = zv;
      for (std::size_t i = 0; i < zv.size(); ++i)
        if (zv[i] != 0.0) zz.support.push_back(static_cast<int>(i));
      const auto c = fuse(X, zz);
      double s = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * c[i];
      return s;
    };
    const auto fd = finite_diff_grad(f_of_z, z.values);
    for (int i = 0; i < 4; ++i) {
      double want = 0.0;
      for (int col = 0; col < 3; ++col) want += w[static_cast<std::size_t>(col)] * X.at(i, col);
      REQUIRE_THAT(fd[static_cast<std::size_t>(i)], Catch::Matchers::WithinAbs(want, 1e-6));
    }
  }
}

TEST_CASE("policy_loss fixed cases") {
  ActionDistribution dist;
  dist.level1_logits = {0.0, 0.0, 0.0};
  dist.move_logits.assign(8, 0.0);
  dist.target_logits.assign(4, 0.0);
  dist.intention_logits.assign(4, 0.0);
  ActionLabel move_label;
  move_label.level1 = 1;
  move_label.move_dir = 5;
  move_label.intention = 2;
  const PolicyLossTerms t = policy_loss_terms(dist, move_label, 0.5);
  REQUIRE_THAT(t.level1, Catch::Matchers::WithinAbs(std::log(3.0), 1e-12));
  REQUIRE_THAT(t.level2, Catch::Matchers::WithinAbs(std::log(8.0), 1e-12));
  REQUIRE_THAT(t.intention, Catch::Matchers::WithinAbs(std::log(4.0), 1e-12));

  // Peaked logits (margin 100) at the label → near-zero loss.
  dist.level1_logits[1] = 100.0;
  dist.move_logits[5] = 100.0;
  dist.intention_logits[2] = 100.0;
  REQUIRE(policy_loss(dist, move_label, 0.5) < 1e-3);

  ActionLabel bad;
  bad.level1 = 2;
  bad.target = 9;  // out of range for 4 units
  REQUIRE_THROWS_AS(policy_loss(dist, bad, 0.5), invalid_input_error);
}

TEST_CASE("policy_loss gradient matches finite differences") {
  RngStream g(5, 0);
  for (int trial = 0; trial < 20; ++trial) {
    ActionDistribution dist;
    dist.level1_logits = {g.normal(), g.normal(), g.normal()};
    dist.move_logits.resize(8);
    dist.target_logits.resize(5);
    dist.intention_logits.resize(9);
    for (double& v : dist.move_logits) v = g.normal();
    for (double& v : dist.target_logits) v = g.normal();
    for (double& v : dist.intention_logits) v = g.normal();
    const ActionLabel label = random_label(5, 3, g);
    const HeadGrads hg = policy_loss_grad(dist, label, 0.5);

    const auto check_head = [&](std::vector<double>& logits, const std::vector<double>& grad) {
      const auto fd = finite_diff_grad(
          [&](const std::vector<double>& x) {
            std::vector<double> saved = logits;
            logits = x;
            const double v = policy_loss(dist, label, 0.5);
            logits = saved;
            return v;
          },
          logits);
      for (std::size_t i = 0; i < grad.size(); ++i)
        REQUIRE_THAT(grad[i], Catch::Matchers::WithinAbs(fd[i], 1e-6));
    };
    check_head(dist.level1_logits, hg.dlevel1);
    check_head(dist.move_logits, hg.dmove);
    check_head(dist.target_logits, hg.dtarget);
    check_head(dist.intention_logits, hg.dintent);
  }
}

TEST_CASE("forward_deterministic invariants and repeatability") {
  const Hyper h = tiny_hyper();
  RngStream g(6, 0);
  ParameterStore params = make_model_params(h);
  init_model_params(params, g, 0.5);
  const UnitFeatureSet s = random_state(5, g);
  const DeterministicForward a = forward_deterministic(s, params);
  double sum = 0.0;
  for (double v : a.weights.z.values) {
    REQUIRE(v >= 0.0);
    sum += v;
  }
  REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
  const DeterministicForward b = forward_deterministic(s, params);
  REQUIRE(a.pred.dist.level1_logits == b.pred.dist.level1_logits);
  REQUIRE(a.pred.dist.target_logits == b.pred.dist.target_logits);
  REQUIRE(a.weights.z.values == b.weights.z.values);
}

TEST_CASE("forward_stochastic invariants, determinism, and the large-c limit") {
  const Hyper base = tiny_hyper();
  RngStream g(7, 0);
  ParameterStore params = make_model_params(base);
  init_model_params(params, g, 0.8);
  const UnitFeatureSet s = random_state(6, g);

  {
    RngStream r1(99, 3), r2(99, 3);
    const StochasticForward f1 = forward_stochastic(s, params, r1, 4);
    const StochasticForward f2 = forward_stochastic(s, params, r2, 4);
    REQUIRE(f1.weights.z.values == f2.weights.z.values);
    REQUIRE(f1.pred.dist.level1_logits == f2.pred.dist.level1_logits);
  }
  {
    RngStream r(100, 0);
    const StochasticForward f = forward_stochastic(s, params, r, 4);
    const SimplexVector zs = sparsemax(f.t);
    for (std::size_t i = 0; i < zs.values.size(); ++i)
      if (zs.values[i] == 0.0) REQUIRE(f.weights.z.values[i] == 0.0);
  }
  {
    // c_conc → ∞ proxy: mean of many draws approaches sparsemax(t).
    ParameterStore big = params;
    big.hyper.c_conc = 1000.0;
    RngStream r(101, 0);
    const StochasticForward f = forward_stochastic(s, big, r, 10000);
    const SimplexVector zs = sparsemax(f.t);
    for (std::size_t i = 0; i < zs.values.size(); ++i)
      REQUIRE_THAT(f.weights.z.values[i], Catch::Matchers::WithinAbs(zs.values[i], 0.02));
  }
}

TEST_CASE("deterministic backward matches finite differences on random configurations") {
  int done = 0;
  for (std::uint64_t seed = 0; done < 20 && seed < 200; ++seed) {
    RngStream g(9000 + seed, 0);
    const Hyper h = tiny_hyper(2 + static_cast<int>(g.uniform_below(3)),
                               2 + static_cast<int>(g.uniform_below(2)));
    ParameterStore params = make_model_params(h);
    init_model_params(params, g, 0.6);
    const int n = 2 + static_cast<int>(g.uniform_below(4));  // 2..5 units
    const UnitFeatureSet s = random_state(n, g);
    const ActionLabel label = random_label(n, h.grid, g);

    const DeterministicForward f = forward_deterministic(s, params);
    if (support_margin(f.t) < 1e-3) continue;  // FD needs a stable support
    ++done;

    ParameterStore grads = zeros_like(params);
    backward_deterministic(s, params, f, label, 1.0, grads);

    const auto loss_at = [&]() {
      const DeterministicForward ff = forward_deterministic(s, params);
      return policy_loss(ff.pred.dist, label, h.lambda_int);
    };
    for (auto& [name, tensor] : params.tensors) {
      const Matrix& grad = grads.at(name);
      for (std::size_t k = 0; k < tensor.data.size(); ++k) {
        const double orig = tensor.data[k];
        const double hstep = 1e-5;
        tensor.data[k] = orig + hstep;
        const double fp = loss_at();
        tensor.data[k] = orig - hstep;
        const double fm = loss_at();
        tensor.data[k] = orig;
        const double fd = (fp - fm) / (2.0 * hstep);
        INFO("config " << seed << " tensor " << name << " entry " << k);
        REQUIRE_THAT(grad.data[k],
                     Catch::Matchers::WithinAbs(fd, 1e-4 * (1.0 + std::fabs(fd))));
      }
    }
  }
  REQUIRE(done == 20);
}

TEST_CASE("sgd_step behavior") {
  const Hyper h = tiny_hyper();
  RngStream g(10, 0);
  ParameterStore params = make_model_params(h);
  init_model_params(params, g, 0.5);
  const ParameterStore before = params;
  ParameterStore grads = zeros_like(params);

  SgdOptimizer opt;
  opt.step(params, grads, 0.1, 0.0);
  for (const auto& [name, m] : params.tensors)
    REQUIRE(m.data == before.at(name).data);  // zero grads → unchanged

  for (auto& [name, m] : grads.tensors)
    for (double& v : m.data) v = 1.0;
  opt.step(params, grads, 0.1, 0.0);
  for (const auto& [name, m] : params.tensors)
    for (std::size_t k = 0; k < m.data.size(); ++k)
      REQUIRE_THAT(m.data[k], Catch::Matchers::WithinAbs(before.at(name).data[k] - 0.1, 1e-15));

  grads.at("pred.W1").data[0] = std::nan("");
  REQUIRE_THROWS_WITH(opt.step(params, grads, 0.1, 0.0),
                      Catch::Matchers::ContainsSubstring("pred.W1"));
}

TEST_CASE("checkpoint round-trip, truncation, and shape mismatch") {
  const Hyper h = tiny_hyper();
  RngStream g(11, 0);
  ParameterStore params = make_model_params(h);
  init_model_params(params, g, 0.5);
  const std::string path = "ckpt_test.bin";
  checkpoint_save(params, path);
  const ParameterStore loaded = checkpoint_load(path);
  REQUIRE(loaded.hyper.d_embed == h.d_embed);
  for (const auto& [name, m] : params.tensors) REQUIRE(loaded.at(name).data == m.data);

  // Byte-identical on re-save (reproducibility of the format itself).
  const std::string path2 = "ckpt_test2.bin";
  checkpoint_save(params, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string c1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string c2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  REQUIRE(c1 == c2);

  {
    std::ofstream trunc("ckpt_trunc.bin", std::ios::binary);
    trunc.write(c1.data(), static_cast<std::streamsize>(c1.size() / 2));
  }
  REQUIRE_THROWS_AS(checkpoint_load("ckpt_trunc.bin"), checkpoint_error);

  {
    // Corrupt the dims of the first tensor record: hyper says otherwise.
    std::string bad = c1;
    const std::size_t hyper_bytes = 8 + 4 + 9 * 4 + 4 * 8;
    const std::size_t name_len_at = hyper_bytes + 4;
    const std::size_t name_len = static_cast<unsigned char>(bad[name_len_at]);
    const std::size_t rows_at = name_len_at + 4 + name_len + 4;
    bad[rows_at] = static_cast<char>(bad[rows_at] + 1);
    std::ofstream out("ckpt_bad.bin", std::ios::binary);
    out.write(bad.data(), static_cast<std::streamsize>(bad.size()));
    out.close();
    REQUIRE_THROWS_WITH(checkpoint_load("ckpt_bad.bin"),
                        Catch::Matchers::ContainsSubstring("shape mismatch"));
  }
  std::remove(path.c_str());
  std::remove(path2.c_str());
  std::remove("ckpt_trunc.bin");
  std::remove("ckpt_bad.bin");
}
