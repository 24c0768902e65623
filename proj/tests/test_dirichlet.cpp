#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "latalign/dirichlet.hpp"
#include "latalign/finite_diff.hpp"
#include "latalign/rng.hpp"
#include "oracles.hpp"

using latalign::dirichlet_kl;
using latalign::dirichlet_kl_grad;
using latalign::dirichlet_log_pdf;
using latalign::dirichlet_sample;
using latalign::DirichletParams;
using latalign::make_dirichlet_params;
using latalign::RngStream;
using latalign::SimplexVector;

namespace {

SimplexVector simplex_point(std::vector<double> v) {
  SimplexVector z;
  z.values = std::move(v);
  for (std::size_t i = 0; i < z.values.size(); ++i)
    if (z.values[i] > 0.0) z.support.push_back(static_cast<int>(i));
  return z;
}

}  // namespace

TEST_CASE("make_dirichlet_params flooring and validation") {
  const DirichletParams p = make_dirichlet_params({5.0, 1e-9, 5.0});
  REQUIRE(p.support == std::vector<int>{0, 2});
  REQUIRE(p.alpha[1] == 0.0);  // sub-floor entries become exactly zero
  REQUIRE_THROWS_AS(make_dirichlet_params({-1.0, 2.0}), latalign::invalid_input_error);
  REQUIRE_THROWS_AS(make_dirichlet_params({1e-9, 1e-9}), latalign::invalid_input_error);
}

TEST_CASE("dirichlet_sample degenerate coordinate is exactly zero") {
  RngStream g(9, 0);
  const DirichletParams p = make_dirichlet_params({5.0, 0.0, 5.0});
  for (int i = 0; i < 100; ++i) {
    const auto r = dirichlet_sample(p, 4, 1, g);
    REQUIRE(r.samples[0].z.values[1] == 0.0);
    REQUIRE(r.mean.values[1] == 0.0);
  }
}

TEST_CASE("dirichlet_sample stays on the simplex and matches the mean") {
  RngStream g(10, 0);
  const DirichletParams p = make_dirichlet_params({2.0, 3.0, 5.0});
  const int n = 100000;
  std::vector<std::vector<double>> comps(3, std::vector<double>(n));
  for (int i = 0; i < n; ++i) {
    const auto r = dirichlet_sample(p, 4, 1, g);
    double sum = 0.0;
    for (double v : r.samples[0].z.values) {
      REQUIRE(v >= 0.0);
      sum += v;
    }
    REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
    for (int k = 0; k < 3; ++k)
      comps[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] =
          r.samples[0].z.values[static_cast<std::size_t>(k)];
  }
  const double want[3] = {0.2, 0.3, 0.5};  // α / Σα
  for (int k = 0; k < 3; ++k) {
    const auto m = oracles::mean_stderr(comps[static_cast<std::size_t>(k)]);
    REQUIRE_THAT(m.mean, Catch::Matchers::WithinAbs(want[k], 3.0 * m.stderr_));
  }
}

TEST_CASE("dirichlet_sample averaging stays on the simplex") {
  RngStream g(11, 0);
  const DirichletParams p = make_dirichlet_params({0.5, 1.5, 2.0, 0.0});
  const auto r = dirichlet_sample(p, 4, 8, g);
  REQUIRE(r.samples.size() == 8);
  double sum = 0.0;
  for (double v : r.mean.values) {
    REQUIRE(v >= 0.0);
    sum += v;
  }
  REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
  REQUIRE(r.mean.values[3] == 0.0);
}

TEST_CASE("dirichlet_log_pdf fixed values") {
  REQUIRE_THAT(dirichlet_log_pdf(simplex_point({0.5, 0.5}),
                                 make_dirichlet_params({1.0, 1.0})),
               Catch::Matchers::WithinAbs(0.0, 1e-12));
  // Beta(2,2) density at 0.2: 6 · 0.2 · 0.8 = 0.96.
  REQUIRE_THAT(dirichlet_log_pdf(simplex_point({0.2, 0.8}),
                                 make_dirichlet_params({2.0, 2.0})),
               Catch::Matchers::WithinAbs(-0.040821994520255130, 1e-12));
  REQUIRE_THAT(dirichlet_log_pdf(simplex_point({0.5, 0.0, 0.5}),
                                 make_dirichlet_params({1.0, 0.0, 1.0})),
               Catch::Matchers::WithinAbs(0.0, 1e-12));
  // Mass outside the parameter support → −∞.
  REQUIRE(std::isinf(dirichlet_log_pdf(simplex_point({0.5, 0.5, 0.0}),
                                       make_dirichlet_params({1.0, 0.0, 1.0}))));
}

TEST_CASE("dirichlet_kl fixed values and signals") {
  REQUIRE_THAT(dirichlet_kl(make_dirichlet_params({1.5, 2.5}),
                            make_dirichlet_params({1.5, 2.5}))
                   .value,
               Catch::Matchers::WithinAbs(0.0, 1e-12));
  REQUIRE_THAT(dirichlet_kl(make_dirichlet_params({1.0, 1.0, 1.0}),
                            make_dirichlet_params({1.0, 1.0, 1.0}))
                   .value,
               Catch::Matchers::WithinAbs(0.0, 1e-12));
  const auto kl = dirichlet_kl(make_dirichlet_params({2.0, 2.0}),
                               make_dirichlet_params({1.0, 1.0}));
  REQUIRE_FALSE(kl.infinite);
  REQUIRE_THAT(kl.value, Catch::Matchers::WithinAbs(0.12509280256138833, 1e-12));

  // q with mass where p has none: infinite-KL signal, not an exception.
  const auto bad = dirichlet_kl(make_dirichlet_params({1.0, 1.0}),
                                make_dirichlet_params({1.0, 0.0}));
  REQUIRE(bad.infinite);
}

TEST_CASE("dirichlet_kl agrees with Monte-Carlo and is non-negative") {
  RngStream master(404, 0);
  for (int pair = 0; pair < 5; ++pair) {
    const int dim = 2 + pair % 4;  // dimensions 2..5
    std::vector<double> qa(static_cast<std::size_t>(dim)), pa(qa.size());
    for (double& a : qa) a = 0.5 + 3.0 * master.uniform();
    for (double& a : pa) a = 0.5 + 3.0 * master.uniform();
    const DirichletParams q = make_dirichlet_params(qa);
    const DirichletParams p = make_dirichlet_params(pa);

    const auto kl = dirichlet_kl(q, p);
    REQUIRE_FALSE(kl.infinite);
    REQUIRE(kl.value >= -1e-9);

    RngStream g = master.substream(static_cast<std::uint64_t>(pair));
    const int n = 200000;
    std::vector<double> diffs(n);
    for (int i = 0; i < n; ++i) {
      const auto r = dirichlet_sample(q, 4, 1, g);
      diffs[static_cast<std::size_t>(i)] =
          dirichlet_log_pdf(r.samples[0].z, q) - dirichlet_log_pdf(r.samples[0].z, p);
    }
    const auto m = oracles::mean_stderr(diffs);
    INFO("pair " << pair << ": analytic " << kl.value << " MC " << m.mean << " ± "
                 << m.stderr_);
    REQUIRE_THAT(kl.value, Catch::Matchers::WithinAbs(m.mean, 3.0 * m.stderr_));
  }
}

TEST_CASE("dirichlet_kl_grad matches finite differences") {
  const std::vector<double> qa = {1.7, 0.9, 3.2};
  const std::vector<double> pa = {1.0, 1.0, 1.0};
  const auto grad = dirichlet_kl_grad(make_dirichlet_params(qa),
                                      make_dirichlet_params(pa));
  const auto fd = latalign::finite_diff_grad(
      [&](const std::vector<double>& a) {
        return dirichlet_kl(make_dirichlet_params(a), make_dirichlet_params(pa)).value;
      },
      qa);
  for (std::size_t i = 0; i < qa.size(); ++i)
    REQUIRE_THAT(grad[i], Catch::Matchers::WithinAbs(fd[i], 1e-6));
}
