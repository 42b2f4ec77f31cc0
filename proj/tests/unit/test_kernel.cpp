#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "fvtorus/kernel.hpp"
#include "fvtorus/model.hpp"
#include "fvtorus/stats.hpp"

using namespace fv;
using Catch::Approx;

TEST_CASE("step params validate gamma", "[kernel]") {
  const ModelSpec m = make_builtin("demo");
  CHECK_THROWS_AS(StepParams(0.0, m), std::invalid_argument);
  CHECK_THROWS_AS(StepParams(-0.1, m), std::invalid_argument);
  CHECK_THROWS_AS(StepParams(0.3, m), std::invalid_argument);  // above gamma_max
  const StepParams ok(0.05, m);
  CHECK(survival_margin_ok(ok));  // gamma * sup_lambda = 0.1125 <= ln 2
  const StepParams heavy(0.25, make_builtin("stress"));
  CHECK_FALSE(survival_margin_ok(heavy));
}

TEST_CASE("euler step with zero drift and zero noise is the identity", "[kernel]") {
  const StepParams p(0.05, make_builtin("zero_kill", {.drift_amp = 0.0}));
  const TorusPoint x = wrap({0.37});
  const double zero = 0.0;
  CHECK(euler_step_with_noise(x, p, {&zero, 1}) == x);
}

TEST_CASE("euler displacement has the exact Gaussian variance", "[kernel][slow]") {
  // drift-free family; displacements are sqrt(gamma) * g before wrapping
  const double gamma = 0.05;
  const StepParams p(gamma, make_builtin("zero_kill", {.drift_amp = 0.0}));
  const TorusPoint x = wrap({0.5});
  const int n = 100000;
  double sum = 0.0, sum2 = 0.0;
  double g = 0.0, disp = 0.0;
  for (int i = 0; i < n; ++i) {
    RngStream rng(404, 0, static_cast<std::uint64_t>(i), StreamId::kScratch);
    g = rng.gaussian();
    euler_displacement(x, p, {&g, 1}, {&disp, 1});
    sum += disp;
    sum2 += disp * disp;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::fabs(var - gamma) < 0.05 * gamma);
  // circular sample mean of the stepped points stays at x within 4 sigma/sqrt(n)
  double cs = 0.0, sn = 0.0;
  const double two_pi = 2.0 * std::numbers::pi;
  for (int i = 0; i < n; ++i) {
    RngStream rng(404, 0, static_cast<std::uint64_t>(i), StreamId::kScratch);
    const TorusPoint y = euler_step(x, p, rng);
    cs += std::cos(two_pi * y[0]);
    sn += std::sin(two_pi * y[0]);
  }
  double circ_mean = std::atan2(sn, cs) / two_pi;
  if (circ_mean < 0.0) circ_mean += 1.0;
  CHECK(std::fabs(circ_mean - x[0]) < 4.0 * std::sqrt(gamma / n));
}

TEST_CASE("kill probability closed form", "[kernel]") {
  const StepParams none(0.1, make_builtin("zero_kill"));
  CHECK(kill_prob(wrap({0.3}), none) == 0.0);

  const StepParams constant(0.1, make_builtin("constant_kill", {.lambda0 = 2.0}));
  CHECK(kill_prob(wrap({0.3}), constant) ==
        Approx(0.18126924692201815).epsilon(1e-12));

  // nondecreasing in gamma at fixed state
  const ModelSpec demo = make_builtin("demo");
  const TorusPoint z = wrap({0.12});
  double prev = -1.0;
  for (double g : {0.01, 0.05, 0.1, 0.2, 0.25}) {
    const double p = kill_prob(z, StepParams(g, demo));
    REQUIRE(p >= prev);
    REQUIRE(p < 1.0);
    prev = p;
  }
}

TEST_CASE("rebirth sampler with no killing is one euler step", "[kernel]") {
  const StepParams p(0.05, make_builtin("zero_kill"));
  const DiscreteMeasure mu = DiscreteMeasure::point_mass(wrap({0.9}));
  const TorusPoint x = wrap({0.2});
  for (int i = 0; i < 200; ++i) {
    RngStream rng_a(7, 3, static_cast<std::uint64_t>(i), StreamId::kScratch);
    RngStream rng_b(7, 3, static_cast<std::uint64_t>(i), StreamId::kScratch);
    const RebirthSample s = sample_rebirth(x, mu, p, rng_a);
    REQUIRE(s.resurrections == 0);
    // identical stream: the output equals a bare euler step, bit for bit
    REQUIRE(s.point == euler_step(x, p, rng_b));
  }
}

TEST_CASE("rebirth sampler is deterministic in (seed, key)", "[kernel]") {
  const StepParams p(0.1, make_builtin("demo", {.lambda0 = 4.0, .eps = 0.5}));
  std::vector<TorusPoint> atoms = {wrap({0.1}), wrap({0.4}), wrap({0.8})};
  const DiscreteMeasure mu = DiscreteMeasure::uniform_atoms(atoms);
  for (std::uint64_t slot = 0; slot < 50; ++slot) {
    RngStream a(99, 11, slot, StreamId::kEvolve);
    RngStream b(99, 11, slot, StreamId::kEvolve);
    const RebirthSample sa = sample_rebirth(wrap({0.6}), mu, p, a);
    const RebirthSample sb = sample_rebirth(wrap({0.6}), mu, p, b);
    REQUIRE(sa.point == sb.point);
    REQUIRE(sa.resurrections == sb.resurrections);
    REQUIRE(sa.accept_uniform == sb.accept_uniform);
  }
}

TEST_CASE("rebirth sampler never returns a killed state", "[kernel]") {
  const StepParams p(0.1, make_builtin("demo", {.lambda0 = 5.0, .eps = 1.0}));
  std::vector<TorusPoint> atoms = {wrap({0.05}), wrap({0.55})};
  const DiscreteMeasure mu = DiscreteMeasure::uniform_atoms(atoms);
  for (std::uint64_t i = 0; i < 2000; ++i) {
    RngStream rng(31337, 0, i, StreamId::kScratch);
    const RebirthSample s = sample_rebirth(wrap({0.3}), mu, p, rng);
    // replaying the accept test with the recorded uniform must pass
    REQUIRE(s.accept_uniform >= kill_prob(s.point, p));
  }
}

TEST_CASE("resurrection count is geometric under constant killing",
          "[kernel][slow]") {
  const double gamma = 0.1;
  const double lambda0 = 3.0;
  const StepParams p(gamma, make_builtin("constant_kill", {.lambda0 = lambda0}));
  const double pbar = 1.0 - std::exp(-gamma * lambda0);
  const DiscreteMeasure mu = DiscreteMeasure::point_mass(wrap({0.5}));

  const int n = 100000;
  std::vector<double> observed;  // bins 0..k_max-1, tail pooled in back()
  const int k_max = 10;
  observed.assign(k_max + 1, 0.0);
  for (int i = 0; i < n; ++i) {
    RngStream rng(555, 0, static_cast<std::uint64_t>(i), StreamId::kScratch);
    const RebirthSample s = sample_rebirth(wrap({0.2}), mu, p, rng);
    const auto k = static_cast<int>(std::min<std::uint64_t>(s.resurrections, k_max));
    observed[static_cast<std::size_t>(k)] += 1.0;
  }
  std::vector<double> expected(k_max + 1, 0.0);
  for (int k = 0; k < k_max; ++k) {
    expected[static_cast<std::size_t>(k)] =
        n * std::pow(pbar, k) * (1.0 - pbar);
  }
  expected[k_max] = n * std::pow(pbar, k_max);
  const Chi2Result r = chi2_gof(observed, expected);
  INFO("chi2 = " << r.statistic << ", p = " << r.p_value);
  CHECK(r.p_value > 0.01);
}

TEST_CASE("no-kill rebirth and euler samples are indistinguishable",
          "[kernel][slow]") {
  const StepParams p(0.05, make_builtin("zero_kill"));
  const DiscreteMeasure mu = DiscreteMeasure::point_mass(wrap({0.1}));
  const TorusPoint x = wrap({0.77});
  const int n = 100000;
  std::vector<double> a, b;
  a.reserve(n);
  b.reserve(n);
  for (int i = 0; i < n; ++i) {
    RngStream r1(808, 0, static_cast<std::uint64_t>(i), StreamId::kScratch);
    RngStream r2(809, 0, static_cast<std::uint64_t>(i), StreamId::kScratch);
    a.push_back(sample_rebirth(x, mu, p, r1).point[0]);
    b.push_back(euler_step(x, p, r2)[0]);
  }
  CHECK(ks_statistic(a, b) < ks_critical(0.01, a.size(), b.size()));
}
