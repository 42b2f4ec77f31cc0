#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "fvtorus/gridref.hpp"
#include "fvtorus/kernel.hpp"
#include "fvtorus/stats.hpp"

using namespace fv;
using Catch::Approx;

TEST_CASE("grid density basics", "[gridref]") {
  const GridDensity u = GridDensity::uniform(128);
  CHECK(u.n_cells() == 128);
  double mass = 0.0;
  for (int j = 0; j < u.n_cells(); ++j) mass += u.weight(j);
  CHECK(mass == Approx(1.0).margin(1e-12));
  CHECK(u.cell_center(0) == Approx(0.5 / 128));

  CHECK_THROWS_AS(GridDensity::from_weights({1.0, -0.1}), std::invalid_argument);
  CHECK_THROWS_AS(GridDensity::from_weights({0.0, 0.0}), std::invalid_argument);
}

TEST_CASE("kernel build guards", "[gridref]") {
  const ModelSpec demo = make_builtin("demo");
  CHECK_THROWS_AS(build_grid_kernel(demo, 0.05, 32), std::invalid_argument);
  // sigma = sqrt(1e-5) ~ 0.0032 < 2/512
  CHECK_THROWS_AS(build_grid_kernel(demo, 1e-5, 512), std::invalid_argument);
  const ModelSpec d2 = make_builtin("demo", {.dim = 2});
  CHECK_THROWS_AS(build_grid_kernel(d2, 0.05, 128), std::invalid_argument);
}

TEST_CASE("driftless kernel is circulant with uniform fixed point", "[gridref]") {
  const ModelSpec m = make_builtin("driftless", {.lambda0 = 0.0, .eps = 0.0});
  const int n = 128;
  const GridKernel k = build_grid_kernel(m, 0.05, n);

  for (int i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (int j = 0; j < n; ++j) {
      row_sum += k.entry(i, j);
      REQUIRE(k.entry(i, j) >= 0.0);
      // circulant: entry depends only on (j - i) mod n
      REQUIRE(k.entry(i, j) == Approx(k.entry(0, (j - i + n) % n)).margin(1e-12));
    }
    REQUIRE(row_sum == Approx(1.0).margin(1e-10));
  }

  const GridDensity u = GridDensity::uniform(n);
  const GridDensity pushed = kernel_propagate(u, k);
  CHECK(pushed.l1_distance(u) < 1e-12);
}

TEST_CASE("one kernel row matches a Monte Carlo histogram", "[gridref][slow]") {
  const ModelSpec demo = make_builtin("demo");
  const double gamma = 0.05;
  const int n = 256;
  const GridKernel k = build_grid_kernel(demo, gamma, n);
  const StepParams p(gamma, demo);

  const int row = 100;
  const TorusPoint x0 = wrap({(row + 0.5) / n});
  const int samples = 1000000;
  std::vector<double> hist(static_cast<std::size_t>(n), 0.0);
  for (int s = 0; s < samples; ++s) {
    RngStream rng(2468, 0, static_cast<std::uint64_t>(s), StreamId::kScratch);
    const TorusPoint y = euler_step(x0, p, rng);
    const int cell = std::min(n - 1, static_cast<int>(y[0] * n));
    hist[static_cast<std::size_t>(cell)] += 1.0 / samples;
  }
  double tv = 0.0;
  for (int j = 0; j < n; ++j) {
    tv += std::fabs(hist[static_cast<std::size_t>(j)] - k.entry(row, j));
  }
  tv *= 0.5;
  INFO("tv distance = " << tv);
  CHECK(tv <= 0.01);
}

TEST_CASE("nonlinear step degenerate reductions", "[gridref]") {
  const int n = 128;
  const double gamma = 0.1;
  // same drift in all three kill variants
  const ModelSpec none = make_builtin("demo", {.lambda0 = 0.0, .eps = 0.0});
  const ModelSpec constant = make_builtin("demo", {.lambda0 = 2.0, .eps = 0.0});
  const GridKernel k = build_grid_kernel(none, gamma, n);

  GridDensity eta = GridDensity::from_weights([&] {
    std::vector<double> w(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
      w[static_cast<std::size_t>(j)] =
          1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * (j + 0.5) / n);
    }
    return w;
  }());

  // no killing: plain propagation
  const NonlinearStepResult free_step = nonlinear_step(eta, k, none, gamma);
  CHECK(free_step.survival == Approx(1.0).margin(1e-12));
  CHECK(free_step.density.l1_distance(kernel_propagate(eta, k)) < 1e-12);

  // constant killing cancels in the normalization
  const NonlinearStepResult const_step = nonlinear_step(eta, k, constant, gamma);
  CHECK(const_step.density.l1_distance(free_step.density) < 1e-12);
  CHECK(const_step.survival == Approx(std::exp(-gamma * 2.0)).margin(1e-12));

  // unit mass after the step
  double mass = 0.0;
  for (int j = 0; j < n; ++j) mass += const_step.density.weight(j);
  CHECK(mass == Approx(1.0).margin(1e-12));

  // iterated flows stay identical between the two variants
  GridDensity a = eta, b = eta;
  for (int s = 0; s < 20; ++s) {
    a = nonlinear_step(a, k, none, gamma).density;
    b = nonlinear_step(b, k, constant, gamma).density;
  }
  CHECK(a.l1_distance(b) < 1e-12);
}

TEST_CASE("qsd power iteration fixed point", "[gridref]") {
  const int n = 256;
  const double gamma = 0.1;

  SECTION("driftless constant-kill gives the uniform density") {
    const ModelSpec m = make_builtin("driftless", {.lambda0 = 2.0, .eps = 0.0});
    const GridKernel k = build_grid_kernel(m, gamma, n);
    const QsdResult q = qsd_power_iteration(k, m, gamma, 1e-12);
    REQUIRE(q.converged);
    CHECK(q.density.l1_distance(GridDensity::uniform(n)) < 1e-10);
    CHECK(q.survival_factor == Approx(std::exp(-gamma * 2.0)).margin(1e-10));
  }

  SECTION("no killing gives the stationary law of the kernel") {
    const ModelSpec m = make_builtin("demo", {.lambda0 = 0.0, .eps = 0.0});
    const GridKernel k = build_grid_kernel(m, gamma, n);
    const QsdResult q = qsd_power_iteration(k, m, gamma, 1e-12);
    REQUIRE(q.converged);
    CHECK(q.survival_factor == Approx(1.0).margin(1e-12));
    const GridDensity pushed = kernel_propagate(q.density, k);
    CHECK(pushed.l1_distance(q.density) < 1e-11);
  }

  SECTION("the fixed point does not depend on the starting density") {
    const ModelSpec m = make_builtin("demo");
    const GridKernel k = build_grid_kernel(m, gamma, n);
    const double tol = 1e-12;
    const QsdResult from_uniform = qsd_power_iteration(k, m, gamma, tol);
    std::vector<double> skew(static_cast<std::size_t>(n), 1e-3);
    skew[10] = 5.0;
    skew[200] = 2.0;
    const GridDensity init = GridDensity::from_weights(std::move(skew));
    const QsdResult from_skew = qsd_power_iteration(k, m, gamma, tol, 200000, &init);
    REQUIRE(from_uniform.converged);
    REQUIRE(from_skew.converged);
    CHECK(from_uniform.density.l1_distance(from_skew.density) < 2e-10);
    CHECK(from_uniform.survival_factor ==
          Approx(from_skew.survival_factor).margin(1e-10));
  }
}

TEST_CASE("conditioned grid flow matches a killed-chain Monte Carlo",
          "[gridref][slow]") {
  // Survivor histogram of a massive killed-chain simulation vs the grid
  // flow: the two constructions must agree up to MC and grid resolution.
  const ModelSpec demo = make_builtin("demo");
  const double gamma = 0.05;
  const int n = 512;
  const int m_steps = 40;
  const GridKernel k = build_grid_kernel(demo, gamma, n);
  const StepParams p(gamma, demo);

  const GridDensity eta_m =
      conditioned_flow(GridDensity::uniform(n), k, demo, gamma, m_steps);

  const int chains = 1000000;
  std::vector<TorusPoint> survivors;
  survivors.reserve(30000);
  for (int c = 0; c < chains; ++c) {
    RngStream rng(13579, 0, static_cast<std::uint64_t>(c), StreamId::kScratch);
    TorusPoint x = wrap({rng.uniform()});
    bool alive = true;
    for (int s = 0; s < m_steps && alive; ++s) {
      x = euler_step(x, p, rng);
      alive = rng.uniform() >= kill_prob(x, p);
    }
    if (alive) survivors.push_back(x);
  }
  REQUIRE(survivors.size() > 10000);

  const double w1 = w1_circle(DiscreteMeasure::uniform_atoms(survivors),
                              to_measure(eta_m));
  const double mc_error = alpha_rate(static_cast<long>(survivors.size()), 1);
  const double bound = 2.0 * (mc_error + 1.0 / n);
  INFO("survivors = " << survivors.size() << ", w1 = " << w1
                      << ", bound = " << bound);
  CHECK(w1 <= bound);
}

TEST_CASE("rebirth kernel mean matches the grid one-step formula",
          "[gridref][slow]") {
  // E[f(X)] for X ~ one rebirth update with source law mu, started from mu,
  // against the one-step conditioned grid flow applied to mu.
  const ModelSpec demo = make_builtin("demo");
  const double gamma = 0.05;
  const int n = 2048;
  const GridKernel k = build_grid_kernel(demo, gamma, n);
  const StepParams p(gamma, demo);

  std::vector<double> w(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    const double x = (j + 0.5) / n;
    w[static_cast<std::size_t>(j)] =
        std::exp(-8.0 * (x - 0.3) * (x - 0.3));  // smooth bump
  }
  const GridDensity mu_grid = GridDensity::from_weights(std::move(w));
  const DiscreteMeasure mu = to_measure(mu_grid);

  const GridDensity one_step = nonlinear_step(mu_grid, k, demo, gamma).density;
  auto f = [](double x) { return std::cos(2.0 * std::numbers::pi * x); };
  const double grid_value = one_step.integrate(f);

  const int samples = 200000;
  std::vector<double> values;
  values.reserve(samples);
  for (int s = 0; s < samples; ++s) {
    RngStream rng(8642, 0, static_cast<std::uint64_t>(s), StreamId::kScratch);
    const TorusPoint x0 = mu.sample(rng);
    const RebirthSample rs = sample_rebirth(x0, mu, p, rng);
    values.push_back(f(rs.point[0]));
  }
  const MeanSe ms = mean_se(values);
  INFO("mc = " << ms.mean << " +- " << ms.se << ", grid = " << grid_value);
  CHECK(std::fabs(ms.mean - grid_value) <= 3.0 * ms.se + 2.0 / n);
}

TEST_CASE("extrapolation over a gamma ladder", "[gridref]") {
  const int n = 128;

  SECTION("identical inputs give the same density and a zero error bar") {
    const GridDensity u = GridDensity::uniform(n);
    const ExtrapolationResult r =
        extrapolate_qsd({{0.2, u}, {0.1, u}, {0.05, u}});
    CHECK(r.density.l1_distance(u) < 1e-12);
    CHECK(r.error_bar_w1 == Approx(0.0).margin(1e-12));
  }

  SECTION("driftless constant-kill ladder extrapolates to uniform") {
    const ModelSpec m = make_builtin("driftless", {.lambda0 = 2.0, .eps = 0.0});
    std::vector<std::pair<double, GridDensity>> ladder;
    for (double g : {0.16, 0.08, 0.04}) {
      const GridKernel k = build_grid_kernel(m, g, n);
      ladder.emplace_back(g, qsd_power_iteration(k, m, g).density);
    }
    const ExtrapolationResult r = extrapolate_qsd(ladder);
    CHECK(r.density.l1_distance(GridDensity::uniform(n)) < 1e-9);
  }

  SECTION("ladder validation") {
    const GridDensity u = GridDensity::uniform(n);
    CHECK_THROWS_AS(extrapolate_qsd({{0.2, u}, {0.1, u}}), std::invalid_argument);
    CHECK_THROWS_AS(extrapolate_qsd({{0.2, u}, {0.1, u}, {0.07, u}}),
                    std::invalid_argument);  // not geometric
    CHECK_THROWS_AS(extrapolate_qsd({{0.2, u}, {0.2, u}, {0.2, u}}),
                    std::invalid_argument);  // not distinct
  }

  SECTION("error bar shrinks as the ladder refines") {
    const ModelSpec m = make_builtin("demo");
    std::vector<std::pair<double, GridDensity>> ladder;
    for (double g : {0.16, 0.08, 0.04, 0.02, 0.01}) {
      const GridKernel k = build_grid_kernel(m, g, 512);
      ladder.emplace_back(g, qsd_power_iteration(k, m, g).density);
    }
    auto coarse = std::vector<std::pair<double, GridDensity>>(ladder.begin(),
                                                              ladder.begin() + 3);
    const ExtrapolationResult shallow = extrapolate_qsd(coarse);
    const ExtrapolationResult deep = extrapolate_qsd(ladder);
    INFO("shallow = " << shallow.error_bar_w1 << ", deep = " << deep.error_bar_w1);
    CHECK(deep.error_bar_w1 < shallow.error_bar_w1);
  }
}

TEST_CASE("doubling the grid changes the qsd by at most the cell width",
          "[gridref][slow]") {
  const ModelSpec m = make_builtin("demo");
  const double gamma = 0.05;
  const GridDensity coarse =
      qsd_power_iteration(build_grid_kernel(m, gamma, 256), m, gamma).density;
  const GridDensity fine =
      qsd_power_iteration(build_grid_kernel(m, gamma, 512), m, gamma).density;
  const double w1 = w1_circle(to_measure(coarse), to_measure(fine));
  INFO("w1(coarse, fine) = " << w1);
  CHECK(w1 <= 1.0 / 256);
}

TEST_CASE("kernel cache round trip", "[gridref]") {
  const ModelSpec m = make_builtin("demo");
  const auto dir = std::filesystem::temp_directory_path() / "fvtorus_cache_test";
  std::filesystem::remove_all(dir);
  const GridKernel built = load_or_build_kernel(dir, m, 0.05, 128);
  const GridKernel cached = load_or_build_kernel(dir, m, 0.05, 128);
  REQUIRE(cached.rows == built.rows);
  // different model id misses the cache
  const ModelSpec other = make_builtin("demo", {.drift_amp = 0.6});
  const GridKernel rebuilt = load_or_build_kernel(dir, other, 0.05, 128);
  CHECK(rebuilt.rows != built.rows);
  std::filesystem::remove_all(dir);
}
