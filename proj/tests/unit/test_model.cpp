#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "fvtorus/model.hpp"

using namespace fv;
using Catch::Approx;

TEST_CASE("builtin families carry exact analytic bounds", "[model]") {
  const ModelSpec zero = make_builtin("zero_kill");
  CHECK(zero.sup_lambda == 0.0);
  CHECK(zero.lip_lambda == 0.0);

  const ModelSpec constant = make_builtin("constant_kill", {.lambda0 = 2.0});
  CHECK(constant.sup_lambda == Approx(2.0));
  CHECK(constant.lip_lambda == 0.0);

  const ModelSpec demo = make_builtin("demo", {.lambda0 = 2.0, .eps = 0.25});
  CHECK(demo.sup_lambda == Approx(2.25));
  CHECK(demo.lip_lambda == Approx(1.5707963267948966).epsilon(1e-12));
  CHECK(demo.sup_b == Approx(2.0 * std::numbers::pi * 0.3).epsilon(1e-12));

  CHECK_THROWS_AS(make_builtin("sine", {.lambda0 = -1.0}), std::invalid_argument);
  CHECK_THROWS_AS(make_builtin("sine", {.eps = -0.5}), std::invalid_argument);
  CHECK_THROWS_AS(make_builtin("no_such_family"), std::invalid_argument);
}

TEST_CASE("sampled sup and Lipschitz estimates never exceed declared bounds",
          "[model][slow]") {
  for (const char* family : {"demo", "constant_kill", "zero_kill", "driftless"}) {
    const ModelSpec m = make_builtin(family);
    const BoundCheck c = verify_declared_bounds(m, 100000, 77);
    INFO(family);
    CHECK(c.ok);
    CHECK(c.sup_excess <= 0.0);
    CHECK(c.lip_excess <= 1e-9);
    CHECK(c.min_kill_rate >= 0.0);
  }
  // multi-dimensional member of the family
  const ModelSpec m2 = make_builtin("demo", {.dim = 2});
  const BoundCheck c2 = verify_declared_bounds(m2, 100000, 78);
  CHECK(c2.ok);
}

TEST_CASE("perturbation report", "[model]") {
  const ModelSpec zero = make_builtin("zero_kill");
  const PerturbationReport r0 = perturbation_report(zero, 0.05);
  CHECK(r0.term == 0.0);
  CHECK(r0.regime == "contraction expected (pure diffusion)");

  const ModelSpec constant = make_builtin("constant_kill", {.lambda0 = 5.0});
  const PerturbationReport rc = perturbation_report(constant, 0.05);
  CHECK(rc.term == 0.0);  // constant killing has no variation

  const ModelSpec demo = make_builtin("demo");
  const PerturbationReport rd = perturbation_report(demo, 0.05);
  // lip 2*pi*0.25, sup 2.25: term = 1.5708 * exp(0.1125)
  CHECK(rd.term == Approx(1.7578345905766706).epsilon(1e-12));
  CHECK(rd.term == Approx(1.7578).margin(2e-4));
  CHECK(rd.regime == "empirical-only");

  CHECK_THROWS_AS(perturbation_report(demo, 0.0), std::invalid_argument);
}

TEST_CASE("kill rate stays within [0, sup] on samples", "[model]") {
  const ModelSpec demo = make_builtin("demo");
  const BoundCheck c = verify_declared_bounds(demo, 10000, 5);
  CHECK(c.ok);
  CHECK(c.max_kill_rate <= demo.sup_lambda + 1e-12);
  CHECK(c.min_kill_rate >= 0.0);
}
