#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "fvtorus/geometry.hpp"
#include "fvtorus/rng.hpp"

using namespace fv;
using Catch::Approx;

namespace {

TorusPoint random_point(RngStream& rng, int dim) {
  std::array<double, kMaxDim> buf{};
  for (int i = 0; i < dim; ++i) buf[static_cast<std::size_t>(i)] = rng.uniform();
  return TorusPoint::wrap(
      std::span<const double>(buf.data(), static_cast<std::size_t>(dim)));
}

}  // namespace

TEST_CASE("wrap reduces coordinates mod 1", "[geometry]") {
  CHECK(wrap({1.25})[0] == Approx(0.25).margin(1e-15));
  CHECK(wrap({-0.1})[0] == Approx(0.9).margin(1e-15));
  CHECK(wrap({0.0})[0] == 0.0);
  CHECK(wrap({1.0})[0] == 0.0);
  CHECK(wrap({-3.75, 2.5})[1] == Approx(0.5).margin(1e-15));

  RngStream rng(7, 0, 0, StreamId::kScratch);
  for (int i = 0; i < 1000; ++i) {
    const double raw = (rng.uniform() - 0.5) * 100.0;
    const TorusPoint p = wrap({raw});
    REQUIRE(p[0] >= 0.0);
    REQUIRE(p[0] < 1.0);
  }

  CHECK_THROWS_AS(wrap({std::numeric_limits<double>::infinity()}),
                  std::invalid_argument);
  CHECK_THROWS_AS(wrap({std::numeric_limits<double>::quiet_NaN()}),
                  std::invalid_argument);
  CHECK_THROWS_AS(wrap(std::span<const double>{}), std::invalid_argument);
  std::vector<double> too_big(kMaxDim + 1, 0.0);
  CHECK_THROWS_AS(wrap(std::span<const double>(too_big)), std::invalid_argument);
}

TEST_CASE("torus distance uses the minimal image", "[geometry]") {
  CHECK(torus_dist(wrap({0.1}), wrap({0.9})) == Approx(0.2).margin(1e-15));
  CHECK(torus_dist(wrap({0.0, 0.0}), wrap({0.5, 0.5})) ==
        Approx(std::sqrt(0.5)).margin(1e-15));
  const TorusPoint x = wrap({0.3, 0.7});
  CHECK(torus_dist(x, x) == 0.0);
  CHECK_THROWS_AS(torus_dist(wrap({0.1}), wrap({0.1, 0.2})),
                  std::invalid_argument);

  RngStream rng(11, 0, 0, StreamId::kScratch);
  for (int d = 1; d <= 3; ++d) {
    for (int i = 0; i < 2000; ++i) {
      const TorusPoint a = random_point(rng, d);
      const TorusPoint b = random_point(rng, d);
      const double dist = torus_dist(a, b);
      REQUIRE(dist >= 0.0);
      REQUIRE(dist <= std::sqrt(static_cast<double>(d)) / 2.0 + 1e-15);
      REQUIRE(dist == Approx(torus_dist(b, a)).margin(1e-15));
    }
  }
}

TEST_CASE("rho closed form and bounds", "[geometry]") {
  const RhoMetric m(1.0, 1);
  const TorusPoint x = wrap({0.2});
  CHECK(rho(m, x, x) == 0.0);
  // dist 0.5 at a = 1
  CHECK(rho(m, wrap({0.0}), wrap({0.5})) ==
        Approx(0.3934693402873666).epsilon(1e-12));

  RngStream rng(13, 0, 0, StreamId::kScratch);
  for (int i = 0; i < 1000; ++i) {
    const TorusPoint a = random_point(rng, 1);
    const TorusPoint b = random_point(rng, 1);
    CHECK(rho(m, a, b) <= torus_dist(a, b) + 1e-15);
    CHECK(rho(m, a, b) <= 1.0 / m.a);
  }
}

TEST_CASE("rho is a metric equivalent to the torus distance", "[geometry]") {
  RngStream rng(17, 0, 0, StreamId::kScratch);
  for (double a : {0.5, 1.0, 2.0}) {
    for (int d : {1, 2, 3}) {
      const RhoMetric m(a, d);
      const double beta = m.beta();
      REQUIRE(beta > 0.0);
      REQUIRE(beta <= 1.0);
      for (int i = 0; i < 10000; ++i) {
        const TorusPoint x = random_point(rng, d);
        const TorusPoint y = random_point(rng, d);
        const double dist = torus_dist(x, y);
        const double r = rho(m, x, y);
        REQUIRE(r >= beta * dist - 1e-12);
        REQUIRE(r <= dist + 1e-15);
      }
      for (int i = 0; i < 1000; ++i) {
        const TorusPoint x = random_point(rng, d);
        const TorusPoint y = random_point(rng, d);
        const TorusPoint z = random_point(rng, d);
        // symmetry, identity, triangle inequality
        REQUIRE(rho(m, x, y) == Approx(rho(m, y, x)).margin(1e-15));
        REQUIRE(rho(m, x, x) == 0.0);
        REQUIRE(rho(m, x, z) <= rho(m, x, y) + rho(m, y, z) + 1e-12);
      }
    }
  }
}

TEST_CASE("rho_sum adds per-slot distances", "[geometry]") {
  const RhoMetric m(1.0, 1);
  std::vector<TorusPoint> xs = {wrap({0.1}), wrap({0.4})};
  std::vector<TorusPoint> ys = {wrap({0.1}), wrap({0.9})};
  CHECK(rho_sum(m, xs, xs) == 0.0);
  // one identical pair: the sum reduces to the other pair's rho
  CHECK(rho_sum(m, xs, ys) == Approx(rho(m, xs[1], ys[1])).margin(1e-15));

  // applying the same permutation to both sides leaves the sum unchanged
  std::vector<TorusPoint> xs_p = {xs[1], xs[0]};
  std::vector<TorusPoint> ys_p = {ys[1], ys[0]};
  CHECK(rho_sum(m, xs_p, ys_p) == Approx(rho_sum(m, xs, ys)).margin(1e-15));

  std::vector<TorusPoint> shorter = {wrap({0.1})};
  CHECK_THROWS_AS(rho_sum(m, xs, shorter), std::invalid_argument);
}

TEST_CASE("minimal image difference is signed and bounded", "[geometry]") {
  std::array<double, 1> out{};
  minimal_image(wrap({0.1}), wrap({0.9}), out);
  CHECK(out[0] == Approx(0.2).margin(1e-15));
  minimal_image(wrap({0.9}), wrap({0.1}), out);
  CHECK(out[0] == Approx(-0.2).margin(1e-15));
}
