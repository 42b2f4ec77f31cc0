#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "fvtorus/rng.hpp"
#include "fvtorus/stats.hpp"

using namespace fv;
using Catch::Approx;

TEST_CASE("mean and standard error", "[stats]") {
  std::vector<double> xs = {1.0, 2.0, 3.0, 4.0};
  const MeanSe ms = mean_se(xs);
  CHECK(ms.mean == Approx(2.5));
  // sample sd = sqrt(5/3), se = sd / 2
  CHECK(ms.se == Approx(std::sqrt(5.0 / 3.0) / 2.0).epsilon(1e-12));
}

TEST_CASE("ks statistic on identical and disjoint samples", "[stats]") {
  std::vector<double> a = {0.1, 0.2, 0.3};
  CHECK(ks_statistic(a, a) == 0.0);
  std::vector<double> b = {10.0, 11.0};
  CHECK(ks_statistic(a, b) == Approx(1.0));

  // same-law samples stay below the 1% critical value
  RngStream rng(3, 0, 0, StreamId::kScratch);
  std::vector<double> u(20000), v(20000);
  for (auto& x : u) x = rng.uniform();
  for (auto& x : v) x = rng.uniform();
  CHECK(ks_statistic(u, v) < ks_critical(0.01, u.size(), v.size()));
}

TEST_CASE("chi-square upper tail", "[stats]") {
  // q(k/2, x/2) for known chi-square quantiles
  CHECK(gamma_q(0.5, 3.841459 / 2.0) == Approx(0.05).epsilon(1e-4));
  CHECK(gamma_q(2.5, 11.0705 / 2.0) == Approx(0.05).epsilon(1e-4));

  std::vector<double> obs = {52.0, 48.0};
  std::vector<double> expd = {50.0, 50.0};
  const Chi2Result r = chi2_gof(obs, expd);
  CHECK(r.df == 1);
  CHECK(r.statistic == Approx(0.16).epsilon(1e-12));
  CHECK(r.p_value > 0.5);
}

TEST_CASE("linear fit recovers slope and intercept", "[stats]") {
  std::vector<double> x = {0.0, 1.0, 2.0, 3.0};
  std::vector<double> y = {1.0, 3.0, 5.0, 7.0};
  const LinearFit f = fit_line(x, y);
  CHECK(f.slope == Approx(2.0).epsilon(1e-12));
  CHECK(f.intercept == Approx(1.0).epsilon(1e-12));
  CHECK(f.r_squared == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("trend z-score flags monotone decay", "[stats]") {
  std::vector<double> dec(40), flat(40);
  RngStream rng(5, 0, 0, StreamId::kScratch);
  for (std::size_t i = 0; i < dec.size(); ++i) {
    dec[i] = std::exp(-0.2 * static_cast<double>(i)) + 1e-4 * rng.uniform();
    flat[i] = 1.0 + 0.01 * (rng.uniform() - 0.5);
  }
  CHECK(trend_z(dec) < -1.645);
  CHECK(std::fabs(trend_z(flat)) < 1.645);
}

TEST_CASE("weighted median", "[stats]") {
  CHECK(weighted_median({1.0, 2.0, 10.0}, {1.0, 1.0, 1.0}) == 2.0);
  CHECK(weighted_median({1.0, 2.0, 10.0}, {5.0, 1.0, 1.0}) == 1.0);
  CHECK(weighted_median({3.0}, {2.0}) == 3.0);
}
