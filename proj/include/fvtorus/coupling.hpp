#pragma once

// Empirical estimation of the per-unit-time contraction rate of the particle
// kernel: coupled pairs of systems are run from two different initial
// distributions and the geometric decay of the mean slot-averaged rho
// distance is fitted on a log scale.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fvtorus/geometry.hpp"
#include "fvtorus/kernel.hpp"
#include "fvtorus/model.hpp"
#include "fvtorus/parallel.hpp"
#include "fvtorus/particles.hpp"
#include "fvtorus/rng.hpp"
#include "fvtorus/stats.hpp"

namespace fv {

enum class InitialLaw { kAllAtZero, kIidUniform };

struct KappaOptions {
  int n_particles = 100;
  int replicates = 200;
  // The horizon should cover ~5 mixing times and not much more: the burn-in
  // is a fraction of it, and the decay flattens into the replicate noise
  // floor soon after coalescence. Suits gamma ~ 0.05 on the demo model.
  int horizon_steps = 12;
  double rho_a = 1.0;
  CouplingMode mode = CouplingMode::kReflection;
  InitialLaw init_first = InitialLaw::kAllAtZero;
  InitialLaw init_second = InitialLaw::kIidUniform;
  double burn_in_fraction = 0.10;   // window starts after this fraction of horizon
  double noise_floor_multiple = 10.0;  // window ends once mean < multiple * SE
  int bootstrap_resamples = 1000;
  int threads = 0;
};

struct RateFit {
  std::vector<double> times;       // t_k = k * gamma over the horizon
  std::vector<double> mean_dist;   // E[rho_N] / N per step
  std::vector<double> se_dist;
  double rate = 0.0;               // fitted decay in exp(-rate * t)
  double intercept = 0.0;          // log-scale intercept of the fit
  double r_squared = 0.0;
  double ci_halfwidth = 0.0;       // bootstrap percentile half-width on rate
  int window_begin = 0;
  int window_end = 0;              // exclusive
  int replicates = 0;
  std::uint64_t seed = 0;
  bool horizon_ok = true;          // horizon covered >= 5 / rate time units
};

namespace detail {

inline ParticleConfiguration make_initial(InitialLaw law, std::size_t n, int dim,
                                          std::uint64_t seed) {
  switch (law) {
    case InitialLaw::kAllAtZero: {
      std::vector<double> zeros(static_cast<std::size_t>(dim), 0.0);
      return config_all_at(TorusPoint::wrap(zeros), n);
    }
    case InitialLaw::kIidUniform:
      return config_iid_uniform(n, dim, seed);
  }
  throw std::invalid_argument("unknown initial law");
}

struct WindowFit {
  double rate = 0.0, intercept = 0.0, r_squared = 0.0;
};

inline WindowFit fit_log_decay(std::span<const double> t,
                               std::span<const double> d, int begin, int end) {
  std::vector<double> xs, ys;
  xs.reserve(static_cast<std::size_t>(end - begin));
  ys.reserve(static_cast<std::size_t>(end - begin));
  for (int k = begin; k < end; ++k) {
    if (d[static_cast<std::size_t>(k)] > 0.0) {
      xs.push_back(t[static_cast<std::size_t>(k)]);
      ys.push_back(std::log(d[static_cast<std::size_t>(k)]));
    }
  }
  if (xs.size() < 5) {
    throw std::runtime_error("kappa fit: fewer than 5 usable points in window");
  }
  const LinearFit f = fit_line(xs, ys);
  return {-f.slope, f.intercept, f.r_squared};
}

}  // namespace detail

/// Runs `replicates` coupled pairs from two distinct initial distributions
/// and fits the decay rate of E[rho_N]/N per unit time over a window that
/// skips burn-in and stops at the replicate noise floor.
inline RateFit estimate_kappa(const ModelSpec& model, double gamma,
                              const KappaOptions& opt, std::uint64_t seed) {
  if (opt.replicates < 2) throw std::invalid_argument("kappa: need >= 2 replicates");
  if (opt.horizon_steps < 10) throw std::invalid_argument("kappa: horizon too short");
  const StepParams params(gamma, model);
  const RhoMetric metric(opt.rho_a, model.dim);
  const auto n = static_cast<std::size_t>(opt.n_particles);
  const int steps = opt.horizon_steps;

  // traj[r][k]: slot-averaged rho distance of replicate r at step k.
  std::vector<std::vector<double>> traj(
      static_cast<std::size_t>(opt.replicates),
      std::vector<double>(static_cast<std::size_t>(steps + 1), 0.0));

  run_tasks(static_cast<std::size_t>(opt.replicates), opt.threads, [&](std::size_t r) {
    const std::uint64_t rep_seed = derive_seed(seed, 0x6B61u ^ (r << 8));
    CoupledPair pair(
        detail::make_initial(opt.init_first, n, model.dim,
                             derive_seed(rep_seed, 1)),
        detail::make_initial(opt.init_second, n, model.dim,
                             derive_seed(rep_seed, 2)),
        opt.mode, rep_seed);
    const double d0 =
        rho_sum(metric, pair.first.points, pair.second.points) / static_cast<double>(n);
    if (!(d0 > 0.0)) {
      throw std::invalid_argument(
          "kappa: initial configurations coincide; rate fit refused");
    }
    traj[r][0] = d0;
    for (int k = 1; k <= steps; ++k) {
      coupled_step(pair, params);
      traj[r][static_cast<std::size_t>(k)] =
          rho_sum(metric, pair.first.points, pair.second.points) /
          static_cast<double>(n);
    }
  });

  RateFit fit;
  fit.replicates = opt.replicates;
  fit.seed = seed;
  fit.times.resize(static_cast<std::size_t>(steps + 1));
  fit.mean_dist.resize(static_cast<std::size_t>(steps + 1));
  fit.se_dist.resize(static_cast<std::size_t>(steps + 1));
  std::vector<double> column(static_cast<std::size_t>(opt.replicates));
  for (int k = 0; k <= steps; ++k) {
    for (std::size_t r = 0; r < column.size(); ++r) {
      column[r] = traj[r][static_cast<std::size_t>(k)];
    }
    const MeanSe ms = mean_se(column);
    fit.times[static_cast<std::size_t>(k)] = gamma * static_cast<double>(k);
    fit.mean_dist[static_cast<std::size_t>(k)] = ms.mean;
    fit.se_dist[static_cast<std::size_t>(k)] = ms.se;
  }

  fit.window_begin = static_cast<int>(std::ceil(opt.burn_in_fraction * steps));
  fit.window_end = steps + 1;
  for (int k = fit.window_begin; k <= steps; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    if (fit.mean_dist[ku] <= opt.noise_floor_multiple * fit.se_dist[ku]) {
      fit.window_end = k;
      break;
    }
  }

  const auto base = detail::fit_log_decay(fit.times, fit.mean_dist,
                                          fit.window_begin, fit.window_end);
  fit.rate = base.rate;
  fit.intercept = base.intercept;
  fit.r_squared = base.r_squared;

  // Replicate bootstrap for the rate CI.
  if (opt.bootstrap_resamples > 1) {
    RngStream boot(derive_seed(seed, 0xB007u), 0, 0, StreamId::kScratch);
    std::vector<double> rates;
    rates.reserve(static_cast<std::size_t>(opt.bootstrap_resamples));
    std::vector<double> bmean(static_cast<std::size_t>(steps + 1));
    for (int b = 0; b < opt.bootstrap_resamples; ++b) {
      std::fill(bmean.begin(), bmean.end(), 0.0);
      for (int r = 0; r < opt.replicates; ++r) {
        const auto pickr = boot.pick(static_cast<std::uint64_t>(opt.replicates));
        for (int k = 0; k <= steps; ++k) {
          bmean[static_cast<std::size_t>(k)] += traj[pickr][static_cast<std::size_t>(k)];
        }
      }
      for (double& v : bmean) v /= static_cast<double>(opt.replicates);
      try {
        rates.push_back(detail::fit_log_decay(fit.times, bmean, fit.window_begin,
                                              fit.window_end)
                            .rate);
      } catch (const std::runtime_error&) {
        // resample hit the noise floor everywhere; skip it
      }
    }
    if (rates.size() >= 100) {
      std::sort(rates.begin(), rates.end());
      const auto lo = static_cast<std::size_t>(0.025 * static_cast<double>(rates.size()));
      const auto hi = static_cast<std::size_t>(0.975 * static_cast<double>(rates.size()));
      fit.ci_halfwidth = 0.5 * (rates[std::min(hi, rates.size() - 1)] - rates[lo]);
    }
  }

  fit.horizon_ok =
      fit.rate > 0.0 && gamma * static_cast<double>(steps) >= 5.0 / fit.rate;
  return fit;
}

struct KappaSweepRow {
  int n_particles = 0;
  double eps = -1.0;  // -1 marks the no-kill reference column
  RateFit fit;
};

/// kappa-hat across particle counts and killing-variation strengths for the
/// sine family; eps = -1 adds a reference column with killing disabled.
inline std::vector<KappaSweepRow> sweep_kappa(const SineFamilyParams& base,
                                              double gamma,
                                              const std::vector<int>& n_list,
                                              const std::vector<double>& eps_list,
                                              const KappaOptions& opt,
                                              std::uint64_t seed) {
  std::vector<KappaSweepRow> rows;
  for (int n : n_list) {
    for (double eps : eps_list) {
      SineFamilyParams p = base;
      if (eps < 0.0) {
        p.lambda0 = 0.0;
        p.eps = 0.0;
      } else {
        p.eps = eps;
      }
      KappaOptions o = opt;
      o.n_particles = n;
      KappaSweepRow row;
      row.n_particles = n;
      row.eps = eps;
      row.fit = estimate_kappa(make_sine_family(p), gamma, o,
                               derive_seed(seed, static_cast<std::uint64_t>(n) * 1000003ULL +
                                                     static_cast<std::uint64_t>(
                                                         (eps < 0 ? 999 : eps * 1000))));
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace fv
