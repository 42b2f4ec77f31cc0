#pragma once

// Fast property suite behind `validate`: a curated subset of the library's
// invariants that runs in seconds on a clean checkout.

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "fvtorus/coupling.hpp"
#include "fvtorus/gridref.hpp"
#include "fvtorus/kernel.hpp"
#include "fvtorus/model.hpp"
#include "fvtorus/particles.hpp"
#include "fvtorus/transport.hpp"

namespace fv::selfcheck {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

inline std::vector<CheckResult> run_all(std::uint64_t seed = 20240817) {
  std::vector<CheckResult> results;
  auto report = [&](const std::string& name, bool pass, std::string detail = "") {
    results.push_back({name, pass, std::move(detail)});
  };
  auto random_point = [](RngStream& rng, int dim) {
    std::array<double, kMaxDim> buf{};
    for (int i = 0; i < dim; ++i) buf[static_cast<std::size_t>(i)] = rng.uniform();
    return TorusPoint::wrap(
        std::span<const double>(buf.data(), static_cast<std::size_t>(dim)));
  };

  // geometry: metric axioms and the equivalence sandwich
  {
    RngStream rng(seed, 0, 0, StreamId::kScratch);
    bool ok = true;
    for (int d : {1, 2, 3}) {
      const RhoMetric m(1.0, d);
      const double beta = m.beta();
      for (int i = 0; i < 2000 && ok; ++i) {
        const TorusPoint x = random_point(rng, d);
        const TorusPoint y = random_point(rng, d);
        const TorusPoint z = random_point(rng, d);
        const double dist = torus_dist(x, y);
        const double r = rho(m, x, y);
        ok = ok && dist <= std::sqrt(static_cast<double>(d)) / 2.0 + 1e-15;
        ok = ok && r <= dist + 1e-15 && r >= beta * dist - 1e-12;
        ok = ok && rho(m, x, z) <= rho(m, x, y) + rho(m, y, z) + 1e-12;
      }
    }
    report("geometry.metric_axioms_and_sandwich", ok);
  }

  // model: declared bounds hold on samples
  {
    const BoundCheck c = verify_declared_bounds(make_builtin("demo"), 20000, seed);
    report("model.declared_bounds", c.ok);
  }

  // transport: fast circular distance equals the exact transport solve
  {
    RngStream rng(seed, 0, 1, StreamId::kScratch);
    double worst = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<TorusPoint> a, b;
      std::vector<double> wa, wb;
      const auto na = 1 + rng.pick(30), nb = 1 + rng.pick(30);
      for (std::uint64_t i = 0; i < na; ++i) {
        a.push_back(random_point(rng, 1));
        wa.push_back(0.1 + rng.uniform());
      }
      for (std::uint64_t i = 0; i < nb; ++i) {
        b.push_back(random_point(rng, 1));
        wb.push_back(0.1 + rng.uniform());
      }
      const auto mu = DiscreteMeasure::from_atoms(a, wa);
      const auto nu = DiscreteMeasure::from_atoms(b, wb);
      worst = std::max(worst, std::fabs(w1_circle(mu, nu) - lp_oracle(mu, nu)));
    }
    std::ostringstream detail;
    detail << "max gap " << worst;
    report("transport.w1_circle_equals_lp", worst < 1e-9, detail.str());
  }

  // rebirth sampler: survivors always pass the recorded accept test
  {
    const StepParams p(0.1, make_builtin("demo", {.lambda0 = 5.0, .eps = 1.0}));
    const DiscreteMeasure mu = DiscreteMeasure::uniform_atoms(
        {TorusPoint::wrap({0.1}), TorusPoint::wrap({0.6})});
    bool ok = true;
    for (std::uint64_t i = 0; i < 500 && ok; ++i) {
      RngStream rng(seed, 1, i, StreamId::kScratch);
      const RebirthSample s = sample_rebirth(TorusPoint::wrap({0.3}), mu, p, rng);
      ok = s.accept_uniform >= kill_prob(s.point, p);
    }
    report("kernel.rebirth_survivors_alive", ok);
  }

  // grid: degenerate reductions
  {
    const int n = 128;
    const double gamma = 0.1;
    const ModelSpec none = make_builtin("demo", {.lambda0 = 0.0, .eps = 0.0});
    const ModelSpec constant = make_builtin("demo", {.lambda0 = 2.0, .eps = 0.0});
    const GridKernel k = build_grid_kernel(none, gamma, n);
    GridDensity a = GridDensity::uniform(n), b = a;
    for (int s = 0; s < 10; ++s) {
      a = nonlinear_step(a, k, none, gamma).density;
      b = nonlinear_step(b, k, constant, gamma).density;
    }
    const double gap = a.l1_distance(b);
    const ModelSpec flat = make_builtin("driftless", {.lambda0 = 2.0, .eps = 0.0});
    const GridKernel kf = build_grid_kernel(flat, gamma, n);
    const QsdResult q = qsd_power_iteration(kf, flat, gamma);
    const double uniform_gap = q.density.l1_distance(GridDensity::uniform(n));
    report("gridref.constant_kill_cancels", gap < 1e-12);
    report("gridref.flat_model_uniform_qsd",
           q.converged && uniform_gap < 1e-10 &&
               std::fabs(q.survival_factor - std::exp(-gamma * 2.0)) < 1e-10);
  }

  // particles: trajectories are reproducible and non-failable under mass death
  {
    const StepParams p(0.1, make_builtin("stress"));
    ParticleConfiguration cfg = config_iid_uniform(16, 1, seed);
    bool finite = true;
    for (int k = 0; k < 30; ++k) {
      cfg = particle_step(cfg, p, seed);
      for (const auto& pt : cfg.points) {
        finite = finite && pt[0] >= 0.0 && pt[0] < 1.0;
      }
    }
    report("particles.mass_death_survives", finite);

    const StepParams pd(0.05, make_builtin("demo"));
    const ParticleConfiguration init = config_iid_uniform(64, 1, seed + 1);
    const ChainSummary s1 = run_chain(init, pd, 15, seed + 2);
    const ChainSummary s2 = run_chain(init, pd, 15, seed + 2);
    report("particles.bit_reproducible",
           s1.final_config.points == s2.final_config.points);
  }

  // coupling: identical systems stay identical under the synchronous mode
  {
    const StepParams p(0.05, make_builtin("demo"));
    const ParticleConfiguration init = config_iid_uniform(16, 1, seed + 3);
    CoupledPair pair(init, init, CouplingMode::kSynchronous, seed + 4);
    bool ok = true;
    for (int k = 0; k < 20 && ok; ++k) {
      coupled_step(pair, p);
      ok = pair.first.points == pair.second.points;
    }
    report("coupling.synchronous_identity", ok);
  }

  // rates: the dimension table
  {
    const bool ok = std::fabs(alpha_rate(10000, 1) - 0.01) < 1e-12 &&
                    std::fabs(alpha_rate(1, 2) - std::log(2.0)) < 1e-12 &&
                    std::fabs(alpha_rate(1000, 3) - 0.1) < 1e-9;
    report("transport.alpha_table", ok);
  }

  return results;
}

}  // namespace fv::selfcheck
