#pragma once

// Problem instances: a drift field, a soft killing rate and their declared
// sup/Lipschitz bounds, plus the built-in analytic families used everywhere
// in tests and experiments.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>

#include "fvtorus/geometry.hpp"
#include "fvtorus/rng.hpp"

namespace fv {

using DriftFn = std::function<void(const TorusPoint&, std::span<double>)>;
using KillRateFn = std::function<double(const TorusPoint&)>;

/// Immutable problem definition. Evaluation functions must be pure and
/// thread-safe. Declared bounds are trusted; verify_declared_bounds spot
/// checks them by sampling but cannot certify a black box.
struct ModelSpec {
  int dim = 1;
  DriftFn drift;
  KillRateFn kill_rate;
  double sup_lambda = 0.0;  // sup |lambda|
  double lip_lambda = 0.0;  // Lipschitz constant of lambda
  double sup_b = 0.0;       // sup |b|
  double lip_b = 0.0;       // sup |grad b|
  std::string id;           // stable identifier for manifests and caching
};

/// One-parameter analytic family on the torus:
///   b_i(x)    = -2 pi c sin(2 pi x_i)
///   lambda(x) = lambda0 + (eps / d) sum_i cos(2 pi x_i)
/// Setting c = 0 removes the drift; eps = 0 gives constant killing;
/// lambda0 = eps = 0 disables killing entirely.
struct SineFamilyParams {
  int dim = 1;
  double drift_amp = 0.3;  // c
  double lambda0 = 2.0;
  double eps = 0.25;
};

inline ModelSpec make_sine_family(const SineFamilyParams& p) {
  if (p.dim < 1 || p.dim > kMaxDim) {
    throw std::invalid_argument("sine family: bad dimension");
  }
  if (p.lambda0 < 0.0) throw std::invalid_argument("sine family: lambda0 < 0");
  if (p.eps < 0.0) throw std::invalid_argument("sine family: eps < 0");
  if (p.drift_amp < 0.0) throw std::invalid_argument("sine family: drift_amp < 0");

  const double two_pi = 2.0 * std::numbers::pi;
  const int d = p.dim;
  const double c = p.drift_amp;
  const double l0 = p.lambda0;
  const double eps = p.eps;

  ModelSpec m;
  m.dim = d;
  m.drift = [c, two_pi](const TorusPoint& x, std::span<double> out) {
    for (int i = 0; i < x.dim(); ++i) {
      out[static_cast<std::size_t>(i)] = -two_pi * c * std::sin(two_pi * x[i]);
    }
  };
  m.kill_rate = [l0, eps, d, two_pi](const TorusPoint& x) {
    double s = 0.0;
    for (int i = 0; i < x.dim(); ++i) s += std::cos(two_pi * x[i]);
    return l0 + eps * s / static_cast<double>(d);
  };
  // Exact bounds of the analytic formulas.
  m.sup_lambda = l0 + eps;
  m.lip_lambda = two_pi * eps / std::sqrt(static_cast<double>(d));
  m.sup_b = two_pi * c * std::sqrt(static_cast<double>(d));
  m.lip_b = two_pi * two_pi * c;

  std::ostringstream id;
  id << "sine(d=" << d << ",c=" << c << ",lambda0=" << l0 << ",eps=" << eps
     << ")";
  m.id = id.str();
  return m;
}

/// Named built-in models. "demo" is the default instance used by the
/// experiment presets; the killing variation is small relative to the
/// diffusive mixing so contraction estimation stays in its working regime.
inline ModelSpec make_builtin(const std::string& family,
                              SineFamilyParams p = {}) {
  if (family == "demo" || family == "sine") return make_sine_family(p);
  if (family == "pure_diffusion" || family == "zero_kill") {
    p.lambda0 = 0.0;
    p.eps = 0.0;
    return make_sine_family(p);
  }
  if (family == "constant_kill") {
    p.eps = 0.0;
    return make_sine_family(p);
  }
  if (family == "driftless") {
    p.drift_amp = 0.0;
    return make_sine_family(p);
  }
  if (family == "stress") {
    // Heavy constant killing; exercises mass deaths within one update.
    p.lambda0 = std::max(p.lambda0, 20.0);
    p.eps = 0.0;
    return make_sine_family(p);
  }
  throw std::invalid_argument("unknown model family: " + family);
}

/// What the perturbative contraction heuristic can say about a model before
/// any simulation: the size of the killing-variation term L_lambda *
/// exp(gamma ||lambda||_inf). Whether the net rate is positive is not
/// decidable from the model alone; it is estimated empirically.
struct PerturbationReport {
  double gamma = 0.0;
  double term = 0.0;  // lip_lambda * exp(gamma * sup_lambda)
  std::string regime;
};

inline PerturbationReport perturbation_report(const ModelSpec& m, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("perturbation_report: gamma <= 0");
  PerturbationReport r;
  r.gamma = gamma;
  r.term = m.lip_lambda * std::exp(gamma * m.sup_lambda);
  if (m.sup_lambda == 0.0) {
    r.regime = "contraction expected (pure diffusion)";
  } else if (m.lip_lambda == 0.0) {
    r.regime = "contraction expected (constant killing)";
  } else {
    r.regime = "empirical-only";
  }
  return r;
}

struct BoundCheck {
  bool ok = true;
  double max_kill_rate = 0.0;
  double min_kill_rate = 0.0;
  double sup_excess = 0.0;  // positive if a sample exceeded sup_lambda
  double lip_excess = 0.0;  // positive if a pair exceeded lip_lambda
  double drift_sup_excess = 0.0;
};

/// Spot check of the declared bounds on random points and pairs.
inline BoundCheck verify_declared_bounds(const ModelSpec& m, int n_samples,
                                         std::uint64_t seed) {
  BoundCheck r;
  RngStream rng(seed, 0, 0, StreamId::kScratch);
  std::array<double, kMaxDim> buf{};
  std::array<double, kMaxDim> bvec{};
  r.min_kill_rate = std::numeric_limits<double>::infinity();
  TorusPoint prev;
  double prev_rate = 0.0;
  for (int k = 0; k < n_samples; ++k) {
    for (int i = 0; i < m.dim; ++i) buf[static_cast<std::size_t>(i)] = rng.uniform();
    const TorusPoint x = TorusPoint::wrap(
        std::span<const double>(buf.data(), static_cast<std::size_t>(m.dim)));
    const double rate = m.kill_rate(x);
    r.max_kill_rate = std::max(r.max_kill_rate, rate);
    r.min_kill_rate = std::min(r.min_kill_rate, rate);
    if (rate < 0.0) r.ok = false;
    r.sup_excess = std::max(r.sup_excess, rate - m.sup_lambda);
    std::span<double> bs(bvec.data(), static_cast<std::size_t>(m.dim));
    m.drift(x, bs);
    double bn = 0.0;
    for (int i = 0; i < m.dim; ++i) bn += bs[static_cast<std::size_t>(i)] * bs[static_cast<std::size_t>(i)];
    r.drift_sup_excess = std::max(r.drift_sup_excess, std::sqrt(bn) - m.sup_b);
    if (k > 0) {
      const double dist = torus_dist(x, prev);
      if (dist > 1e-12) {
        const double lip = std::fabs(rate - prev_rate) / dist;
        r.lip_excess = std::max(r.lip_excess, lip - m.lip_lambda);
      }
    }
    prev = x;
    prev_rate = rate;
  }
  if (r.sup_excess > 1e-9 || r.lip_excess > 1e-9 || r.drift_sup_excess > 1e-9) {
    r.ok = false;
  }
  return r;
}

}  // namespace fv
