#pragma once

// Single-particle building blocks: one explicit Euler update of the drift
// diffusion, the per-arrival kill probability, and the rebirth sampler that
// retries (resurrect, move, kill test) until a survivor comes out.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>

#include "fvtorus/geometry.hpp"
#include "fvtorus/measure.hpp"
#include "fvtorus/model.hpp"
#include "fvtorus/rng.hpp"

namespace fv {

/// Timestep and model bundle for one run. gamma is capped by gamma_max so a
/// single config mistake cannot silently leave the scheme's working range.
struct StepParams {
  double gamma = 0.05;
  ModelSpec model;
  double gamma_max = 0.25;

  StepParams() = default;
  StepParams(double gamma_in, ModelSpec model_in, double gamma_max_in = 0.25)
      : gamma(gamma_in), model(std::move(model_in)), gamma_max(gamma_max_in) {
    if (!(gamma > 0.0) || gamma > gamma_max) {
      throw std::invalid_argument("StepParams: gamma must be in (0, gamma_max]");
    }
  }
};

/// True when the per-arrival survival probability is at least one half for
/// every state, i.e. gamma * sup(lambda) <= ln 2. Heavier killing still
/// works; this is the recommended operating range.
inline bool survival_margin_ok(const StepParams& p) {
  return p.gamma * p.model.sup_lambda <= std::numbers::ln2;
}

/// Raw Euler displacement gamma*b(x) + sqrt(gamma)*g for a given noise
/// vector g. Exposed so tests can pin the noise.
inline void euler_displacement(const TorusPoint& x, const StepParams& p,
                               std::span<const double> noise,
                               std::span<double> out) {
  const int d = x.dim();
  p.model.drift(x, out);
  const double sg = std::sqrt(p.gamma);
  for (int i = 0; i < d; ++i) {
    auto k = static_cast<std::size_t>(i);
    out[k] = p.gamma * out[k] + sg * noise[k];
  }
}

inline TorusPoint euler_step_with_noise(const TorusPoint& x, const StepParams& p,
                                        std::span<const double> noise) {
  std::array<double, kMaxDim> disp{};
  const auto d = static_cast<std::size_t>(x.dim());
  euler_displacement(x, p, noise, {disp.data(), d});
  std::array<double, kMaxDim> raw{};
  for (std::size_t i = 0; i < d; ++i) raw[i] = x[static_cast<int>(i)] + disp[i];
  return TorusPoint::wrap(std::span<const double>(raw.data(), d));
}

/// One Euler update with a fresh standard Gaussian from the stream; the
/// increment is applied in R^d and the result wrapped back to the torus.
inline TorusPoint euler_step(const TorusPoint& x, const StepParams& p,
                             RngStream& rng) {
  std::array<double, kMaxDim> g{};
  const auto d = static_cast<std::size_t>(x.dim());
  rng.fill_gaussian({g.data(), d});
  return euler_step_with_noise(x, p, {g.data(), d});
}

/// Probability that the chain is killed on arrival at z. Strictly below 1
/// for bounded rates; zero exactly where the rate vanishes.
inline double kill_prob(const TorusPoint& z, const StepParams& p) {
  return -std::expm1(-p.gamma * p.model.kill_rate(z));
}

inline constexpr std::uint64_t kRebirthLoopCap = 1'000'000;

struct RebirthSample {
  TorusPoint point;
  std::uint64_t resurrections = 0;
  double accept_uniform = 0.0;  // the uniform that accepted `point`
};

/// Draws from the rebirth kernel with source measure mu: propose an Euler
/// move from x; on kill, repeatedly draw a resurrection atom from mu, move,
/// and retest until a proposal survives. Each retry consumes one atom draw,
/// d Gaussians and one uniform, in that order.
inline RebirthSample sample_rebirth(const TorusPoint& x,
                                    const DiscreteMeasure& mu,
                                    const StepParams& p, RngStream& rng) {
  if (mu.dim() != x.dim()) {
    throw std::invalid_argument("sample_rebirth: dimension mismatch");
  }
  RebirthSample out;
  TorusPoint proposal = euler_step(x, p, rng);
  double u = rng.uniform();
  if (u >= kill_prob(proposal, p)) {
    out.point = proposal;
    out.accept_uniform = u;
    return out;
  }
  for (std::uint64_t i = 1; i <= kRebirthLoopCap; ++i) {
    const TorusPoint& source = mu.sample(rng);
    proposal = euler_step(source, p, rng);
    u = rng.uniform();
    if (u >= kill_prob(proposal, p)) {
      out.point = proposal;
      out.resurrections = i;
      out.accept_uniform = u;
      return out;
    }
  }
  throw std::runtime_error(
      "sample_rebirth: retry cap hit; kill probability is too close to 1");
}

}  // namespace fv
