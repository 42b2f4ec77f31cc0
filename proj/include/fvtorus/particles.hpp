#pragma once

// The interacting N-particle chain: every slot performs a rebirth-kernel
// update whose resurrection measure is the *frozen* previous configuration,
// so the update stays well defined even if every particle dies at once.
// Also the synchronized two-system coupling used for contraction estimates.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "fvtorus/geometry.hpp"
#include "fvtorus/kernel.hpp"
#include "fvtorus/measure.hpp"
#include "fvtorus/rng.hpp"

namespace fv {

struct ParticleConfiguration {
  std::vector<TorusPoint> points;
  std::uint64_t step_index = 0;

  std::size_t size() const { return points.size(); }
  int dim() const { return points.front().dim(); }
  double time(double gamma) const {
    return gamma * static_cast<double>(step_index);
  }
};

inline ParticleConfiguration config_all_at(const TorusPoint& x, std::size_t n) {
  if (n == 0) throw std::invalid_argument("configuration needs >= 1 particle");
  ParticleConfiguration c;
  c.points.assign(n, x);
  return c;
}

inline ParticleConfiguration config_iid_uniform(std::size_t n, int dim,
                                                std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("configuration needs >= 1 particle");
  ParticleConfiguration c;
  c.points.reserve(n);
  std::array<double, kMaxDim> buf{};
  for (std::size_t slot = 0; slot < n; ++slot) {
    RngStream rng(seed, 0, slot, StreamId::kInit);
    for (int i = 0; i < dim; ++i) buf[static_cast<std::size_t>(i)] = rng.uniform();
    c.points.push_back(TorusPoint::wrap(
        std::span<const double>(buf.data(), static_cast<std::size_t>(dim))));
  }
  return c;
}

inline DiscreteMeasure empirical_measure(const ParticleConfiguration& c) {
  return DiscreteMeasure::uniform_atoms(c.points);
}

struct StepDiagnostics {
  std::uint64_t resurrections = 0;
};

/// One full update of the N-particle chain. Slot i draws from the rebirth
/// kernel at its own position, resurrecting (uniformly, own slot included)
/// onto the step-k configuration while building step k+1. Randomness is
/// keyed by (seed, step, slot), so any slot-parallel schedule would produce
/// the same result.
inline ParticleConfiguration particle_step(const ParticleConfiguration& cfg,
                                           const StepParams& p,
                                           std::uint64_t seed,
                                           StepDiagnostics* diag = nullptr) {
  const DiscreteMeasure frozen = empirical_measure(cfg);
  ParticleConfiguration next;
  next.points.resize(cfg.size());
  next.step_index = cfg.step_index + 1;
  std::uint64_t resurrections = 0;
  for (std::size_t slot = 0; slot < cfg.size(); ++slot) {
    RngStream rng(seed, cfg.step_index, slot, StreamId::kEvolve);
    RebirthSample s = sample_rebirth(cfg.points[slot], frozen, p, rng);
    next.points[slot] = s.point;
    resurrections += s.resurrections;
  }
  if (diag) diag->resurrections = resurrections;
  return next;
}

struct StepObservation {
  const ParticleConfiguration& config;
  std::uint64_t resurrections = 0;  // in the step that produced `config`
};

using ChainObserver = std::function<void(const StepObservation&)>;

struct ChainSummary {
  ParticleConfiguration final_config;
  std::uint64_t total_resurrections = 0;
  std::uint64_t steps = 0;
};

/// Applies n_steps particle updates; the observer (if any) sees the initial
/// configuration and every subsequent one.
inline ChainSummary run_chain(ParticleConfiguration initial,
                              const StepParams& p, std::uint64_t n_steps,
                              std::uint64_t seed,
                              const ChainObserver& observe = {}) {
  ChainSummary out;
  if (observe) observe({initial, 0});
  ParticleConfiguration cur = std::move(initial);
  for (std::uint64_t k = 0; k < n_steps; ++k) {
    StepDiagnostics diag;
    cur = particle_step(cur, p, seed, &diag);
    out.total_resurrections += diag.resurrections;
    if (observe) observe({cur, diag.resurrections});
  }
  out.final_config = std::move(cur);
  out.steps = n_steps;
  return out;
}

enum class CouplingMode { kSynchronous, kReflection };

/// Two configurations advanced with shared randomness: per (step, slot,
/// retry) one shared kill uniform, one shared resurrection index, and one
/// Gaussian vector that the second system either copies (synchronous) or
/// couples through the reflection-maximal rule (reflection): exact
/// coalescence with the overlap probability of the two proposal Gaussians,
/// reflection across the mean gap otherwise.
struct CoupledPair {
  ParticleConfiguration first;
  ParticleConfiguration second;
  CouplingMode mode = CouplingMode::kReflection;
  std::uint64_t seed = 0;

  CoupledPair(ParticleConfiguration a, ParticleConfiguration b,
              CouplingMode mode_in, std::uint64_t seed_in)
      : first(std::move(a)), second(std::move(b)), mode(mode_in), seed(seed_in) {
    if (first.size() != second.size() || first.dim() != second.dim()) {
      throw std::invalid_argument("CoupledPair: mismatched configurations");
    }
    if (first.step_index != second.step_index) {
      throw std::invalid_argument("CoupledPair: step indices differ");
    }
  }
};

namespace detail {

// Partner noise for one coupled Euler proposal. Synchronous mode copies g.
// Reflection mode implements the reflection-maximal coupling of the two
// Gaussian proposal laws: with the maximal overlap probability the second
// proposal coalesces onto the first (the caller then copies the first
// proposal bit for bit); otherwise g is reflected across the hyperplane
// orthogonal to the gap between the proposal means (minimal-image position
// difference plus drift difference). A deterministic reflection alone never
// produces exact meetings in discrete time, so the paired distance would
// stall at a positive floor instead of contracting.
// Returns true when the proposals coalesce. Consumes one uniform from the
// stream in the reflection branch.
inline bool couple_noise(CouplingMode mode, const StepParams& p,
                         const TorusPoint& x, const TorusPoint& y,
                         std::span<const double> g, RngStream& rng,
                         std::span<double> out) {
  const auto d = g.size();
  if (mode == CouplingMode::kSynchronous) {
    for (std::size_t i = 0; i < d; ++i) out[i] = g[i];
    return false;
  }
  std::array<double, kMaxDim> gap{};
  minimal_image(x, y, {gap.data(), d});
  std::array<double, kMaxDim> bx{}, by{};
  p.model.drift(x, {bx.data(), d});
  p.model.drift(y, {by.data(), d});
  const double sg = std::sqrt(p.gamma);
  double norm2 = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    gap[i] = (gap[i] + p.gamma * (bx[i] - by[i])) / sg;  // mean gap in noise units
    norm2 += gap[i] * gap[i];
  }
  if (norm2 < 1e-24) {  // coincident sources: synchronous fallback
    for (std::size_t i = 0; i < d; ++i) out[i] = g[i];
    return false;
  }
  const double znorm = std::sqrt(norm2);
  double along = 0.0;
  for (std::size_t i = 0; i < d; ++i) along += gap[i] * g[i];
  along /= znorm;
  // coalesce iff u * phi(along) <= phi(along + |z|)
  const double log_u = std::log(1.0 - rng.uniform());  // in (-inf, 0]
  if (log_u <= -znorm * along - 0.5 * norm2) return true;
  const double scale = 2.0 * along / znorm;
  for (std::size_t i = 0; i < d; ++i) out[i] = g[i] - scale * gap[i];
  return false;
}

}  // namespace detail

/// Advances both systems one step. The per-slot retry loops run in lockstep
/// on a single shared stream: a system that has already accepted keeps
/// consuming the shared draws until the other one accepts too, which keeps
/// the randomness aligned between the systems.
inline void coupled_step(CoupledPair& pair, const StepParams& p) {
  const std::size_t n = pair.first.size();
  const auto d = static_cast<std::size_t>(pair.first.dim());
  const std::uint64_t step = pair.first.step_index;

  const std::vector<TorusPoint>& prev_x = pair.first.points;
  const std::vector<TorusPoint>& prev_y = pair.second.points;
  std::vector<TorusPoint> next_x(n), next_y(n);

  std::array<double, kMaxDim> g{}, gy{};
  for (std::size_t slot = 0; slot < n; ++slot) {
    RngStream rng(pair.seed, step, slot, StreamId::kCoupled);
    const TorusPoint* src_x = &prev_x[slot];
    const TorusPoint* src_y = &prev_y[slot];
    bool done_x = false, done_y = false;
    for (std::uint64_t retry = 0; retry <= kRebirthLoopCap; ++retry) {
      if (retry > 0) {
        const std::uint64_t j = rng.pick(n);  // shared resurrection slot
        src_x = &prev_x[j];
        src_y = &prev_y[j];
      }
      rng.fill_gaussian({g.data(), d});
      const bool coalesce = detail::couple_noise(pair.mode, p, *src_x, *src_y,
                                                 {g.data(), d}, rng,
                                                 {gy.data(), d});
      const TorusPoint prop_x = euler_step_with_noise(*src_x, p, {g.data(), d});
      const TorusPoint prop_y =
          coalesce ? prop_x : euler_step_with_noise(*src_y, p, {gy.data(), d});
      const double u = rng.uniform();  // shared kill test
      if (!done_x && u >= kill_prob(prop_x, p)) {
        next_x[slot] = prop_x;
        done_x = true;
      }
      if (!done_y && u >= kill_prob(prop_y, p)) {
        next_y[slot] = prop_y;
        done_y = true;
      }
      if (done_x && done_y) break;
      if (retry == kRebirthLoopCap) {
        throw std::runtime_error("coupled_step: retry cap hit");
      }
    }
  }
  pair.first.points = std::move(next_x);
  pair.second.points = std::move(next_y);
  pair.first.step_index = step + 1;
  pair.second.step_index = step + 1;
}

}  // namespace fv
