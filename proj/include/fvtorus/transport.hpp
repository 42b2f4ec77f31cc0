#pragma once

// Wasserstein distances between atomic measures on the torus.
//
// Two independent routes are kept side by side on purpose:
//  * w1_circle: the exact O(n log n) reduction for d = 1 (shift the CDF
//    difference by its weighted median and integrate);
//  * lp_oracle: an exact min-cost transport solve for small supports and any
//    ground cost, used as ground truth for the fast route.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "fvtorus/geometry.hpp"
#include "fvtorus/measure.hpp"
#include "fvtorus/stats.hpp"

namespace fv {

/// Exact 1-Wasserstein distance between atomic measures on the circle of
/// circumference 1 (geodesic ground distance).
inline double w1_circle(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  if (mu.dim() != 1 || nu.dim() != 1) {
    throw std::invalid_argument("w1_circle: requires d = 1");
  }
  struct Event {
    double pos;
    double delta;  // +weight for mu, -weight for nu
  };
  std::vector<Event> ev;
  ev.reserve(mu.size() + nu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    ev.push_back({mu.atom(i)[0], mu.weight(i)});
  }
  for (std::size_t i = 0; i < nu.size(); ++i) {
    ev.push_back({nu.atom(i)[0], -nu.weight(i)});
  }
  std::sort(ev.begin(), ev.end(),
            [](const Event& a, const Event& b) { return a.pos < b.pos; });

  // Piecewise-constant F - G between consecutive distinct atom positions,
  // including the wrap-around interval (where it is zero by mass balance).
  std::vector<double> values;
  std::vector<double> lengths;
  values.reserve(ev.size() + 1);
  lengths.reserve(ev.size() + 1);
  double cum = 0.0;
  std::size_t i = 0;
  const double first_pos = ev.front().pos;
  while (i < ev.size()) {
    const double pos = ev[i].pos;
    while (i < ev.size() && ev[i].pos == pos) {
      cum += ev[i].delta;
      ++i;
    }
    const double next = (i < ev.size()) ? ev[i].pos : first_pos + 1.0;
    if (next > pos) {
      values.push_back(cum);
      lengths.push_back(next - pos);
    }
  }
  const double shift = weighted_median(values, lengths);
  double w = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    w += lengths[k] * std::fabs(values[k] - shift);
  }
  return w;
}

using GroundCost = std::function<double(const TorusPoint&, const TorusPoint&)>;

inline constexpr std::size_t kLpAtomGuard = 256;

/// Exact optimal transport cost between two small atomic measures via
/// successive shortest augmenting paths with node potentials (uncapacitated
/// bipartite min-cost flow). Ground cost defaults to the torus distance.
inline double lp_oracle(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                        const GroundCost& ground = {}) {
  const std::size_t n = mu.size();
  const std::size_t m = nu.size();
  if (n + m > kLpAtomGuard) {
    throw std::invalid_argument("lp_oracle: support too large");
  }
  if (mu.dim() != nu.dim()) {
    throw std::invalid_argument("lp_oracle: dimension mismatch");
  }
  std::vector<double> cost(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      cost[i * m + j] = ground ? ground(mu.atom(i), nu.atom(j))
                               : torus_dist(mu.atom(i), nu.atom(j));
    }
  }

  std::vector<double> flow(n * m, 0.0);
  std::vector<double> rem_a(mu.weights().begin(), mu.weights().end());
  std::vector<double> rem_b(nu.weights().begin(), nu.weights().end());
  // Node potentials keep all residual reduced costs nonnegative so plain
  // Dijkstra stays valid. Node ids: sources [0, n), sinks [n, n + m).
  std::vector<double> pot(n + m, 0.0);
  constexpr double kInf = std::numeric_limits<double>::infinity();
  constexpr double kMassEps = 1e-13;
  constexpr double kFlowEps = 1e-15;

  std::vector<double> dist(n + m);
  std::vector<int> parent(n + m);
  std::vector<char> done(n + m);

  const std::size_t max_rounds = 8 * (n + m) + 16;
  for (std::size_t round = 0; round < max_rounds; ++round) {
    double supply_left = 0.0;
    for (double a : rem_a) supply_left += a;
    if (supply_left <= kMassEps) break;

    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(parent.begin(), parent.end(), -1);
    std::fill(done.begin(), done.end(), char(0));
    for (std::size_t i = 0; i < n; ++i) {
      if (rem_a[i] > kMassEps) dist[i] = 0.0;
    }
    // Dense Dijkstra over the residual graph.
    for (std::size_t it = 0; it < n + m; ++it) {
      std::size_t best = n + m;
      double bd = kInf;
      for (std::size_t v = 0; v < n + m; ++v) {
        if (!done[v] && dist[v] < bd) {
          bd = dist[v];
          best = v;
        }
      }
      if (best == n + m) break;
      done[best] = 1;
      if (best < n) {
        const std::size_t i = best;
        for (std::size_t j = 0; j < m; ++j) {
          const double rc = cost[i * m + j] + pot[i] - pot[n + j];
          const double nd = dist[i] + std::max(rc, 0.0);
          if (nd < dist[n + j]) {
            dist[n + j] = nd;
            parent[n + j] = static_cast<int>(i);
          }
        }
      } else {
        const std::size_t j = best - n;
        for (std::size_t i = 0; i < n; ++i) {
          if (flow[i * m + j] > kFlowEps) {
            const double rc = pot[n + j] - pot[i] - cost[i * m + j];
            const double nd = dist[n + j] + std::max(rc, 0.0);
            if (nd < dist[i]) {
              dist[i] = nd;
              parent[i] = static_cast<int>(n + j);
            }
          }
        }
      }
    }

    std::size_t target = n + m;
    double td = kInf;
    for (std::size_t j = 0; j < m; ++j) {
      if (rem_b[j] > kMassEps && dist[n + j] < td) {
        td = dist[n + j];
        target = n + j;
      }
    }
    if (target == n + m) {
      throw std::runtime_error("lp_oracle: no augmenting path (mass mismatch)");
    }

    // Bottleneck along the path.
    double delta = rem_b[target - n];
    for (std::size_t v = target; parent[v] >= 0;) {
      const std::size_t p = static_cast<std::size_t>(parent[v]);
      if (v >= n) {
        // forward arc p -> v, no capacity
      } else {
        delta = std::min(delta, flow[v * m + (p - n)]);  // backward arc
      }
      v = p;
      if (parent[v] < 0) delta = std::min(delta, rem_a[v]);
    }
    if (!(delta > 0.0)) {
      throw std::runtime_error("lp_oracle: degenerate augmentation");
    }

    std::size_t head = target;
    while (parent[head] >= 0) {
      const std::size_t p = static_cast<std::size_t>(parent[head]);
      if (head >= n) flow[p * m + (head - n)] += delta;
      else flow[head * m + (p - n)] -= delta;
      head = p;
    }
    rem_a[head] -= delta;
    rem_b[target - n] -= delta;

    for (std::size_t v = 0; v < n + m; ++v) {
      if (dist[v] < kInf) pot[v] += std::min(dist[v], td);
      else pot[v] += td;
    }
  }

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) total += flow[i * m + j] * cost[i * m + j];
  }
  return total;
}

/// Wasserstein distance under the concave metric rho. Exact on small
/// supports (LP with rho ground cost); otherwise, for d = 1, returns the
/// interval [beta W1, W1] implied by the metric equivalence.
struct WRhoResult {
  double lower = 0.0;
  double upper = 0.0;
  bool exact = false;
  double value() const { return 0.5 * (lower + upper); }
};

inline WRhoResult w_rho(const RhoMetric& metric, const DiscreteMeasure& mu,
                        const DiscreteMeasure& nu) {
  WRhoResult r;
  if (mu.size() + nu.size() <= kLpAtomGuard) {
    const double v = lp_oracle(mu, nu, [&](const TorusPoint& a, const TorusPoint& b) {
      return rho(metric, a, b);
    });
    r.lower = r.upper = v;
    r.exact = true;
    return r;
  }
  if (mu.dim() != 1) {
    throw std::invalid_argument("w_rho: large supports handled only for d = 1");
  }
  const double w1 = w1_circle(mu, nu);
  r.lower = metric.beta() * w1;
  r.upper = w1;
  r.exact = false;
  return r;
}

/// Rate at which an N-sample empirical measure approaches its law in W1.
inline double alpha_rate(long n, int dim) {
  if (n < 1 || dim < 1) throw std::invalid_argument("alpha_rate: bad args");
  const double nd = static_cast<double>(n);
  if (dim == 1) return 1.0 / std::sqrt(nd);
  if (dim == 2) return std::log1p(nd) / std::sqrt(nd);
  return std::pow(nd, -1.0 / static_cast<double>(dim));
}

}  // namespace fv
