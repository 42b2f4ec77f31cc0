#pragma once

// Deterministic d = 1 reference solutions on a uniform grid over [0,1):
// a wrapped-Gaussian discretization of the one-step kernel, the normalized
// survival flow it induces, its fixed point (the timestep-gamma QSD), and a
// small-timestep extrapolant standing in for the zero-timestep limit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fvtorus/geometry.hpp"
#include "fvtorus/measure.hpp"
#include "fvtorus/model.hpp"
#include "fvtorus/transport.hpp"

namespace fv {

class GridDensity {
 public:
  GridDensity() = default;

  static GridDensity uniform(int n_cells) {
    check_cells(n_cells);
    GridDensity g;
    g.w_.assign(static_cast<std::size_t>(n_cells),
                1.0 / static_cast<double>(n_cells));
    return g;
  }

  /// Nonnegative weights, normalized to total mass one.
  static GridDensity from_weights(std::vector<double> w) {
    check_cells(static_cast<int>(w.size()));
    double total = 0.0;
    for (double v : w) {
      if (!(v >= 0.0)) throw std::invalid_argument("GridDensity: negative weight");
      total += v;
    }
    if (!(total > 0.0)) throw std::invalid_argument("GridDensity: zero mass");
    GridDensity g;
    g.w_ = std::move(w);
    for (double& v : g.w_) v /= total;
    return g;
  }

  int n_cells() const { return static_cast<int>(w_.size()); }
  double cell_width() const { return 1.0 / static_cast<double>(w_.size()); }
  double cell_center(int j) const {
    return (static_cast<double>(j) + 0.5) * cell_width();
  }
  std::span<const double> weights() const { return w_; }
  double weight(int j) const { return w_[static_cast<std::size_t>(j)]; }

  double l1_distance(const GridDensity& o) const {
    if (o.n_cells() != n_cells()) {
      throw std::invalid_argument("GridDensity: size mismatch");
    }
    double s = 0.0;
    for (std::size_t j = 0; j < w_.size(); ++j) s += std::fabs(w_[j] - o.w_[j]);
    return s;
  }

  /// Mean of f over the density, with f evaluated at cell centers.
  template <class F>
  double integrate(F&& f) const {
    double s = 0.0;
    for (int j = 0; j < n_cells(); ++j) {
      s += weight(j) * f(cell_center(j));
    }
    return s;
  }

 private:
  static void check_cells(int n) {
    if (n < 2) throw std::invalid_argument("GridDensity: need >= 2 cells");
  }
  std::vector<double> w_;
};

inline DiscreteMeasure to_measure(const GridDensity& g) {
  std::vector<TorusPoint> atoms;
  std::vector<double> w;
  atoms.reserve(static_cast<std::size_t>(g.n_cells()));
  for (int j = 0; j < g.n_cells(); ++j) {
    if (g.weight(j) > 0.0) {
      atoms.push_back(TorusPoint::wrap({g.cell_center(j)}));
      w.push_back(g.weight(j));
    }
  }
  return DiscreteMeasure::from_atoms(std::move(atoms), std::move(w));
}

inline double w1_grid(const GridDensity& a, const GridDensity& b) {
  return w1_circle(to_measure(a), to_measure(b));
}

/// Row-stochastic matrix: entry (i, j) is the wrapped-Gaussian transition
/// mass from the center of cell i into cell j in one Euler update.
struct GridKernel {
  int n_cells = 0;
  double gamma = 0.0;
  std::string model_id;
  std::vector<double> rows;  // row-major, n_cells * n_cells

  double entry(int i, int j) const {
    return rows[static_cast<std::size_t>(i) * static_cast<std::size_t>(n_cells) +
                static_cast<std::size_t>(j)];
  }
};

namespace detail {
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
}  // namespace detail

/// Builds the one-step grid kernel for a d = 1 model. Integer images of each
/// cell within 6 standard deviations of the Gaussian mean are summed (at
/// least one image on each side); rows are renormalized. Timesteps with
/// sqrt(gamma) below two cell widths are refused as undersampled.
inline GridKernel build_grid_kernel(const ModelSpec& model, double gamma,
                                    int n_cells) {
  if (model.dim != 1) throw std::invalid_argument("grid kernel: requires d = 1");
  if (n_cells < 64) throw std::invalid_argument("grid kernel: need >= 64 cells");
  if (!(gamma > 0.0)) throw std::invalid_argument("grid kernel: gamma <= 0");
  const double sigma = std::sqrt(gamma);
  const double width = 1.0 / static_cast<double>(n_cells);
  if (sigma < 2.0 * width) {
    throw std::invalid_argument(
        "grid kernel: sqrt(gamma) below two cell widths (undersampled)");
  }

  GridKernel k;
  k.n_cells = n_cells;
  k.gamma = gamma;
  k.model_id = model.id;
  k.rows.assign(static_cast<std::size_t>(n_cells) * static_cast<std::size_t>(n_cells), 0.0);

  double bval = 0.0;
  std::span<double> bspan(&bval, 1);
  for (int i = 0; i < n_cells; ++i) {
    const double x = (static_cast<double>(i) + 0.5) * width;
    model.drift(TorusPoint::wrap({x}), bspan);
    const double mean = x + gamma * bval;
    const int k_lo = static_cast<int>(std::floor(mean - 6.0 * sigma)) - 1;
    const int k_hi = static_cast<int>(std::ceil(mean + 6.0 * sigma)) + 1;
    double* row = &k.rows[static_cast<std::size_t>(i) * static_cast<std::size_t>(n_cells)];
    double total = 0.0;
    for (int j = 0; j < n_cells; ++j) {
      const double l = static_cast<double>(j) * width;
      const double r = l + width;
      double mass = 0.0;
      for (int img = k_lo; img <= k_hi; ++img) {
        mass += detail::normal_cdf((r + img - mean) / sigma) -
                detail::normal_cdf((l + img - mean) / sigma);
      }
      row[j] = mass;
      total += mass;
    }
    for (int j = 0; j < n_cells; ++j) row[j] /= total;
  }
  return k;
}

/// density-vector times kernel (one plain propagation step).
inline GridDensity kernel_propagate(const GridDensity& eta, const GridKernel& k) {
  const int n = k.n_cells;
  if (eta.n_cells() != n) throw std::invalid_argument("propagate: size mismatch");
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    const double w = eta.weight(i);
    if (w == 0.0) continue;
    const double* row = &k.rows[static_cast<std::size_t>(i) * static_cast<std::size_t>(n)];
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j)] += w * row[j];
  }
  return GridDensity::from_weights(std::move(out));
}

struct NonlinearStepResult {
  GridDensity density;
  double survival = 1.0;  // mass surviving the kill test, before renormalizing
};

/// One step of the conditioned flow: propagate, weight each cell by its
/// survival probability, renormalize to unit mass.
inline NonlinearStepResult nonlinear_step(const GridDensity& eta,
                                          const GridKernel& k,
                                          const ModelSpec& model, double gamma) {
  const int n = k.n_cells;
  if (eta.n_cells() != n) throw std::invalid_argument("nonlinear_step: size mismatch");
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    const double w = eta.weight(i);
    if (w == 0.0) continue;
    const double* row = &k.rows[static_cast<std::size_t>(i) * static_cast<std::size_t>(n)];
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j)] += w * row[j];
  }
  double survival = 0.0;
  for (int j = 0; j < n; ++j) {
    const double x = (static_cast<double>(j) + 0.5) / static_cast<double>(n);
    const double keep = std::exp(-gamma * model.kill_rate(TorusPoint::wrap({x})));
    out[static_cast<std::size_t>(j)] *= keep;
    survival += out[static_cast<std::size_t>(j)];
  }
  if (survival < 1e-300) {
    throw std::runtime_error("nonlinear_step: surviving mass underflow");
  }
  NonlinearStepResult r;
  r.survival = survival;
  for (double& v : out) v /= survival;
  r.density = GridDensity::from_weights(std::move(out));
  return r;
}

/// Runs m nonlinear steps from eta0.
inline GridDensity conditioned_flow(GridDensity eta, const GridKernel& k,
                                    const ModelSpec& model, double gamma,
                                    int m_steps) {
  for (int s = 0; s < m_steps; ++s) {
    eta = nonlinear_step(eta, k, model, gamma).density;
  }
  return eta;
}

struct QsdResult {
  GridDensity density;
  double survival_factor = 1.0;  // principal eigenvalue of the killed kernel
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;  // last L1 change
};

/// Fixed point of the conditioned flow by power iteration on the killed
/// kernel, normalized each step. Stops when successive iterates move less
/// than tol in L1.
inline QsdResult qsd_power_iteration(const GridKernel& k, const ModelSpec& model,
                                     double gamma, double tol = 1e-12,
                                     int max_iter = 200000,
                                     const GridDensity* init = nullptr) {
  if (!(tol > 0.0)) throw std::invalid_argument("qsd: tol must be > 0");
  QsdResult r;
  GridDensity cur = init ? *init : GridDensity::uniform(k.n_cells);
  for (int it = 1; it <= max_iter; ++it) {
    NonlinearStepResult step = nonlinear_step(cur, k, model, gamma);
    r.residual = step.density.l1_distance(cur);
    r.survival_factor = step.survival;
    cur = std::move(step.density);
    r.iterations = it;
    if (r.residual < tol) {
      r.converged = true;
      break;
    }
  }
  r.density = std::move(cur);
  return r;
}

struct ExtrapolationResult {
  GridDensity density;
  double error_bar_w1 = 0.0;  // W1 gap between the last two table levels
  double error_bar_l1 = 0.0;
  int levels = 0;
};

/// Richardson extrapolation in sqrt(gamma) of the cellwise QSD weights over
/// a geometric gamma ladder (at least three rungs). Richardson overshoot can
/// push thin cells slightly negative; those are clipped before the final
/// renormalization and the effect shows up in the error bar.
inline ExtrapolationResult extrapolate_qsd(
    std::vector<std::pair<double, GridDensity>> ladder) {
  if (ladder.size() < 3) {
    throw std::invalid_argument("extrapolate_qsd: need >= 3 gamma values");
  }
  std::sort(ladder.begin(), ladder.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  const int n = ladder.front().second.n_cells();
  for (const auto& [g, d] : ladder) {
    if (!(g > 0.0)) throw std::invalid_argument("extrapolate_qsd: gamma <= 0");
    if (d.n_cells() != n) {
      throw std::invalid_argument("extrapolate_qsd: grids differ in size");
    }
  }
  const double ratio = ladder[0].first / ladder[1].first;
  if (!(ratio > 1.0)) {
    throw std::invalid_argument("extrapolate_qsd: gammas must be distinct");
  }
  for (std::size_t k = 1; k + 1 < ladder.size(); ++k) {
    const double rk = ladder[k].first / ladder[k + 1].first;
    if (std::fabs(rk - ratio) > 1e-6 * ratio) {
      throw std::invalid_argument("extrapolate_qsd: ladder is not geometric");
    }
  }

  const std::size_t levels = ladder.size();
  const double s = std::sqrt(ratio);  // step ratio in h = sqrt(gamma)
  std::vector<std::vector<double>> table(levels);
  for (std::size_t i = 0; i < levels; ++i) {
    auto w = ladder[i].second.weights();
    table[i].assign(w.begin(), w.end());
  }
  std::vector<double> prev_level = table.back();
  for (std::size_t j = 1; j < levels; ++j) {
    const double denom = std::pow(s, static_cast<double>(j)) - 1.0;
    for (std::size_t i = levels - 1; i >= j; --i) {
      for (std::size_t c = 0; c < table[i].size(); ++c) {
        table[i][c] += (table[i][c] - table[i - 1][c]) / denom;
      }
      if (i == j) break;
    }
    if (j == levels - 2) prev_level = table.back();
  }

  auto clip_normalize = [](std::vector<double> w) {
    for (double& v : w) v = std::max(v, 0.0);
    return GridDensity::from_weights(std::move(w));
  };
  ExtrapolationResult r;
  r.levels = static_cast<int>(levels);
  r.density = clip_normalize(table.back());
  const GridDensity prev = clip_normalize(std::move(prev_level));
  r.error_bar_w1 = w1_grid(r.density, prev);
  r.error_bar_l1 = r.density.l1_distance(prev);
  return r;
}

// --- optional binary cache for grid kernels -------------------------------

inline constexpr std::uint32_t kKernelCacheMagic = 0x4656474Bu;  // "FVGK"

inline void save_kernel(const std::filesystem::path& path, const GridKernel& k) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open kernel cache for writing");
  auto put = [&](const void* p, std::size_t bytes) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(bytes));
  };
  const std::uint32_t magic = kKernelCacheMagic;
  const std::uint32_t n = static_cast<std::uint32_t>(k.n_cells);
  const std::uint32_t idlen = static_cast<std::uint32_t>(k.model_id.size());
  put(&magic, 4);
  put(&n, 4);
  put(&k.gamma, 8);
  put(&idlen, 4);
  put(k.model_id.data(), idlen);
  put(k.rows.data(), k.rows.size() * sizeof(double));
}

inline std::optional<GridKernel> load_kernel(const std::filesystem::path& path,
                                             const std::string& model_id,
                                             double gamma, int n_cells) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  auto get = [&](void* p, std::size_t bytes) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(bytes));
    return static_cast<bool>(in);
  };
  std::uint32_t magic = 0, n = 0, idlen = 0;
  double g = 0.0;
  if (!get(&magic, 4) || magic != kKernelCacheMagic) return std::nullopt;
  if (!get(&n, 4) || !get(&g, 8) || !get(&idlen, 4)) return std::nullopt;
  std::string id(idlen, '\0');
  if (idlen > 0 && !get(id.data(), idlen)) return std::nullopt;
  if (static_cast<int>(n) != n_cells || g != gamma || id != model_id) {
    return std::nullopt;
  }
  GridKernel k;
  k.n_cells = static_cast<int>(n);
  k.gamma = g;
  k.model_id = id;
  k.rows.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  if (!get(k.rows.data(), k.rows.size() * sizeof(double))) return std::nullopt;
  return k;
}

/// Uses `cache_dir` when provided: loads a matching cached kernel or builds
/// and stores one, keyed by (model id hash, gamma, n_cells).
inline GridKernel load_or_build_kernel(const std::optional<std::filesystem::path>& cache_dir,
                                       const ModelSpec& model, double gamma,
                                       int n_cells) {
  if (!cache_dir) return build_grid_kernel(model, gamma, n_cells);
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a over the model id
  for (unsigned char c : model.id) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char name[96];
  std::snprintf(name, sizeof(name), "kernel_%016llx_%.17g_%d.bin",
                static_cast<unsigned long long>(h), gamma, n_cells);
  const std::filesystem::path path = *cache_dir / name;
  if (auto cached = load_kernel(path, model.id, gamma, n_cells)) return *cached;
  GridKernel k = build_grid_kernel(model, gamma, n_cells);
  std::filesystem::create_directories(*cache_dir);
  save_kernel(path, k);
  return k;
}

}  // namespace fv
