#pragma once

// Weighted atomic measures on the torus: empirical measures of particle
// configurations, grid densities converted to atoms, test fixtures.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "fvtorus/geometry.hpp"
#include "fvtorus/rng.hpp"

namespace fv {

class DiscreteMeasure {
 public:
  /// Atoms with positive weights; weights are normalized to sum to one.
  static DiscreteMeasure from_atoms(std::vector<TorusPoint> atoms,
                                    std::vector<double> weights) {
    if (atoms.empty() || atoms.size() != weights.size()) {
      throw std::invalid_argument("DiscreteMeasure: bad atom/weight layout");
    }
    const int d = atoms.front().dim();
    double total = 0.0;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      if (atoms[i].dim() != d) {
        throw std::invalid_argument("DiscreteMeasure: mixed dimensions");
      }
      if (!(weights[i] > 0.0)) {
        throw std::invalid_argument("DiscreteMeasure: weights must be > 0");
      }
      total += weights[i];
    }
    DiscreteMeasure m;
    m.atoms_ = std::move(atoms);
    m.w_ = std::move(weights);
    m.cdf_.resize(m.w_.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < m.w_.size(); ++i) {
      m.w_[i] /= total;
      acc += m.w_[i];
      m.cdf_[i] = acc;
    }
    m.cdf_.back() = 1.0;
    return m;
  }

  static DiscreteMeasure uniform_atoms(std::vector<TorusPoint> atoms) {
    std::vector<double> w(atoms.size(), 1.0);
    return from_atoms(std::move(atoms), std::move(w));
  }

  static DiscreteMeasure point_mass(const TorusPoint& x) {
    return uniform_atoms({x});
  }

  std::size_t size() const { return atoms_.size(); }
  int dim() const { return atoms_.front().dim(); }
  const TorusPoint& atom(std::size_t i) const { return atoms_[i]; }
  double weight(std::size_t i) const { return w_[i]; }
  std::span<const TorusPoint> atoms() const { return atoms_; }
  std::span<const double> weights() const { return w_; }

  /// Draws one atom; consumes exactly one uniform from the stream.
  const TorusPoint& sample(RngStream& rng) const {
    return atoms_[sample_index(rng.uniform())];
  }

  std::size_t sample_index(double u01) const {
    std::size_t lo = 0, hi = cdf_.size() - 1;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (cdf_[mid] <= u01) lo = mid + 1;
      else hi = mid;
    }
    return lo;
  }

 private:
  std::vector<TorusPoint> atoms_;
  std::vector<double> w_;
  std::vector<double> cdf_;
};

}  // namespace fv
