#pragma once

// Arithmetic on the flat torus with unit period per coordinate, plus the
// concave equivalent metric used for contraction estimates.

#include <array>
#include <cmath>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>

namespace fv {

inline constexpr int kMaxDim = 8;

/// A point of the d-dimensional flat torus, each coordinate in [0,1).
/// Construction wraps; arithmetic that leaves the fundamental domain must
/// go back through wrap().
class TorusPoint {
 public:
  TorusPoint() = default;

  static TorusPoint wrap(std::span<const double> raw) {
    if (raw.empty() || raw.size() > static_cast<std::size_t>(kMaxDim)) {
      throw std::invalid_argument("TorusPoint: dimension must be in [1, " +
                                  std::to_string(kMaxDim) + "]");
    }
    TorusPoint p;
    p.dim_ = static_cast<int>(raw.size());
    for (int i = 0; i < p.dim_; ++i) {
      const double v = raw[static_cast<std::size_t>(i)];
      if (!std::isfinite(v)) {
        throw std::invalid_argument("TorusPoint: non-finite coordinate");
      }
      double r = v - std::floor(v);
      if (r >= 1.0) r = 0.0;  // rounding at the seam maps to 0
      p.c_[static_cast<std::size_t>(i)] = r;
    }
    return p;
  }

  static TorusPoint wrap(std::initializer_list<double> raw) {
    return wrap(std::span<const double>(raw.begin(), raw.size()));
  }

  int dim() const { return dim_; }

  double operator[](int i) const { return c_[static_cast<std::size_t>(i)]; }

  std::span<const double> coords() const {
    return {c_.data(), static_cast<std::size_t>(dim_)};
  }

  bool operator==(const TorusPoint& o) const {
    if (dim_ != o.dim_) return false;
    for (int i = 0; i < dim_; ++i) {
      if (c_[static_cast<std::size_t>(i)] != o.c_[static_cast<std::size_t>(i)])
        return false;
    }
    return true;
  }

 private:
  std::array<double, kMaxDim> c_{};
  int dim_ = 0;
};

inline TorusPoint wrap(std::span<const double> raw) { return TorusPoint::wrap(raw); }
inline TorusPoint wrap(std::initializer_list<double> raw) { return TorusPoint::wrap(raw); }

inline void check_same_dim(const TorusPoint& x, const TorusPoint& y) {
  if (x.dim() != y.dim()) {
    throw std::invalid_argument("torus points have mismatched dimensions");
  }
}

/// Signed minimal-image difference x - y, coordinatewise in [-1/2, 1/2).
inline void minimal_image(const TorusPoint& x, const TorusPoint& y,
                          std::span<double> out) {
  check_same_dim(x, y);
  for (int i = 0; i < x.dim(); ++i) {
    double d = x[i] - y[i];
    if (d >= 0.5) d -= 1.0;
    if (d < -0.5) d += 1.0;
    out[static_cast<std::size_t>(i)] = d;
  }
}

/// Euclidean length of the minimal-image difference. Bounded by sqrt(d)/2.
inline double torus_dist(const TorusPoint& x, const TorusPoint& y) {
  check_same_dim(x, y);
  double s = 0.0;
  for (int i = 0; i < x.dim(); ++i) {
    double d = std::fabs(x[i] - y[i]);
    if (d > 0.5) d = 1.0 - d;
    s += d * d;
  }
  return std::sqrt(s);
}

/// The concave metric rho(x,y) = (1 - exp(-a |x-y|)) / a, with |.| the torus
/// Euclidean distance. Equivalent to |.|:  beta |x-y| <= rho <= |x-y|, where
/// beta = 2 (1 - exp(-a sqrt(d)/2)) / (a sqrt(d)).
struct RhoMetric {
  double a = 1.0;
  int dim = 1;

  RhoMetric() = default;
  RhoMetric(double a_in, int dim_in) : a(a_in), dim(dim_in) {
    if (!(a > 0.0)) throw std::invalid_argument("RhoMetric: a must be > 0");
    if (dim < 1 || dim > kMaxDim) {
      throw std::invalid_argument("RhoMetric: bad dimension");
    }
  }

  double beta() const {
    const double sd = std::sqrt(static_cast<double>(dim));
    return 2.0 * (1.0 - std::exp(-a * sd / 2.0)) / (a * sd);
  }
};

inline double rho(const RhoMetric& m, const TorusPoint& x, const TorusPoint& y) {
  return (1.0 - std::exp(-m.a * torus_dist(x, y))) / m.a;
}

/// Slot-wise sum of rho over two equal-length particle position lists.
inline double rho_sum(const RhoMetric& m, std::span<const TorusPoint> xs,
                      std::span<const TorusPoint> ys) {
  if (xs.size() != ys.size()) {
    throw std::invalid_argument("rho_sum: configurations differ in size");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) s += rho(m, xs[i], ys[i]);
  return s;
}

}  // namespace fv
