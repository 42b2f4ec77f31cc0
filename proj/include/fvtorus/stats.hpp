#pragma once

// Small statistical toolbox shared by tests, diagnostics and experiments.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace fv {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;  // standard error of the mean
  std::size_t n = 0;
};

inline MeanSe mean_se(std::span<const double> xs) {
  MeanSe r;
  r.n = xs.size();
  if (r.n == 0) return r;
  double s = 0.0;
  for (double x : xs) s += x;
  r.mean = s / static_cast<double>(r.n);
  if (r.n > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.se = std::sqrt(ss / static_cast<double>(r.n - 1) /
                     static_cast<double>(r.n));
  }
  return r;
}

/// Two-sample Kolmogorov-Smirnov statistic sup_t |F(t) - G(t)|.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double t = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= t) ++i;
    while (j < b.size() && b[j] <= t) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / na -
                              static_cast<double>(j) / nb));
  }
  return d;
}

/// Asymptotic two-sample KS critical value at significance level alpha.
inline double ks_critical(double alpha, std::size_t n, std::size_t m) {
  const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  return c * std::sqrt(static_cast<double>(n + m) /
                       (static_cast<double>(n) * static_cast<double>(m)));
}

/// Regularized upper incomplete gamma Q(a, x) (series / continued fraction).
inline double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_q: bad args");
  if (x == 0.0) return 1.0;
  const double lg = std::lgamma(a);
  if (x < a + 1.0) {
    // P(a,x) by series, Q = 1 - P
    double term = 1.0 / a;
    double sum = term;
    double ap = a;
    for (int k = 0; k < 500; ++k) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::fabs(term) < std::fabs(sum) * 1e-16) break;
    }
    const double p = sum * std::exp(-x + a * std::log(x) - lg);
    return 1.0 - p;
  }
  // Lentz continued fraction for Q
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int k = 1; k < 500; ++k) {
    const double an = -static_cast<double>(k) * (static_cast<double>(k) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - lg) * h;
}

struct Chi2Result {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
};

/// Pearson chi-square goodness of fit; expected counts must be positive.
inline Chi2Result chi2_gof(std::span<const double> observed,
                           std::span<const double> expected) {
  if (observed.size() != expected.size() || observed.size() < 2) {
    throw std::invalid_argument("chi2_gof: bad bin layout");
  }
  Chi2Result r;
  for (std::size_t k = 0; k < observed.size(); ++k) {
    if (!(expected[k] > 0.0)) throw std::invalid_argument("chi2_gof: zero bin");
    const double d = observed[k] - expected[k];
    r.statistic += d * d / expected[k];
  }
  r.df = static_cast<int>(observed.size()) - 1;
  r.p_value = gamma_q(0.5 * r.df, 0.5 * r.statistic);
  return r;
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

inline LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("fit_line: need >= 2 points");
  }
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_line: degenerate x");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r_squared = (syy == 0.0) ? 1.0 : (sxy * sxy) / (sxx * syy);
  return f;
}

/// Mann-Kendall style z-score for a monotone trend in an ordered series.
/// Negative z favours a decreasing trend; |z| > 1.645 is 5% one-sided.
inline double trend_z(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 4) throw std::invalid_argument("trend_z: series too short");
  long long s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (values[j] > values[i]) ++s;
      else if (values[j] < values[i]) --s;
    }
  }
  const double nn = static_cast<double>(n);
  const double var = nn * (nn - 1.0) * (2.0 * nn + 5.0) / 18.0;
  double z = 0.0;
  if (s > 0) z = (static_cast<double>(s) - 1.0) / std::sqrt(var);
  if (s < 0) z = (static_cast<double>(s) + 1.0) / std::sqrt(var);
  return z;
}

inline double weighted_median(std::vector<double> values,
                              std::vector<double> weights) {
  if (values.size() != weights.size() || values.empty()) {
    throw std::invalid_argument("weighted_median: bad input");
  }
  std::vector<std::size_t> idx(values.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  double total = 0.0;
  for (double w : weights) total += w;
  double acc = 0.0;
  for (std::size_t k : idx) {
    acc += weights[k];
    if (acc >= 0.5 * total) return values[k];
  }
  return values[idx.back()];
}

}  // namespace fv
