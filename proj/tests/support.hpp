#ifndef OULAB_TESTS_SUPPORT_HPP
#define OULAB_TESTS_SUPPORT_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "oulab/levy.hpp"

namespace oulab::testing {

inline LevyTriplet gaussian(double sigma, double drift = 0.0) { return LevyTriplet(drift, sigma, JumpMeasure::none()); }

struct Moments {
  double mean = 0, var = 0, m4 = 0;
  std::size_t n = 0;
  double mean_se() const { return std::sqrt(var / double(n)); }
  double var_se() const { return std::sqrt((m4 - var * var) / double(n)); }
};

inline Moments moments(const std::vector<double>& xs) {
  Moments m;
  m.n = xs.size();
  for (double x : xs) m.mean += x;
  m.mean /= double(m.n);
  for (double x : xs) {
    const double d = (x - m.mean) * (x - m.mean);
    m.var += d;
    m.m4 += d * d;
  }
  m.var /= double(m.n - 1);
  m.m4 /= double(m.n);
  return m;
}

// Empirical characteristic function with per-component standard errors.
struct EmpiricalCf {
  Complex value;
  double se_re, se_im;
};

inline EmpiricalCf empirical_cf(const std::vector<double>& xs, double theta) {
  std::vector<double> c, s;
  c.reserve(xs.size());
  s.reserve(xs.size());
  for (double x : xs) {
    c.push_back(std::cos(theta * x));
    s.push_back(std::sin(theta * x));
  }
  const auto mc = moments(c);
  const auto ms = moments(s);
  return {Complex(mc.mean, ms.mean), mc.mean_se(), ms.mean_se()};
}

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(double(i) / double(a.size()) - double(j) / double(b.size())));
  }
  return d;
}

/// Critical value at the 1% level (asymptotic).
inline double ks_critical_1pct(std::size_t n, std::size_t m) {
  return 1.628 * std::sqrt(double(n + m) / (double(n) * double(m)));
}

inline double normal_pdf(double x, double mean, double var) {
  return std::exp(-(x - mean) * (x - mean) / (2.0 * var)) / std::sqrt(2.0 * std::numbers::pi * var);
}

}  // namespace oulab::testing

#endif
