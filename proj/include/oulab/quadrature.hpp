#ifndef OULAB_QUADRATURE_HPP
#define OULAB_QUADRATURE_HPP

#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <type_traits>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "oulab/errors.hpp"

// Thin wrappers over Boost.Math quadrature. Every routine checks the achieved
// error estimate against max(abs_tol, 1e-9 * L1) and raises QuadratureError
// carrying the estimate when it is not met.

namespace oulab::quad {

inline constexpr double default_abs_tol = 1e-9;

template <class T>
double magnitude(const T& v) {
  return std::abs(v);
}

template <class T>
void require_converged(const T& value, double error, double abs_tol, double l1, const char* what) {
  const double budget = std::max(abs_tol, 1e-9 * l1);
  if (!std::isfinite(magnitude(value)) || !(error <= budget)) {
    throw QuadratureError(std::string(what) + " did not converge", error);
  }
}

/// Adaptive Gauss-Kronrod (G10K21) on a finite interval.
template <class F>
auto integrate(F&& f, double a, double b, double abs_tol = default_abs_tol, unsigned max_depth = 18) {
  using R = std::invoke_result_t<F, double>;
  if (a == b) return R{};
  double error = 0.0;
  double l1 = 0.0;
  R value = boost::math::quadrature::gauss_kronrod<double, 21>::integrate(f, a, b, max_depth, 1e-12, &error, &l1);
  require_converged(value, error, abs_tol, l1, "Gauss-Kronrod quadrature");
  return value;
}

/// Tanh-sinh on a finite interval; tolerates integrable endpoint singularities.
template <class F>
double integrate_singular(F&& f, double a, double b, double abs_tol = default_abs_tol) {
  if (a == b) return 0.0;
  static thread_local boost::math::quadrature::tanh_sinh<double> integrator(15);
  double error = 0.0;
  double l1 = 0.0;
  const double value = integrator.integrate(f, a, b, 1e-12, &error, &l1);
  require_converged(value, error, abs_tol, l1, "tanh-sinh quadrature");
  return value;
}

/// Exp-sinh on [a, +inf); the integrand must decay at infinity.
template <class F>
auto integrate_half_line(F&& f, double a, double abs_tol = default_abs_tol) {
  using R = std::invoke_result_t<F, double>;
  static thread_local boost::math::quadrature::exp_sinh<double> integrator(9);
  double error = 0.0;
  double l1 = 0.0;
  R value = integrator.integrate(f, a, std::numeric_limits<double>::infinity(), 1e-12, &error, &l1);
  require_converged(value, error, abs_tol, l1, "exp-sinh quadrature");
  return value;
}

/// Non-adaptive G7K15 on a short panel, for tabulating smooth integrands.
template <class F>
double gauss_kronrod_fixed(F&& f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 0);
}

}  // namespace oulab::quad

#endif
