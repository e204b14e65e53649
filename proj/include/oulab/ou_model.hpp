#ifndef OULAB_OU_MODEL_HPP
#define OULAB_OU_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "oulab/csv.hpp"
#include "oulab/errors.hpp"
#include "oulab/levy.hpp"
#include "oulab/quadrature.hpp"
#include "oulab/rng.hpp"

namespace oulab {

/// OU-type process dX = -Q X dt + dZ started at x0.
class OuModel {
 public:
  OuModel(double mean_reversion, double start, LevyTriplet driver)
      : q_(mean_reversion), x0_(start), driver_(std::move(driver)) {
    if (!(q_ > 0.0) || !std::isfinite(q_)) throw ConfigError("mean-reversion rate Q must be positive");
    if (!std::isfinite(x0_)) throw ConfigError("starting point must be finite");
  }

  double mean_reversion() const noexcept { return q_; }
  double start() const noexcept { return x0_; }
  const LevyTriplet& driver() const noexcept { return driver_; }

  OuModel with_start(double x) const { return OuModel(q_, x, driver_); }

 private:
  double q_;
  double x0_;
  LevyTriplet driver_;
};

inline double default_dt(const OuModel& m) { return std::min(1e-3, 0.01 / m.mean_reversion()); }

// ---------------------------------------------------------------------------
// Exact one-step transition

/// A jump of the driver inside a time step, with the path value just before it.
struct JumpMark {
  double time;
  double size;
  double pre;
};

enum class SimulationScheme { exact, euler };

/// Advances the process over a step exactly in law: the continuous part
/// (drift, Gaussian, stable) uses the closed-form OU transition, and
/// finite-activity jumps are placed at uniform arrival times and applied at
/// those times, so pre-jump values are exact too.
class OuStepper {
 public:
  OuStepper(const OuModel& model, SimulationScheme scheme = SimulationScheme::exact)
      : q_(model.mean_reversion()), scheme_(scheme), zero_(model.driver().is_zero()) {
    if (!zero_) plan_ = plan_simulation(model.driver());
  }

  const SimulationPlan& plan() const noexcept { return plan_; }

  /// Variance of the Gaussian part accumulated over a step of length h.
  double gaussian_step_variance(double h) const noexcept {
    return plan_.gaussian_variance * (-std::expm1(-2.0 * q_ * h)) / (2.0 * q_);
  }

  /// Continuous evolution from x over a duration d (no explicit jumps).
  double continuous(double x, double d, RandomStream& rng) const {
    if (zero_) return std::exp(-q_ * d) * x;
    if (scheme_ == SimulationScheme::euler) {
      double dz = plan_.drift * d;
      if (plan_.gaussian_variance > 0.0) dz += std::sqrt(plan_.gaussian_variance * d) * rng.normal();
      if (plan_.stable) dz += stable_kernel_draw(*plan_.stable, d, d, 0.0, rng);
      return x - q_ * x * d + dz;
    }
    const double decay = std::exp(-q_ * d);
    const double a = -std::expm1(-q_ * d) / q_;
    double y = decay * x + plan_.drift * a;
    if (plan_.gaussian_variance > 0.0) y += std::sqrt(gaussian_step_variance(d)) * rng.normal();
    if (plan_.stable) {
      const double beta = plan_.stable->index;
      const double a_index = -std::expm1(-beta * q_ * d) / (beta * q_);
      const double b = -(1.0 - decay * (1.0 + q_ * d)) / q_;
      y += stable_kernel_draw(*plan_.stable, a, a_index, b, rng);
    }
    return y;
  }

  /// Advances x from t0 to t0 + h; on_jump(mark) fires for each explicit jump.
  template <class OnJump>
  double advance(double x, double t0, double h, RandomStream& rng, OnJump&& on_jump) const {
    if (zero_ || plan_.jump_rate == 0.0) return continuous(x, h, rng);
    const std::uint64_t n = rng.poisson(plan_.jump_rate * h);
    if (n == 0) return continuous(x, h, rng);
    arrivals_.resize(n);
    for (auto& u : arrivals_) u = h * rng.uniform();
    std::sort(arrivals_.begin(), arrivals_.end());
    double t = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      x = continuous(x, arrivals_[i] - t, rng);
      t = arrivals_[i];
      const double size = plan_.draw_jump(rng);
      on_jump(JumpMark{t0 + t, size, x});
      x += size;
    }
    return continuous(x, h - t, rng);
  }

  double advance(double x, double t0, double h, RandomStream& rng) const {
    return advance(x, t0, h, rng, [](const JumpMark&) {});
  }

 private:
  double q_;
  SimulationScheme scheme_;
  bool zero_;
  SimulationPlan plan_;
  mutable std::vector<double> arrivals_;
};

// ---------------------------------------------------------------------------
// Sample paths

struct SamplePath {
  std::vector<double> grid;
  std::vector<double> values;
  std::vector<JumpMark> jumps;  ///< sorted by time
  std::uint64_t root_seed = 0;
  std::uint64_t stream_id = 0;
  double dt = 0.0;
  double mean_reversion = 0.0;
  double velocity_scale = 0.0;  ///< Q |x0| + sigma, used to bound resolvable band widths
  std::vector<std::string> warnings;

  double horizon() const { return grid.back(); }
};

inline SamplePath simulate_path(const OuModel& model, double horizon, double dt, RandomStream& rng,
                                SimulationScheme scheme = SimulationScheme::exact) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ConfigError("simulate_path: horizon must be positive");
  if (!(dt > 0.0) || dt > horizon) throw ConfigError("simulate_path: need 0 < dt <= horizon");
  SamplePath path;
  path.root_seed = rng.root_seed();
  path.stream_id = rng.stream_id();
  path.dt = dt;
  path.mean_reversion = model.mean_reversion();
  path.velocity_scale = model.mean_reversion() * std::abs(model.start()) + model.driver().sigma();
  if (dt * model.mean_reversion() > 1.0)
    path.warnings.push_back("dt*Q = " + std::to_string(dt * model.mean_reversion()) + " > 1: grid coarse relative to 1/Q");

  const auto steps = static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
  path.grid.reserve(steps + 1);
  path.values.reserve(steps + 1);
  path.grid.push_back(0.0);
  path.values.push_back(model.start());

  const OuStepper stepper(model, scheme);
  const double q = model.mean_reversion();
  const bool zero = model.driver().is_zero();
  double x = model.start();
  for (std::size_t k = 1; k <= steps; ++k) {
    const double t0 = path.grid.back();
    const double t1 = k == steps ? horizon : static_cast<double>(k) * dt;
    if (zero) {
      // closed form from the start so decay is exact at every node
      x = std::exp(-q * t1) * model.start();
    } else {
      x = stepper.advance(x, t0, t1 - t0, rng, [&](const JumpMark& m) { path.jumps.push_back(m); });
    }
    path.grid.push_back(t1);
    path.values.push_back(x);
  }
  return path;
}

inline void write_csv(std::ostream& os, const SamplePath& p, csv::Metadata meta = {}) {
  meta.emplace_back("seed", csv::number(p.root_seed));
  meta.emplace_back("stream", csv::number(p.stream_id));
  meta.emplace_back("dt", csv::number(p.dt));
  for (const auto& w : p.warnings) meta.emplace_back("warning", w);
  csv::write_header(os, meta, "time,value");
  for (std::size_t k = 0; k < p.grid.size(); ++k) os << csv::number(p.grid[k]) << ',' << csv::number(p.values[k]) << '\n';
}

// ---------------------------------------------------------------------------
// Transition and invariant triplets

/// Generating triplet of P(t, x, .). The jump component is a procedure
/// assigning mass to intervals (lo, hi].
struct TransitionLaw {
  double t = 0.0;
  double from = 0.0;
  double drift = 0.0;              ///< b_{t,x}, same centering as the driver
  double gaussian_variance = 0.0;  ///< sigma_t^2
  std::function<double(double, double)> jump_mass;
  double jump_mean_shift = 0.0;  ///< int (z - c(z)) rho_t(dz); NaN when the mean is infinite
  double jump_variance = 0.0;    ///< int z^2 rho_t(dz); +inf when infinite

  double mean() const { return drift + jump_mean_shift; }
  double variance() const { return gaussian_variance + jump_variance; }
};

enum class InvariantStatus { exists, absent, undetermined };

struct InvariantLaw {
  InvariantStatus status = InvariantStatus::undetermined;
  double drift = 0.0;              ///< b_inf
  double gaussian_variance = 0.0;  ///< sigma_inf^2
  std::function<double(double, double)> jump_mass;
  double jump_mean_shift = 0.0;
  double jump_variance = 0.0;
  LogMomentResult log_moment;

  bool exists() const noexcept { return status == InvariantStatus::exists; }
  double mean() const { return drift + jump_mean_shift; }
  double variance() const { return gaussian_variance + jump_variance; }
};

namespace detail {

// Fraction factor 1 - e^{-tQ} with t = +inf allowed.
inline double one_minus_decay(double q, double t) { return std::isinf(t) ? 1.0 : -std::expm1(-q * t); }

inline double decay(double q, double t) { return std::isinf(t) ? 0.0 : std::exp(-q * t); }

// int_0^t rho(e^{sQ} (lo, hi]) ds
inline double discounted_mass(const JumpMeasure& jumps, double q, double t, double lo, double hi) {
  if (!(hi > lo) || jumps.is_none()) return 0.0;
  if (const auto* cp = jumps.get<CompoundPoissonJumps>()) {
    if (const auto* fx = std::get_if<FixedJump>(&cp->law)) {
      // the set of s with e^{sQ} lo < c <= e^{sQ} hi is an interval
      const double c = fx->value;
      double s_lo = 0.0;
      double s_hi = t;
      if (c > 0.0) {
        if (!(hi > 0.0)) return 0.0;
        s_lo = std::max(s_lo, std::log(c / hi) / q);
        if (lo > 0.0) s_hi = std::min(s_hi, std::log(c / lo) / q);
      } else {
        if (!(lo < 0.0)) return 0.0;
        s_lo = std::max(s_lo, std::log(c / lo) / q);
        if (hi < 0.0) s_hi = std::min(s_hi, std::log(c / hi) / q);
      }
      return cp->rate * std::max(0.0, s_hi - s_lo);
    }
  }
  if (!jumps.has_finite_activity() && lo <= 0.0 && hi >= 0.0) {
    // e^{sQ} E still reaches the origin, where the measure may be infinite
    double near_origin;
    try {
      near_origin = jumps.mass(lo, hi);
    } catch (const QuadratureError&) {
      near_origin = infinity;
    }
    if (!std::isfinite(near_origin)) return infinity;
  }
  if (const auto* s = jumps.get<StableJumps>()) {
    return jumps.mass(lo, hi) * one_minus_decay(s->index * q, t) / (s->index * q);
  }
  auto integrand = [&](double s) {
    const double g = std::exp(s * q);
    return jumps.mass(g * lo, g * hi);
  };
  if (std::isinf(t)) return quad::integrate_half_line(integrand, 0.0);
  return quad::integrate(integrand, 0.0, t);
}

struct JumpTerms {
  double drift_correction = 0.0;
  double mean_shift = 0.0;
  double variance = 0.0;
};

// Centering correction and moments of rho_t via the closed-form inner
// s-integrals: int_0^t c(e^{-sQ} z) ds = (atan z - atan(z e^{-tQ})) / Q.
inline JumpTerms jump_terms(const JumpMeasure& jumps, double q, double t) {
  JumpTerms out;
  if (jumps.is_none()) return out;
  const double d = decay(q, t);
  const double f1 = one_minus_decay(q, t);
  out.drift_correction = jumps.integrate([&](double z) {
    if (std::abs(z) < 1e-3) {
      // series in z; the direct form cancels to noise near the origin
      const double z3 = z * z * z;
      return f1 * z3 * ((2.0 - d - d * d) / 3.0 + z * z * ((1.0 + d + d * d + d * d * d + d * d * d * d) / 5.0 - 1.0)) / q;
    }
    return (std::atan(z) - std::atan(z * d) - centering(z) * f1) / q;
  });
  try {
    // int (z - c(z)) rho_t(dz); the c-part is what drift_correction moved into b_{t,x}
    out.mean_shift = f1 / q * jumps.integrate(centering_residual) - out.drift_correction;
  } catch (const QuadratureError&) {
    out.mean_shift = std::numeric_limits<double>::quiet_NaN();
  }
  if (const auto* s = jumps.get<StableJumps>()) {
    out.variance = infinity;
    if (s->index <= 1.0) out.mean_shift = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  try {
    out.variance = one_minus_decay(2.0 * q, t) / (2.0 * q) * jumps.integrate([](double z) { return z * z; });
  } catch (const QuadratureError&) {
    out.variance = infinity;
  }
  return out;
}

}  // namespace detail

inline TransitionLaw transition_triplet(const OuModel& model, double t) {
  if (!(t > 0.0)) throw ConfigError("transition_triplet: t must be positive");
  const double q = model.mean_reversion();
  const auto& drv = model.driver();
  TransitionLaw law;
  law.t = t;
  law.from = model.start();
  const auto terms = detail::jump_terms(drv.jumps(), q, t);
  law.drift = std::exp(-q * t) * model.start() + drv.drift() * detail::one_minus_decay(q, t) / q + terms.drift_correction;
  law.gaussian_variance = drv.sigma() * drv.sigma() * detail::one_minus_decay(2.0 * q, t) / (2.0 * q);
  law.jump_mean_shift = terms.mean_shift;
  law.jump_variance = terms.variance;
  law.jump_mass = [jumps = drv.jumps(), q, t](double lo, double hi) {
    return detail::discounted_mass(jumps, q, t, lo, hi);
  };
  return law;
}

inline InvariantLaw invariant_triplet(const OuModel& model) {
  InvariantLaw law;
  const auto& drv = model.driver();
  law.log_moment = log_moment_finite(drv.jumps());
  if (law.log_moment.status == MomentStatus::infinite) {
    law.status = InvariantStatus::absent;
    return law;
  }
  if (law.log_moment.status == MomentStatus::undetermined) {
    law.status = InvariantStatus::undetermined;
    return law;
  }
  law.status = InvariantStatus::exists;
  const double q = model.mean_reversion();
  const auto terms = detail::jump_terms(drv.jumps(), q, infinity);
  law.drift = drv.drift() / q + terms.drift_correction;
  law.gaussian_variance = drv.sigma() * drv.sigma() / (2.0 * q);
  law.jump_mean_shift = terms.mean_shift;
  law.jump_variance = terms.variance;
  law.jump_mass = [jumps = drv.jumps(), q](double lo, double hi) {
    return detail::discounted_mass(jumps, q, infinity, lo, hi);
  };
  return law;
}

// ---------------------------------------------------------------------------
// Local-time existence criterion

enum class ExistenceKind { gaussian_case, jump_case, fails, undetermined };

inline std::string to_string(ExistenceKind k) {
  switch (k) {
    case ExistenceKind::gaussian_case: return "gaussian-case";
    case ExistenceKind::jump_case: return "jump-case";
    case ExistenceKind::fails: return "fails";
    default: return "undetermined";
  }
}

struct ExistenceVerdict {
  ExistenceKind kind = ExistenceKind::undetermined;
  double alpha = std::numeric_limits<double>::quiet_NaN();
  double c = std::numeric_limits<double>::quiet_NaN();
  double r_squared = std::numeric_limits<double>::quiet_NaN();
  std::string diagnostic;

  bool passes() const noexcept { return kind == ExistenceKind::gaussian_case || kind == ExistenceKind::jump_case; }
};

struct CriterionOptions {
  double v_max = 1e4;
  int points = 41;
  double alpha_lo = 0.05;
  double alpha_hi = 1.95;
  double min_r_squared = 0.99;
};

/// Either a Gaussian component, or a lower bound T(v) >= c |v|^{2-alpha} on
/// the truncated second moment over |v| in [1, v_max], certified on the grid.
inline ExistenceVerdict check_existence_criterion(const OuModel& model, const CriterionOptions& opts = {}) {
  ExistenceVerdict out;
  const auto& drv = model.driver();
  if (drv.sigma() > 0.0) {
    out.kind = ExistenceKind::gaussian_case;
    out.diagnostic = "sigma = " + std::to_string(drv.sigma()) + " > 0";
    return out;
  }
  if (drv.jumps().is_none()) {
    out.kind = ExistenceKind::fails;
    out.diagnostic = "no Gaussian part and no jumps";
    return out;
  }
  std::vector<double> lv;
  std::vector<double> lt;
  std::vector<double> vs;
  std::vector<double> ts;
  for (int i = 0; i < opts.points; ++i) {
    const double v = std::pow(opts.v_max, double(i) / (opts.points - 1));
    double tv;
    try {
      tv = truncated_second_moment(drv.jumps(), v);
    } catch (const QuadratureError& e) {
      out.diagnostic = std::string("truncated moment quadrature failed: ") + e.what();
      return out;
    }
    if (!(tv > 0.0)) {
      out.kind = ExistenceKind::fails;
      out.diagnostic = "truncated second moment vanishes at |v| = " + std::to_string(v);
      return out;
    }
    vs.push_back(v);
    ts.push_back(tv);
    lv.push_back(std::log(v));
    lt.push_back(std::log(tv));
  }
  const double slope = detail::fit_slope(lv, lt);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lv.size(); ++i) {
    mx += lv[i];
    my += lt[i];
  }
  mx /= double(lv.size());
  my /= double(lv.size());
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < lv.size(); ++i) {
    const double fit = my + slope * (lv[i] - mx);
    ss_res += (lt[i] - fit) * (lt[i] - fit);
    ss_tot += (lt[i] - my) * (lt[i] - my);
  }
  out.r_squared = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 0.0;
  out.alpha = 2.0 - slope;
  if (slope <= 0.0) {
    out.kind = ExistenceKind::fails;
    out.diagnostic = "truncated second moment does not grow (fitted slope " + std::to_string(slope) + ")";
    return out;
  }
  if (out.alpha > opts.alpha_lo && out.alpha < opts.alpha_hi && out.r_squared > opts.min_r_squared) {
    double c = infinity;
    for (std::size_t i = 0; i < vs.size(); ++i) c = std::min(c, ts[i] / std::pow(vs[i], slope));
    out.c = c;
    out.kind = ExistenceKind::jump_case;
    out.diagnostic = "power-law growth certified on |v| in [1, " + std::to_string(opts.v_max) + "]";
    return out;
  }
  out.kind = ExistenceKind::undetermined;
  out.diagnostic = "fit outside the certified range (alpha " + std::to_string(out.alpha) + ", R^2 " +
                   std::to_string(out.r_squared) + ")";
  return out;
}

}  // namespace oulab

#endif
