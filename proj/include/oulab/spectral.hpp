#ifndef OULAB_SPECTRAL_HPP
#define OULAB_SPECTRAL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "oulab/csv.hpp"
#include "oulab/errors.hpp"
#include "oulab/levy.hpp"
#include "oulab/ou_model.hpp"
#include "oulab/quadrature.hpp"

namespace oulab {

enum class LawKind { transition, invariant };

struct LawTag {
  LawKind kind = LawKind::invariant;
  double t = infinity;
  double from = 0.0;

  std::string str() const {
    if (kind == LawKind::invariant) return "invariant";
    return "transition(t=" + csv::number(t) + ", x=" + csv::number(from) + ")";
  }
};

// ---------------------------------------------------------------------------
// Characteristic functions

namespace detail {

// int_0^t psi_J(e^{-sQ} theta) ds for theta > 0, written as
// int_{theta e^{-tQ}}^{theta} psi_J(u) / (Q u) du.
inline Complex integrated_jump_exponent(const JumpMeasure& jumps, double q, double t, double theta) {
  if (jumps.is_none()) return {};
  if (const auto* s = jumps.get<StableJumps>()) {
    const double a = theta;
    const double a1 = one_minus_decay(q, t) / q;
    if (s->index == 1.0) {
      const double b = std::isinf(t) ? -1.0 / q : -(1.0 - std::exp(-q * t) * (1.0 + q * t)) / q;
      const double g = s->scale;
      const double k = 2.0 * g * s->skew / std::numbers::pi;
      return Complex(g * a * a1, k * a * (a1 * std::log(a) + b) - theta * a1 * k * (1.0 - euler_gamma));
    }
    const double ab = one_minus_decay(s->index * q, t) / (s->index * q);
    const double ga = std::pow(s->scale * a, s->index) * ab;
    return Complex(ga, -ga * s->skew * std::tan(std::numbers::pi * s->index / 2.0) + theta * s->centering_drift * a1);
  }
  const double lo = theta * decay(q, t);
  auto f = [&](double u) -> Complex { return jump_exponent(jumps, u) / (q * u); };
  return quad::integrate(f, lo, theta, 1e-9);
}

}  // namespace detail

/// int_0^t psi(e^{-sQ} theta) ds, with t = +inf allowed.
inline Complex integrated_exponent(const OuModel& model, double t, double theta) {
  if (theta == 0.0) return {};
  if (theta < 0.0) return std::conj(integrated_exponent(model, t, -theta));
  const double q = model.mean_reversion();
  const auto& drv = model.driver();
  const double a1 = detail::one_minus_decay(q, t) / q;
  const double a2 = detail::one_minus_decay(2.0 * q, t) / (2.0 * q);
  const double s = drv.sigma();
  return Complex(0.5 * s * s * theta * theta * a2, -drv.drift() * theta * a1) +
         detail::integrated_jump_exponent(drv.jumps(), q, t, theta);
}

inline Complex transition_cf_at(const OuModel& model, double t, double theta) {
  if (!(t > 0.0)) throw ConfigError("transition_cf: t must be positive");
  if (theta == 0.0) return 1.0;
  const double shift = model.start() * std::exp(-model.mean_reversion() * t) * theta;
  return std::exp(Complex(0.0, shift) - integrated_exponent(model, t, theta));
}

inline void require_invariant(const OuModel& model) {
  const auto r = log_moment_finite(model.driver().jumps());
  if (r.status == MomentStatus::infinite)
    throw PreconditionError("no invariant law: the driver's log-moment diverges (" + r.diagnostic + ")");
  if (r.status == MomentStatus::undetermined)
    throw PreconditionError("invariant law undetermined: log-moment test inconclusive (" + r.diagnostic + ")");
}

inline Complex invariant_cf_at(const OuModel& model, double theta) {
  if (theta == 0.0) return 1.0;
  return std::exp(-integrated_exponent(model, infinity, theta));
}

/// Tabulated characteristic function. Nodes whose quadrature failed are
/// flagged; inversion refuses flagged grids.
struct SpectralGrid {
  std::vector<double> theta;
  std::vector<Complex> values;
  std::vector<std::uint8_t> flagged;
  std::vector<std::string> node_errors;
  LawTag tag;

  std::size_t flagged_count() const { return static_cast<std::size_t>(std::count(flagged.begin(), flagged.end(), 1)); }
};

/// Uniform symmetric grid k * spacing, |k| <= ceil(cutoff / spacing).
inline std::vector<double> symmetric_theta_grid(double cutoff, double spacing) {
  if (!(cutoff > 0.0) || !(spacing > 0.0)) throw ConfigError("theta grid needs positive cutoff and spacing");
  const auto n = static_cast<long>(std::ceil(cutoff / spacing - 1e-9));
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(2 * n + 1));
  for (long k = -n; k <= n; ++k) out.push_back(static_cast<double>(k) * spacing);
  return out;
}

namespace detail {

template <class Cf>
SpectralGrid tabulate(const std::vector<double>& thetas, Cf&& cf, LawTag tag) {
  SpectralGrid g;
  g.theta = thetas;
  g.values.resize(thetas.size());
  g.flagged.assign(thetas.size(), 0);
  g.tag = tag;
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    if (!std::isfinite(thetas[i])) throw ConfigError("theta grid contains a non-finite node");
    try {
      // evaluate at |theta| and conjugate so symmetry is exact
      const Complex v = cf(std::abs(thetas[i]));
      g.values[i] = thetas[i] < 0 ? std::conj(v) : v;
    } catch (const QuadratureError& e) {
      g.flagged[i] = 1;
      g.values[i] = Complex(std::nan(""), std::nan(""));
      g.node_errors.push_back("theta=" + csv::number(thetas[i]) + ": " + e.what());
    }
  }
  return g;
}

}  // namespace detail

inline SpectralGrid transition_cf(const OuModel& model, double t, const std::vector<double>& thetas) {
  if (!(t > 0.0)) throw ConfigError("transition_cf: t must be positive");
  return detail::tabulate(thetas, [&](double th) { return transition_cf_at(model, t, th); },
                          LawTag{LawKind::transition, t, model.start()});
}

inline SpectralGrid invariant_cf(const OuModel& model, const std::vector<double>& thetas) {
  require_invariant(model);
  return detail::tabulate(thetas, [&](double th) { return invariant_cf_at(model, th); }, LawTag{});
}

// ---------------------------------------------------------------------------
// Inversion

struct DensityTable {
  std::vector<double> y;
  std::vector<double> density;  ///< clipped at 0
  std::vector<double> raw;      ///< before clipping
  double total_mass = 0.0;      ///< trapezoid integral of raw over the y-grid
  double max_negativity = 0.0;  ///< largest clipped magnitude
  double cutoff = 0.0;
  double spacing = 0.0;
  std::size_t nodes = 0;
  LawTag tag;
};

inline constexpr double default_decay_tol = 1e-8;

namespace detail {

inline double uniform_step(const std::vector<double>& xs, const char* what) {
  if (xs.size() < 2) throw ConfigError(std::string(what) + " needs at least two nodes");
  const double h = xs[1] - xs[0];
  if (!(h > 0.0)) throw ConfigError(std::string(what) + " must be increasing");
  for (std::size_t i = 1; i < xs.size(); ++i)
    if (std::abs((xs[i] - xs[i - 1]) - h) > 1e-9 * std::max(1.0, std::abs(xs[i])))
      throw ConfigError(std::string(what) + " must be uniform");
  return h;
}

// Cutoff needed for |phi| to reach tol, extrapolating log|phi| ~ -c theta^p
// from two samples. NaN when no decay is visible.
inline double required_cutoff(double theta, double mod_half, double mod_full, double tol) {
  const double r2 = std::log(mod_half);
  const double r = std::log(mod_full);
  if (!(r < r2 && r2 < 0.0)) return std::nan("");
  const double p = std::log2(r / r2);
  return theta * std::pow(std::log(tol) / r, 1.0 / p);
}

}  // namespace detail

/// Trapezoid inversion p(y) = (dtheta / 2 pi) sum w_k Re(e^{-i theta_k y} phi_k)
/// over a uniform symmetric grid. Refuses flagged grids and grids whose outer
/// tenth has not decayed below decay_tol.
inline DensityTable invert_to_density(const SpectralGrid& grid, const std::vector<double>& y,
                                      double decay_tol = default_decay_tol) {
  if (grid.flagged_count() > 0)
    throw NumericalError("inversion refused: " + std::to_string(grid.flagged_count()) + " flagged cf nodes (" +
                         grid.node_errors.front() + ")");
  const double dth = detail::uniform_step(grid.theta, "theta grid");
  const std::size_t n = grid.theta.size();
  if (n % 2 == 0 || std::abs(grid.theta.front() + grid.theta.back()) > 1e-9 * std::abs(grid.theta.back()))
    throw ConfigError("theta grid must be symmetric with an odd node count");
  detail::uniform_step(y, "y grid");
  const double cutoff = grid.theta.back();
  const std::size_t mid = n / 2;
  double outer = 0.0;
  for (std::size_t i = mid; i < n; ++i)
    if (grid.theta[i] >= 0.9 * cutoff) outer = std::max(outer, std::abs(grid.values[i]));
  if (!(outer < decay_tol)) {
    const double half = std::abs(grid.values[mid + (n - 1 - mid) / 2]);
    const double need = detail::required_cutoff(cutoff, half, std::abs(grid.values.back()), decay_tol);
    throw PreconditionError("heavy-tailed cf: max |phi| on the outer tenth is " + csv::number(outer) +
                            " at cutoff " + csv::number(cutoff) +
                            (std::isfinite(need) ? "; required cutoff about " + csv::number(need)
                                                 : "; no decay detected, the law may have an atom"));
  }
  DensityTable out;
  out.y = y;
  out.raw.resize(y.size());
  out.density.resize(y.size());
  out.cutoff = cutoff;
  out.spacing = dth;
  out.nodes = n;
  out.tag = grid.tag;
  const double scale = dth / (2.0 * std::numbers::pi);
  for (std::size_t j = 0; j < y.size(); ++j) {
    double s = 0.5 * grid.values[mid].real();
    for (std::size_t i = mid + 1; i < n; ++i) {
      const double w = i + 1 == n ? 0.5 : 1.0;
      const double th = grid.theta[i];
      const Complex v = grid.values[i];
      s += w * (std::cos(th * y[j]) * v.real() + std::sin(th * y[j]) * v.imag());
    }
    out.raw[j] = 2.0 * scale * s;
    out.density[j] = std::max(0.0, out.raw[j]);
    out.max_negativity = std::max(out.max_negativity, -out.raw[j]);
  }
  const double hy = y[1] - y[0];
  for (std::size_t j = 0; j + 1 < y.size(); ++j) out.total_mass += 0.5 * hy * (out.raw[j] + out.raw[j + 1]);
  return out;
}

/// Choice of theta grid for a target y-grid.
struct ThetaPlan {
  double cutoff = 0.0;
  double spacing = 0.0;
  double period = 0.0;  ///< 2 pi / spacing; images of the density this far apart alias
};

struct InversionOptions {
  double decay_tol = default_decay_tol;
  double period = 0.0;  ///< 0: chosen from the law's mean and spread
  int max_power = 16;
  std::size_t max_nodes = std::size_t{1} << 21;
};

namespace detail {

// Period long enough that aliased images of the density sit >= 14 sd away
// from the window; laws without a finite variance get 64 window widths.
inline double alias_period(const std::vector<double>& y, double mean, double variance) {
  const double span = y.back() - y.front();
  const double centre = 0.5 * (y.back() + y.front());
  if (!std::isfinite(mean) || !std::isfinite(variance)) return 64.0 * span;
  return std::max(2.0 * span, 0.5 * span + std::abs(mean - centre) + 14.0 * std::sqrt(variance));
}

// Smallest 2^k pi / dy whose outer tenth has |phi| < tol, first probed at 33
// points and then confirmed on the actual nodes.
template <class Cf>
ThetaPlan plan_theta(Cf&& cf, const std::vector<double>& y, double period, const InversionOptions& opts) {
  const double dy = uniform_step(y, "y grid");
  ThetaPlan plan;
  plan.period = period;
  plan.spacing = 2.0 * std::numbers::pi / period;
  const double nyquist = std::numbers::pi / dy;
  int k = static_cast<int>(std::floor(std::log2(16.0 * plan.spacing / nyquist)));
  double last_half = 1.0, last_full = 1.0, last_theta = 0.0;
  for (; k <= opts.max_power; ++k) {
    const double cutoff = std::ldexp(nyquist, k);
    if (cutoff / plan.spacing > 0.5 * static_cast<double>(opts.max_nodes)) break;
    double outer = 0.0;
    for (int i = 0; i <= 32 && outer < opts.decay_tol; ++i) outer = std::max(outer, std::abs(cf(cutoff * (0.9 + 0.1 * i / 32.0))));
    last_theta = cutoff;
    last_full = std::abs(cf(cutoff));
    last_half = std::abs(cf(0.5 * cutoff));
    if (outer < opts.decay_tol) {
      plan.cutoff = cutoff;
      return plan;
    }
  }
  const double need = required_cutoff(last_theta, last_half, last_full, opts.decay_tol);
  throw PreconditionError("heavy-tailed cf: |phi| is still " + csv::number(last_full) + " at cutoff " +
                          csv::number(last_theta) +
                          (std::isfinite(need) ? "; required cutoff about " + csv::number(need)
                                               : "; no decay detected, the law may have an atom"));
}

}  // namespace detail

inline ThetaPlan plan_transition_grid(const OuModel& model, double t, const std::vector<double>& y,
                                      const InversionOptions& opts = {}) {
  double period = opts.period;
  if (!(period > 0.0)) {
    const auto law = transition_triplet(model, t);
    period = detail::alias_period(y, law.mean(), law.variance());
  }
  return detail::plan_theta([&](double th) { return transition_cf_at(model, t, th); }, y, period, opts);
}

inline ThetaPlan plan_invariant_grid(const OuModel& model, const std::vector<double>& y,
                                     const InversionOptions& opts = {}) {
  require_invariant(model);
  double period = opts.period;
  if (!(period > 0.0)) {
    const auto law = invariant_triplet(model);
    period = detail::alias_period(y, law.mean(), law.variance());
  }
  return detail::plan_theta([&](double th) { return invariant_cf_at(model, th); }, y, period, opts);
}

/// p(t, x0, .) on a uniform y-grid with an adaptively chosen theta grid.
inline DensityTable transition_density(const OuModel& model, double t, const std::vector<double>& y,
                                       const InversionOptions& opts = {}) {
  const auto plan = plan_transition_grid(model, t, y, opts);
  return invert_to_density(transition_cf(model, t, symmetric_theta_grid(plan.cutoff, plan.spacing)), y,
                           opts.decay_tol);
}

/// Invariant density f on a uniform y-grid.
inline DensityTable invariant_density(const OuModel& model, const std::vector<double>& y,
                                      const InversionOptions& opts = {}) {
  const auto plan = plan_invariant_grid(model, y, opts);
  return invert_to_density(invariant_cf(model, symmetric_theta_grid(plan.cutoff, plan.spacing)), y, opts.decay_tol);
}

/// n uniform nodes on [lo, hi].
inline std::vector<double> uniform_grid(double lo, double hi, std::size_t n) {
  if (n < 2 || !(hi > lo)) throw ConfigError("uniform grid needs n >= 2 and hi > lo");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return out;
}

// ---------------------------------------------------------------------------
// Export

inline void write_csv(std::ostream& os, const SpectralGrid& g, csv::Metadata meta = {}) {
  meta.emplace_back("law", g.tag.str());
  meta.emplace_back("flagged", std::to_string(g.flagged_count()));
  csv::write_header(os, meta, "theta,re,im");
  for (std::size_t i = 0; i < g.theta.size(); ++i)
    os << csv::number(g.theta[i]) << ',' << csv::number(g.values[i].real()) << ',' << csv::number(g.values[i].imag())
       << '\n';
}

inline void write_csv(std::ostream& os, const DensityTable& d, csv::Metadata meta = {}) {
  meta.emplace_back("law", d.tag.str());
  meta.emplace_back("total_mass", csv::number(d.total_mass));
  meta.emplace_back("max_negativity", csv::number(d.max_negativity));
  meta.emplace_back("theta_cutoff", csv::number(d.cutoff));
  meta.emplace_back("theta_nodes", std::to_string(d.nodes));
  csv::write_header(os, meta, "y,density");
  for (std::size_t i = 0; i < d.y.size(); ++i) os << csv::number(d.y[i]) << ',' << csv::number(d.density[i]) << '\n';
}

}  // namespace oulab

#endif
