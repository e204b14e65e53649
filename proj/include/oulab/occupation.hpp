#ifndef OULAB_OCCUPATION_HPP
#define OULAB_OCCUPATION_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "oulab/csv.hpp"
#include "oulab/errors.hpp"
#include "oulab/ou_model.hpp"
#include "oulab/parallel.hpp"
#include "oulab/quadrature.hpp"
#include "oulab/rng.hpp"
#include "oulab/spectral.hpp"

namespace oulab {

// ---------------------------------------------------------------------------
// Band time on a discretized path

namespace detail {

// Time a straight segment (ta, a) -> (tb, b) spends strictly inside (lo, hi).
inline double segment_band_time(double ta, double a, double tb, double b, double lo, double hi) {
  const double d = tb - ta;
  if (!(d > 0.0)) return 0.0;
  if (a == b) return (a > lo && a < hi) ? d : 0.0;
  const double m = std::min(a, b);
  const double big = std::max(a, b);
  const double overlap = std::min(big, hi) - std::max(m, lo);
  return overlap > 0.0 ? d * overlap / (big - m) : 0.0;
}

// Visits the continuous pieces of the path on [0, t_end]: straight lines
// between grid nodes, broken at every marked jump (no interpolation across).
template <class Visit>
void for_each_segment(const SamplePath& path, double t_end, Visit&& visit) {
  std::size_t j = 0;
  auto emit = [&](double ta, double a, double tb, double b) {
    if (!(ta < t_end)) return;
    if (tb > t_end) {
      b = a + (b - a) * (t_end - ta) / (tb - ta);
      tb = t_end;
    }
    visit(ta, a, tb, b);
  };
  for (std::size_t k = 0; k + 1 < path.grid.size(); ++k) {
    const double t0 = path.grid[k];
    if (!(t0 < t_end)) break;
    const double t1 = path.grid[k + 1];
    double ct = t0;
    double cv = path.values[k];
    while (j < path.jumps.size() && path.jumps[j].time <= t1) {
      emit(ct, cv, path.jumps[j].time, path.jumps[j].pre);
      ct = path.jumps[j].time;
      cv = path.jumps[j].pre + path.jumps[j].size;
      ++j;
    }
    emit(ct, cv, t1, path.values[k + 1]);
  }
}

inline void check_times(const SamplePath& path, const std::vector<double>& times) {
  if (times.empty()) throw ConfigError("occupation: need at least one time");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(times[i] >= 0.0)) throw ConfigError("occupation: times must be non-negative");
    if (i > 0 && !(times[i] > times[i - 1])) throw ConfigError("occupation: times must be increasing");
  }
  if (times.back() > path.horizon() * (1.0 + 1e-12))
    throw ConfigError("occupation: time " + csv::number(times.back()) + " beyond path horizon " +
                      csv::number(path.horizon()));
}

}  // namespace detail

/// int_0^t 1{|X_s - x| < eps} ds on the linearly interpolated path.
inline double occupation_time_in_band(const SamplePath& path, double x, double eps, double t) {
  if (!(eps > 0.0)) throw ConfigError("occupation: band half-width must be positive");
  detail::check_times(path, {t});
  double total = 0.0;
  detail::for_each_segment(path, t, [&](double ta, double a, double tb, double b) {
    total += detail::segment_band_time(ta, a, tb, b, x - eps, x + eps);
  });
  return total;
}

/// Band times for every half-width at every requested time, in one pass.
/// Result[i][j] is the time in (x - eps[i], x + eps[i]) up to times[j].
inline std::vector<std::vector<double>> band_time_profile(const SamplePath& path, double x,
                                                          const std::vector<double>& eps,
                                                          const std::vector<double>& times) {
  detail::check_times(path, times);
  for (double e : eps)
    if (!(e > 0.0)) throw ConfigError("occupation: band half-width must be positive");
  std::vector<std::vector<double>> out(eps.size(), std::vector<double>(times.size(), 0.0));
  std::vector<double> acc(eps.size(), 0.0);
  std::size_t next = 0;
  auto add = [&](double ta, double a, double tb, double b) {
    for (std::size_t i = 0; i < eps.size(); ++i) acc[i] += detail::segment_band_time(ta, a, tb, b, x - eps[i], x + eps[i]);
  };
  while (next < times.size() && times[next] <= 0.0) ++next;
  detail::for_each_segment(path, times.back(), [&](double ta, double a, double tb, double b) {
    while (next < times.size() && times[next] <= tb) {
      const double tau = times[next];
      const double v = tb > ta ? a + (b - a) * (tau - ta) / (tb - ta) : b;
      add(ta, a, tau, v);
      for (std::size_t i = 0; i < eps.size(); ++i) out[i][next] = acc[i];
      ta = tau;
      a = v;
      ++next;
    }
    add(ta, a, tb, b);
  });
  for (; next < times.size(); ++next)
    for (std::size_t i = 0; i < eps.size(); ++i) out[i][next] = acc[i];
  return out;
}

// ---------------------------------------------------------------------------
// Local-time estimates

struct OccupationEstimate {
  double level = 0.0;
  std::vector<double> times;
  std::vector<double> eps;                      ///< decreasing
  std::vector<std::vector<double>> estimates;   ///< [eps][time] of L_eps(x, t)
  std::vector<double> diagnostics;              ///< max_t |L_eps[k] - L_eps[k+1]|
  double tolerance = 0.0;
  bool converged = false;
};

struct LocalTimeOptions {
  double relative_tolerance = 0.2;  ///< converged when the last two diagnostics < this * max L at the finest eps
  double resolution_factor = 5.0;   ///< finest eps must be >= factor * dt * velocity scale
};

/// Smallest half-width the path's grid resolves.
inline double resolution_bound(const SamplePath& path, const LocalTimeOptions& opts = {}) {
  return opts.resolution_factor * path.dt * path.velocity_scale;
}

/// eps_k = eps0 2^{-k}; eps0 = half the stationary standard deviation when
/// it is finite and positive, else 0.5.
inline std::vector<double> default_schedule(const OuModel& model, int levels = 6) {
  double eps0 = 0.5;
  try {
    const auto inv = invariant_triplet(model);
    if (inv.exists() && std::isfinite(inv.variance()) && inv.variance() > 0.0) eps0 = 0.5 * std::sqrt(inv.variance());
  } catch (const QuadratureError&) {
  }
  std::vector<double> out(static_cast<std::size_t>(levels));
  for (int k = 0; k < levels; ++k) out[static_cast<std::size_t>(k)] = std::ldexp(eps0, -k);
  return out;
}

inline OccupationEstimate local_time_estimate(const SamplePath& path, double x, const std::vector<double>& times,
                                              const std::vector<double>& schedule, const LocalTimeOptions& opts = {}) {
  if (schedule.size() < 2) throw ConfigError("local time: schedule needs at least two half-widths");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (!(schedule[i] > 0.0)) throw ConfigError("local time: half-widths must be positive");
    if (i > 0 && !(schedule[i] < schedule[i - 1])) throw ConfigError("local time: schedule must be decreasing");
  }
  const double bound = resolution_bound(path, opts);
  if (schedule.back() < bound)
    throw PreconditionError("local time: finest half-width " + csv::number(schedule.back()) +
                            " is below the grid resolution bound " + csv::number(bound));
  OccupationEstimate est;
  est.level = x;
  est.times = times;
  est.eps = schedule;
  est.estimates = band_time_profile(path, x, schedule, times);
  for (std::size_t i = 0; i < schedule.size(); ++i)
    for (double& v : est.estimates[i]) v /= 2.0 * schedule[i];
  for (std::size_t k = 0; k + 1 < schedule.size(); ++k) {
    double d = 0.0;
    for (std::size_t j = 0; j < times.size(); ++j)
      d = std::max(d, std::abs(est.estimates[k][j] - est.estimates[k + 1][j]));
    est.diagnostics.push_back(d);
  }
  const auto& finest = est.estimates.back();
  est.tolerance = opts.relative_tolerance * *std::max_element(finest.begin(), finest.end()) + 1e-12;
  const std::size_t m = est.diagnostics.size();
  est.converged = m >= 2 && est.diagnostics[m - 1] < est.tolerance && est.diagnostics[m - 2] < est.tolerance;
  return est;
}

// ---------------------------------------------------------------------------
// Oracles from the spectral module

/// Transition density p(t, x0, y) at one point.
inline double transition_density_at(const OuModel& model, double t, double y) {
  return transition_density(model, t, uniform_grid(y - 1.0, y + 1.0, 3)).raw[1];
}

/// int_0^t p(s, x0, x) ds, the mean local time at x up to t.
inline double expected_local_time(const OuModel& model, double x, double t) {
  if (!(t > 0.0)) throw ConfigError("expected local time: t must be positive");
  auto p = [&](double s) { return s > 0.0 ? transition_density_at(model, s, x) : 0.0; };
  return quad::integrate(p, 0.0, t, 1e-8, 12);
}

/// [lo, hi] holding the central `mass` of the invariant law, from its
/// inverted density. Needs a finite invariant variance.
inline std::pair<double, double> central_interval(const OuModel& model, double mass = 0.95) {
  const auto inv = invariant_triplet(model);
  if (!inv.exists() || !std::isfinite(inv.variance()) || !(inv.variance() > 0.0))
    throw PreconditionError("central interval needs an invariant law with finite positive variance");
  const double sd = std::sqrt(inv.variance());
  const auto y = uniform_grid(inv.mean() - 12.0 * sd, inv.mean() + 12.0 * sd, 4801);
  const auto d = invariant_density(model, y);
  std::vector<double> cdf(y.size(), 0.0);
  for (std::size_t i = 1; i < y.size(); ++i) cdf[i] = cdf[i - 1] + 0.5 * (y[i] - y[i - 1]) * (d.density[i] + d.density[i - 1]);
  const double total = cdf.back();
  auto quantile = [&](double p) {
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), p * total);
    const std::size_t i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(1, it - cdf.begin()));
    if (i >= y.size()) return y.back();
    const double f = (p * total - cdf[i - 1]) / std::max(cdf[i] - cdf[i - 1], 1e-300);
    return y[i - 1] + f * (y[i] - y[i - 1]);
  };
  return {quantile(0.5 * (1.0 - mass)), quantile(0.5 * (1.0 + mass))};
}

/// Levels drawn uniformly over the central 95% of the invariant law, so that
/// almost-every-level statements are never tested at special points.
inline std::vector<double> random_levels(const OuModel& model, std::size_t n, RandomStream& rng) {
  const auto [lo, hi] = central_interval(model);
  std::vector<double> out(n);
  for (auto& v : out) v = lo + (hi - lo) * rng.uniform();
  return out;
}

// ---------------------------------------------------------------------------
// Ergodic ratio

struct ErgodicEstimate {
  double level = 0.0;
  double eps = 0.0;
  std::vector<double> horizons;
  std::vector<double> ratios;   ///< mean over paths of L_eps(x, t) / t
  std::vector<double> stderrs;  ///< Monte Carlo standard errors
  double f_ref = 0.0;           ///< invariant density at x
  std::size_t paths = 0;
};

struct ErgodicOptions {
  double dt = 0.0;  ///< 0: default_dt(model)
  unsigned threads = 1;
};

/// Refuses unless local times exist and an invariant law exists.
inline void require_ergodic_hypotheses(const OuModel& model) {
  const auto verdict = check_existence_criterion(model);
  if (!verdict.passes())
    throw PreconditionError("local-time existence hypothesis not met (" + to_string(verdict.kind) + ": " +
                            verdict.diagnostic + ")");
  require_invariant(model);
}

inline ErgodicEstimate ergodic_ratio(const OuModel& model, double x, const std::vector<double>& horizons, double eps,
                                     std::size_t paths, std::uint64_t seed, const ErgodicOptions& opts = {}) {
  if (paths < 2) throw ConfigError("ergodic ratio: need at least two paths");
  if (!(eps > 0.0)) throw ConfigError("ergodic ratio: eps must be positive");
  if (horizons.empty() || !(horizons.front() > 0.0)) throw ConfigError("ergodic ratio: horizons must be positive");
  for (std::size_t i = 1; i < horizons.size(); ++i)
    if (!(horizons[i] > horizons[i - 1])) throw ConfigError("ergodic ratio: horizons must be increasing");
  require_ergodic_hypotheses(model);

  ErgodicEstimate out;
  out.level = x;
  out.eps = eps;
  out.horizons = horizons;
  out.paths = paths;
  out.f_ref = invariant_density(model, uniform_grid(x - 1.0, x + 1.0, 3)).density[1];

  const double dt = opts.dt > 0.0 ? opts.dt : default_dt(model);
  std::vector<std::vector<double>> per_path(paths);
  parallel_for(paths, opts.threads, [&](std::size_t i) {
    RandomStream rng(seed, stream_id(StreamPurpose::ergodic, i));
    const auto path = simulate_path(model, horizons.back(), dt, rng);
    auto band = band_time_profile(path, x, {eps}, horizons);
    per_path[i] = std::move(band[0]);
  });
  for (std::size_t j = 0; j < horizons.size(); ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < paths; ++i) mean += per_path[i][j] / (2.0 * eps * horizons[j]);
    mean /= double(paths);
    double var = 0.0;
    for (std::size_t i = 0; i < paths; ++i) {
      const double r = per_path[i][j] / (2.0 * eps * horizons[j]) - mean;
      var += r * r;
    }
    var /= double(paths - 1);
    out.ratios.push_back(mean);
    out.stderrs.push_back(std::sqrt(var / double(paths)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Export

inline void write_csv(std::ostream& os, const OccupationEstimate& e, csv::Metadata meta = {}) {
  meta.emplace_back("level", csv::number(e.level));
  meta.emplace_back("converged", e.converged ? "true" : "false");
  meta.emplace_back("tolerance", csv::number(e.tolerance));
  csv::write_header(os, meta, "epsilon,t,estimate");
  for (std::size_t i = 0; i < e.eps.size(); ++i)
    for (std::size_t j = 0; j < e.times.size(); ++j)
      os << csv::number(e.eps[i]) << ',' << csv::number(e.times[j]) << ',' << csv::number(e.estimates[i][j]) << '\n';
}

inline void write_csv(std::ostream& os, const ErgodicEstimate& e, csv::Metadata meta = {}) {
  meta.emplace_back("level", csv::number(e.level));
  meta.emplace_back("epsilon", csv::number(e.eps));
  meta.emplace_back("paths", std::to_string(e.paths));
  csv::write_header(os, meta, "t,ratio,stderr,f_ref");
  for (std::size_t j = 0; j < e.horizons.size(); ++j)
    os << csv::number(e.horizons[j]) << ',' << csv::number(e.ratios[j]) << ',' << csv::number(e.stderrs[j]) << ','
       << csv::number(e.f_ref) << '\n';
}

}  // namespace oulab

#endif
