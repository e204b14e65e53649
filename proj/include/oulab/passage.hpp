#ifndef OULAB_PASSAGE_HPP
#define OULAB_PASSAGE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "oulab/csv.hpp"
#include "oulab/errors.hpp"
#include "oulab/levy.hpp"
#include "oulab/ou_model.hpp"
#include "oulab/parallel.hpp"
#include "oulab/rng.hpp"

namespace oulab {

// ---------------------------------------------------------------------------
// Monte Carlo first passage strictly above a level

enum class CrossedBy { none, continuous, jump };

inline std::string to_string(CrossedBy c) {
  switch (c) {
    case CrossedBy::continuous: return "continuous";
    case CrossedBy::jump: return "jump";
    case CrossedBy::none: break;
  }
  return "none";
}

/// One simulated path. Censored paths carry the horizon as `time`, the value
/// there as `pre` and `at`, and crossed_by = none.
struct PassageRecord {
  double time = 0.0;
  double pre = 0.0;  ///< X_{T-}
  double at = 0.0;   ///< X_T; exactly the level for continuous crossings
  CrossedBy crossed_by = CrossedBy::none;
  bool censored = true;

  double overshoot(double level) const { return at - level; }
};

struct PassageSummary {
  std::size_t paths = 0;
  std::size_t uncensored = 0;
  double censoring_rate = 0.0;
  double creep_fraction = std::numeric_limits<double>::quiet_NaN();
  std::size_t exact_landings = 0;  ///< jump from below landing exactly on the level
  double exact_landing_frequency = std::numeric_limits<double>::quiet_NaN();
  std::array<double, 5> overshoot_quantiles{};  ///< at 0, 0.25, 0.5, 0.75, 1
  double min_overshoot() const { return overshoot_quantiles[0]; }
  double max_overshoot() const { return overshoot_quantiles[4]; }
};

struct PassageResult {
  double level = 0.0;
  double start = 0.0;
  double horizon = 0.0;
  double dt = 0.0;
  bool bridge = true;
  std::vector<PassageRecord> records;
  PassageSummary summary;
};

struct PassageOptions {
  double dt = 0.0;      ///< 0 selects default_dt(model)
  bool bridge = true;   ///< Brownian-bridge test for crossings inside a step
  unsigned threads = 1;
};

namespace detail {

inline double quantile_sorted(const std::vector<double>& v, double p) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = p * double(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - double(lo)) * (v[hi] - v[lo]);
}

inline PassageSummary summarize(const PassageResult& r) {
  PassageSummary s;
  s.paths = r.records.size();
  std::vector<double> over;
  std::size_t creeps = 0;
  for (const auto& rec : r.records) {
    if (rec.censored) continue;
    ++s.uncensored;
    if (rec.crossed_by == CrossedBy::continuous) ++creeps;
    if (rec.crossed_by == CrossedBy::jump && rec.pre < r.level && rec.at == r.level) ++s.exact_landings;
    over.push_back(rec.overshoot(r.level));
  }
  s.censoring_rate = s.paths ? double(s.paths - s.uncensored) / double(s.paths) : 0.0;
  if (s.uncensored) {
    s.creep_fraction = double(creeps) / double(s.uncensored);
    s.exact_landing_frequency = double(s.exact_landings) / double(s.uncensored);
  }
  std::sort(over.begin(), over.end());
  const std::array<double, 5> ps{0.0, 0.25, 0.5, 0.75, 1.0};
  for (std::size_t i = 0; i < ps.size(); ++i) s.overshoot_quantiles[i] = quantile_sorted(over, ps[i]);
  return s;
}

// Walks one path until it first exceeds `a` or reaches the horizon.
class PassageWalker {
 public:
  PassageWalker(const OuModel& model, const OuStepper& stepper, double a, bool bridge)
      : q_(model.mean_reversion()), a_(a), stepper_(stepper), bridge_(bridge) {
    const auto& plan = stepper.plan();
    gaussian_ = !model.driver().is_zero() && plan.gaussian_variance > 0.0;
    // A positive stable part with no Gaussian component moves by jumps only;
    // its crossings hide inside the continuous draw and are labelled jumps.
    stable_jumps_ = !model.driver().is_zero() && plan.stable && plan.gaussian_variance == 0.0 &&
                    plan.stable->c_plus > 0.0;
    // After landing exactly on a, does the path leave upwards at once?
    leaves_up_ = gaussian_ || (!model.driver().is_zero() && plan.stable.has_value()) ||
                 (!model.driver().is_zero() && plan.drift - q_ * a > 0.0);
    rate_ = model.driver().is_zero() ? 0.0 : plan.jump_rate;
  }

  PassageRecord walk(double x0, double horizon, double dt, RandomStream& rng, RandomStream& bridge_rng) {
    PassageRecord rec;
    double x = x0;
    for (std::uint64_t k = 0;; ++k) {
      const double t0 = double(k) * dt;
      if (!(t0 < horizon)) break;
      const double h = std::min(dt, horizon - t0);
      if (step(x, t0, h, rng, bridge_rng, rec)) return rec;
    }
    rec.time = horizon;
    rec.pre = rec.at = x;
    return rec;
  }

 private:
  // Continuous motion over [t, t + d] from x; true when the level is exceeded.
  bool continuous(double& x, double t, double d, RandomStream& rng, RandomStream& bridge_rng, PassageRecord& rec) {
    const double y = stepper_.continuous(x, d, rng);
    if (y > a_) {
      rec.censored = false;
      if (stable_jumps_) {
        rec.time = t + d;
        rec.pre = x;
        rec.at = y;
        rec.crossed_by = CrossedBy::jump;
      } else {
        rec.time = t + d * (a_ - x) / (y - x);
        rec.pre = rec.at = a_;
        rec.crossed_by = CrossedBy::continuous;
      }
      return true;
    }
    if (bridge_ && gaussian_ && d > 0.0) {
      const double v = stepper_.gaussian_step_variance(d);
      const double p = std::exp(-2.0 * (a_ - x) * (a_ - y) / v);
      if (bridge_rng.uniform() < p) {
        rec.censored = false;
        rec.time = t + 0.5 * d;
        rec.pre = rec.at = a_;
        rec.crossed_by = CrossedBy::continuous;
        return true;
      }
    }
    x = y;
    return false;
  }

  bool step(double& x, double t0, double h, RandomStream& rng, RandomStream& bridge_rng, PassageRecord& rec) {
    const std::uint64_t n = rate_ > 0.0 ? rng.poisson(rate_ * h) : 0;
    if (n == 0) return continuous(x, t0, h, rng, bridge_rng, rec);
    arrivals_.resize(n);
    for (auto& u : arrivals_) u = h * rng.uniform();
    std::sort(arrivals_.begin(), arrivals_.end());
    double t = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (continuous(x, t0 + t, arrivals_[i] - t, rng, bridge_rng, rec)) return true;
      t = arrivals_[i];
      const double post = x + stepper_.plan().draw_jump(rng);
      if (post > a_ || (post == a_ && leaves_up_)) {
        rec.censored = false;
        rec.time = t0 + t;
        rec.pre = x;
        rec.at = post;
        rec.crossed_by = CrossedBy::jump;
        return true;
      }
      x = post;
    }
    return continuous(x, t0 + t, h - t, rng, bridge_rng, rec);
  }

  double q_;
  double a_;
  const OuStepper& stepper_;
  bool bridge_;
  bool gaussian_ = false;
  bool stable_jumps_ = false;
  bool leaves_up_ = false;
  double rate_ = 0.0;
  std::vector<double> arrivals_;
};

}  // namespace detail

/// Simulates `paths` paths from the model's start until they first exceed
/// the level a, or until the horizon. Path i uses stream (passage, i) and its
/// bridge draws stream (passage_bridge, i), so toggling the bridge test
/// leaves the paths themselves unchanged.
inline PassageResult first_passage_mc(const OuModel& model, double a, double horizon, std::size_t paths,
                                      std::uint64_t seed, const PassageOptions& opts = {}) {
  if (!(a > model.start()))
    throw ConfigError("first passage: level " + csv::number(a) + " must exceed the start " +
                      csv::number(model.start()));
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ConfigError("first passage: horizon must be positive");
  if (paths == 0) throw ConfigError("first passage: need at least one path");
  PassageResult out;
  out.level = a;
  out.start = model.start();
  out.horizon = horizon;
  out.dt = opts.dt > 0.0 ? opts.dt : default_dt(model);
  out.bridge = opts.bridge;
  out.records.resize(paths);
  const OuStepper stepper(model);
  parallel_for(paths, opts.threads, [&](std::size_t i) {
    detail::PassageWalker walker(model, stepper, a, opts.bridge);
    RandomStream rng(seed, stream_id(StreamPurpose::passage, i));
    RandomStream bridge_rng(seed, stream_id(StreamPurpose::passage_bridge, i));
    out.records[i] = walker.walk(model.start(), horizon, out.dt, rng, bridge_rng);
  });
  out.summary = detail::summarize(out);
  return out;
}

/// Creep and overshoot statistics over the uncensored paths.
inline PassageSummary creep_jump_statistics(const PassageResult& r, std::size_t min_uncensored = 100) {
  auto s = detail::summarize(r);
  if (s.uncensored < min_uncensored)
    throw PreconditionError("creep statistics: " + std::to_string(s.uncensored) + " uncensored of " +
                            std::to_string(s.paths) + " paths, need at least " + std::to_string(min_uncensored));
  return s;
}

struct LaplaceEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
  std::size_t used = 0;
};

/// Mean of exp(-theta T) over uncensored paths.
inline LaplaceEstimate laplace_estimate(const PassageResult& r, double theta) {
  LaplaceEstimate e;
  double sum = 0.0, sq = 0.0;
  for (const auto& rec : r.records) {
    if (rec.censored) continue;
    const double v = std::exp(-theta * rec.time);
    sum += v;
    sq += v * v;
    ++e.used;
  }
  if (e.used < 2) throw PreconditionError("Laplace estimate: fewer than two uncensored paths");
  const double n = double(e.used);
  e.value = sum / n;
  e.stderr_ = std::sqrt(std::max(0.0, sq / n - e.value * e.value) / (n - 1.0));
  return e;
}

// ---------------------------------------------------------------------------
// Laplace transform of the passage time for drivers without positive jumps

/// E exp(-theta T_a) from x as a ratio of integrals
///   I(c) = int_0^inf y^{theta/Q - 1} exp(c y + g(y)) dy,
///   g(y) = -(1/Q) int_1^y kappa(u)/u du,   kappa(u) = log E exp(u Z_1).
struct HadjievTransform {
  double level = 0.0;
  double start = 0.0;
  std::vector<double> theta;
  std::vector<double> values;
  std::vector<double> log_numerator;
  std::vector<double> log_denominator;
  double s_lower = 0.0;  ///< quadrature range in s = log y
  double s_upper = 0.0;
  double step = 0.0;
  std::vector<double> mc_values;  ///< optional Monte Carlo comparison
  std::vector<double> mc_stderrs;
};

struct HadjievOptions {
  double step = 0.01;       ///< trapezoid spacing in s = log y
  double s_lower = -40.0;   ///< below this the integrand is y^{theta/Q-1} times a constant
  double s_cap = 14.0;      ///< refuse if the tail has not decayed by y = e^{s_cap}
  double tail_drop = 37.0;  ///< stop once log-integrand < peak - tail_drop (1e-16)
};

namespace detail {

// g on the grid s_k = s_lower + k h, extended until both integrands have
// dropped tail_drop below their peaks.
struct GTable {
  std::vector<double> s;
  std::vector<double> g;
};

inline GTable tabulate_g(const OuModel& model, double c_max, double theta_min, const HadjievOptions& o) {
  const double q = model.mean_reversion();
  const double b = model.driver().drift();
  const double sig2 = model.driver().sigma() * model.driver().sigma();
  const bool has_jumps = !model.driver().jumps().is_none();
  std::optional<LevyTriplet> jumps_only;
  if (has_jumps) jumps_only.emplace(0.0, 0.0, model.driver().jumps());
  auto kj_over_u = [&](double u) {
    const double k = laplace_exponent(*jumps_only, u);
    if (!std::isfinite(k)) throw PreconditionError("passage transform: E exp(uZ_1) diverges at u = " + csv::number(u));
    return k / u;
  };
  auto closed = [&](double y) { return -(b * (y - 1.0) + 0.25 * sig2 * (y * y - 1.0)) / q; };

  // jump part J(y) = int_1^y kappa_J(u)/u du, accumulated panel by panel in
  // log coordinates with a fixed Gauss-Kronrod rule (panels are short)
  GTable t;
  const std::size_t n_lower = static_cast<std::size_t>(std::llround(-o.s_lower / o.step));
  auto panel = [&](double s0, double s1) {
    if (!has_jumps) return 0.0;
    return quad::gauss_kronrod_fixed([&](double s) { return kj_over_u(std::exp(s)) * std::exp(s); }, s0, s1);
  };
  // from s = 0 downwards
  std::vector<double> down{0.0};
  for (std::size_t k = 0; k < n_lower; ++k) {
    const double s1 = -double(k) * o.step, s0 = -double(k + 1) * o.step;
    down.push_back(down.back() - panel(s0, s1));
  }
  for (std::size_t k = down.size(); k-- > 0;) {
    t.s.push_back(-double(k) * o.step);
    t.g.push_back(closed(std::exp(t.s.back())) - down[k] / q);
  }
  // upwards until the c_max integrand has a decaying tail
  double jump_acc = 0.0;
  double peak = -infinity;
  double prev = -infinity;
  const double p = theta_min / q;
  for (std::size_t k = 1;; ++k) {
    const double s0 = double(k - 1) * o.step, s1 = double(k) * o.step;
    jump_acc += panel(s0, s1);
    t.s.push_back(s1);
    t.g.push_back(closed(std::exp(s1)) - jump_acc / q);
    const double phi = p * s1 + c_max * std::exp(s1) + t.g.back();
    peak = std::max(peak, phi);
    if (phi < peak - o.tail_drop && phi < prev) break;
    if (s1 > o.s_cap)
      throw PreconditionError("passage transform: integrand has not decayed by y = " + csv::number(std::exp(s1)) +
                              " (log-integrand " + csv::number(phi) + ", peak " + csv::number(peak) +
                              "); the level may lie above what the drift can reach");
    prev = phi;
  }
  return t;
}

// log of int_0^inf exp(p s + c e^s + g(e^s)) ds over the tabulated grid,
// with the analytic left tail below s_lower.
inline double log_integral(const GTable& t, double p, double c, double h) {
  std::vector<double> phi(t.s.size());
  double peak = -infinity;
  for (std::size_t k = 0; k < t.s.size(); ++k) {
    phi[k] = p * t.s[k] + c * std::exp(t.s[k]) + t.g[k];
    peak = std::max(peak, phi[k]);
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < phi.size(); ++k) sum += (k == 0 || k + 1 == phi.size() ? 0.5 : 1.0) * std::exp(phi[k] - peak);
  sum *= h;
  // below s_lower the integrand is exp(p s) times exp(phi_0 - p s_0); Euler-Maclaurin joins the two
  const double f0 = std::exp(phi[0] - peak);
  sum += f0 / p + h * h * p * f0 / 12.0;
  return peak + std::log(sum);
}

}  // namespace detail

inline void require_no_positive_jumps(const OuModel& model) {
  const auto& jumps = model.driver().jumps();
  if (!jumps.is_none() && has_positive_side(jumps.support_sign()))
    throw PreconditionError("passage transform: driver has positive jumps (" + jumps.kind_name() + ", support " +
                            to_string(jumps.support_sign()) + "); the formula needs non-positive jumps");
}

inline HadjievTransform hadjiev_laplace(const OuModel& model, double a, const std::vector<double>& thetas,
                                        const HadjievOptions& opts = {}) {
  if (thetas.empty()) throw ConfigError("passage transform: empty theta grid");
  for (double th : thetas)
    if (!(th > 0.0) || !std::isfinite(th)) throw ConfigError("passage transform: theta values must be positive");
  if (!(a >= model.start())) throw ConfigError("passage transform: level must not lie below the start");
  require_no_positive_jumps(model);
  if (model.driver().is_zero()) throw PreconditionError("passage transform: zero driver never reaches the level");

  HadjievTransform out;
  out.level = a;
  out.start = model.start();
  out.theta = thetas;
  out.step = opts.step;
  const double theta_min = *std::min_element(thetas.begin(), thetas.end());
  const auto table = detail::tabulate_g(model, a, theta_min, opts);
  out.s_lower = table.s.front();
  out.s_upper = table.s.back();
  const double q = model.mean_reversion();
  for (double th : thetas) {
    const double num = detail::log_integral(table, th / q, model.start(), opts.step);
    const double den = detail::log_integral(table, th / q, a, opts.step);
    if (!std::isfinite(num) || !std::isfinite(den))
      throw NumericalError("passage transform: non-finite integral at theta = " + csv::number(th));
    out.log_numerator.push_back(num);
    out.log_denominator.push_back(den);
    out.values.push_back(a == model.start() ? 1.0 : std::exp(num - den));
  }
  return out;
}

/// Fills mc_values/mc_stderrs from a Monte Carlo run at the same level.
inline void attach_monte_carlo(HadjievTransform& t, const PassageResult& r) {
  if (r.level != t.level || r.start != t.start) throw ConfigError("passage transform: Monte Carlo run has a different level or start");
  t.mc_values.clear();
  t.mc_stderrs.clear();
  for (double th : t.theta) {
    const auto e = laplace_estimate(r, th);
    t.mc_values.push_back(e.value);
    t.mc_stderrs.push_back(e.stderr_);
  }
}

// ---------------------------------------------------------------------------
// Export

inline void write_csv(std::ostream& os, const PassageResult& r, csv::Metadata meta = {}) {
  meta.emplace_back("level", csv::number(r.level));
  meta.emplace_back("horizon", csv::number(r.horizon));
  meta.emplace_back("dt", csv::number(r.dt));
  meta.emplace_back("bridge", r.bridge ? "true" : "false");
  meta.emplace_back("censoring_rate", csv::number(r.summary.censoring_rate));
  meta.emplace_back("creep_fraction", csv::number(r.summary.creep_fraction));
  csv::write_header(os, meta, "path_id,T,pre,at,crossed_by,censored");
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    const auto& rec = r.records[i];
    os << i << ',' << csv::number(rec.time) << ',' << csv::number(rec.pre) << ',' << csv::number(rec.at) << ','
       << to_string(rec.crossed_by) << ',' << (rec.censored ? 1 : 0) << '\n';
  }
}

inline void write_csv(std::ostream& os, const HadjievTransform& t, csv::Metadata meta = {}) {
  meta.emplace_back("level", csv::number(t.level));
  meta.emplace_back("start", csv::number(t.start));
  csv::write_header(os, meta, "theta,value,mc_value,mc_stderr");
  for (std::size_t i = 0; i < t.theta.size(); ++i) {
    os << csv::number(t.theta[i]) << ',' << csv::number(t.values[i]) << ',';
    if (i < t.mc_values.size()) os << csv::number(t.mc_values[i]) << ',' << csv::number(t.mc_stderrs[i]);
    else os << ',';
    os << '\n';
  }
}

}  // namespace oulab

#endif
