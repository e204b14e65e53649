#ifndef OULAB_LEVY_HPP
#define OULAB_LEVY_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <boost/math/quadrature/ooura_fourier_integrals.hpp>

#include "oulab/errors.hpp"
#include "oulab/quadrature.hpp"
#include "oulab/rng.hpp"

namespace oulab {

using Complex = std::complex<double>;

inline constexpr double infinity = std::numeric_limits<double>::infinity();
inline constexpr double euler_gamma = 0.57721566490153286061;

enum class SupportSign { two_sided, positive_only, negative_only };

inline std::string to_string(SupportSign s) {
  switch (s) {
    case SupportSign::positive_only: return "positive_only";
    case SupportSign::negative_only: return "negative_only";
    default: return "two_sided";
  }
}

inline bool has_positive_side(SupportSign s) { return s != SupportSign::negative_only; }
inline bool has_negative_side(SupportSign s) { return s != SupportSign::positive_only; }

/// Centering function of the Lévy-Khintchine representation, u / (1 + u^2).
inline double centering(double u) { return u / (1.0 + u * u); }
/// u - centering(u), without the cancellation near zero.
inline double centering_residual(double u) { return u / (1.0 + 1.0 / (u * u)); }

// ---------------------------------------------------------------------------
// Named laws for compound-Poisson jump sizes

struct FixedJump {
  double value;
};

/// Exponential jump sizes with the given rate. The side selects +E, -E or a
/// symmetric Laplace law.
struct ExponentialJump {
  double rate;
  SupportSign side = SupportSign::positive_only;
};

struct NormalJump {
  double mean;
  double sd;
};

struct UniformJump {
  double lower;
  double upper;
};

using JumpLaw = std::variant<FixedJump, ExponentialJump, NormalJump, UniformJump>;

namespace jump_law {

inline std::string name(const JumpLaw& law) {
  static constexpr const char* names[] = {"fixed", "exponential", "normal", "uniform"};
  return names[law.index()];
}

inline SupportSign support(const JumpLaw& law) {
  return std::visit(
      [](const auto& l) -> SupportSign {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, FixedJump>) {
          return l.value > 0 ? SupportSign::positive_only : SupportSign::negative_only;
        } else if constexpr (std::is_same_v<T, ExponentialJump>) {
          return l.side;
        } else if constexpr (std::is_same_v<T, NormalJump>) {
          return SupportSign::two_sided;
        } else {
          if (l.lower >= 0.0) return SupportSign::positive_only;
          if (l.upper <= 0.0) return SupportSign::negative_only;
          return SupportSign::two_sided;
        }
      },
      law);
}

inline void validate(const JumpLaw& law) {
  std::visit(
      [](const auto& l) {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, FixedJump>) {
          if (!std::isfinite(l.value) || l.value == 0.0)
            throw ConfigError("fixed jump size must be finite and nonzero (the jump measure has no atom at 0)");
        } else if constexpr (std::is_same_v<T, ExponentialJump>) {
          if (!(l.rate > 0.0) || !std::isfinite(l.rate)) throw ConfigError("exponential jump rate must be positive");
        } else if constexpr (std::is_same_v<T, NormalJump>) {
          if (!(l.sd > 0.0) || !std::isfinite(l.sd) || !std::isfinite(l.mean))
            throw ConfigError("normal jump law needs finite mean and positive sd");
        } else {
          if (!(l.upper > l.lower) || !std::isfinite(l.lower) || !std::isfinite(l.upper))
            throw ConfigError("uniform jump law needs finite lower < upper");
        }
      },
      law);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// E exp(i theta J).
inline Complex cf(const JumpLaw& law, double theta) {
  return std::visit(
      [theta](const auto& l) -> Complex {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, FixedJump>) {
          return std::polar(1.0, theta * l.value);
        } else if constexpr (std::is_same_v<T, ExponentialJump>) {
          const Complex up = l.rate / Complex(l.rate, -theta);
          const Complex down = l.rate / Complex(l.rate, theta);
          if (l.side == SupportSign::positive_only) return up;
          if (l.side == SupportSign::negative_only) return down;
          return 0.5 * (up + down);
        } else if constexpr (std::is_same_v<T, NormalJump>) {
          return std::polar(std::exp(-0.5 * l.sd * l.sd * theta * theta), l.mean * theta);
        } else {
          const double w = theta * (l.upper - l.lower);
          if (std::abs(w) < 1e-8) return std::polar(1.0, theta * 0.5 * (l.upper + l.lower));
          return (std::polar(1.0, theta * l.upper) - std::polar(1.0, theta * l.lower)) / Complex(0.0, w);
        }
      },
      law);
}

/// E exp(u J); +inf where the moment generating function diverges.
inline double mgf(const JumpLaw& law, double u) {
  return std::visit(
      [u](const auto& l) -> double {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, FixedJump>) {
          return std::exp(u * l.value);
        } else if constexpr (std::is_same_v<T, ExponentialJump>) {
          const double up = u < l.rate ? l.rate / (l.rate - u) : infinity;
          const double down = -u < l.rate ? l.rate / (l.rate + u) : infinity;
          if (l.side == SupportSign::positive_only) return up;
          if (l.side == SupportSign::negative_only) return down;
          return 0.5 * (up + down);
        } else if constexpr (std::is_same_v<T, NormalJump>) {
          return std::exp(l.mean * u + 0.5 * l.sd * l.sd * u * u);
        } else {
          const double w = u * (l.upper - l.lower);
          if (std::abs(w) < 1e-8) return std::exp(u * 0.5 * (l.upper + l.lower));
          return (std::exp(u * l.upper) - std::exp(u * l.lower)) / w;
        }
      },
      law);
}

/// P(lo < J <= hi).
inline double probability(const JumpLaw& law, double lo, double hi) {
  if (!(hi > lo)) return 0.0;
  return std::visit(
      [lo, hi](const auto& l) -> double {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, FixedJump>) {
          return (l.value > lo && l.value <= hi) ? 1.0 : 0.0;
        } else if constexpr (std::is_same_v<T, ExponentialJump>) {
          auto cdf_up = [&](double z) { return z <= 0.0 ? 0.0 : -std::expm1(-l.rate * z); };
          auto cdf_down = [&](double z) { return z >= 0.0 ? 1.0 : std::exp(l.rate * z); };
          const double up = cdf_up(hi) - cdf_up(lo);
          const double down = cdf_down(hi) - cdf_down(lo);
          if (l.side == SupportSign::positive_only) return up;
          if (l.side == SupportSign::negative_only) return down;
          return 0.5 * (up + down);
        } else if constexpr (std::is_same_v<T, NormalJump>) {
          return normal_cdf((hi - l.mean) / l.sd) - normal_cdf((lo - l.mean) / l.sd);
        } else {
          const double a = std::max(lo, l.lower);
          const double b = std::min(hi, l.upper);
          return b > a ? (b - a) / (l.upper - l.lower) : 0.0;
        }
      },
      law);
}

inline double sample(const JumpLaw& law, RandomStream& rng) {
  return std::visit(
      [&rng](const auto& l) -> double {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, FixedJump>) {
          return l.value;
        } else if constexpr (std::is_same_v<T, ExponentialJump>) {
          const double e = rng.exponential() / l.rate;
          if (l.side == SupportSign::positive_only) return e;
          if (l.side == SupportSign::negative_only) return -e;
          return rng.uniform() < 0.5 ? e : -e;
        } else if constexpr (std::is_same_v<T, NormalJump>) {
          return l.mean + l.sd * rng.normal();
        } else {
          return l.lower + (l.upper - l.lower) * rng.uniform();
        }
      },
      law);
}

/// E[f(J); lo < J <= hi] by quadrature against the law's density (exact for
/// the fixed law).
template <class F>
double expect_on(const JumpLaw& law, F&& f, double lo = -infinity, double hi = infinity) {
  constexpr double tol = 1e-11;
  return std::visit(
      [&](const auto& l) -> double {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, FixedJump>) {
          return (l.value > lo && l.value <= hi) ? f(l.value) : 0.0;
        } else if constexpr (std::is_same_v<T, ExponentialJump>) {
          // one exponential side, integrated over v = |J| in [va, vb]
          auto side = [&](double sign, double va, double vb) -> double {
            if (!(vb > va)) return 0.0;
            auto g = [&](double v) { return l.rate * std::exp(-l.rate * v) * f(sign * v); };
            if (std::isfinite(vb)) return quad::integrate(g, va, vb, tol);
            return quad::integrate_half_line(g, va, tol);
          };
          const double up = side(1.0, std::max(lo, 0.0), hi);
          const double down = side(-1.0, std::max(-hi, 0.0), -lo);
          if (l.side == SupportSign::positive_only) return up;
          if (l.side == SupportSign::negative_only) return down;
          return 0.5 * (up + down);
        } else if constexpr (std::is_same_v<T, NormalJump>) {
          const double a = std::max(lo, l.mean - 14.0 * l.sd);
          const double b = std::min(hi, l.mean + 14.0 * l.sd);
          if (!(b > a)) return 0.0;
          const double norm = 1.0 / (l.sd * std::sqrt(2.0 * std::numbers::pi));
          auto g = [&](double z) {
            const double s = (z - l.mean) / l.sd;
            return norm * std::exp(-0.5 * s * s) * f(z);
          };
          return quad::integrate(g, a, b, tol);
        } else {
          const double a = std::max(lo, l.lower);
          const double b = std::min(hi, l.upper);
          if (!(b > a)) return 0.0;
          return quad::integrate([&](double z) { return f(z); }, a, b, tol) / (l.upper - l.lower);
        }
      },
      law);
}

}  // namespace jump_law

// ---------------------------------------------------------------------------
// Jump measures

struct NoJumps {};

struct CompoundPoissonJumps {
  double rate;
  JumpLaw law;
  double centering_mean;  ///< E[J / (1 + J^2)], fixed at construction
};

/// Strictly stable Lévy measure c_{+/-} |z|^{-1-index}, parameterized so that
/// the jump part of the exponent matches the standard S1 form with the given
/// scale and skew, up to a linear drift term fixed by the centering function.
struct StableJumps {
  double index;
  double scale;
  double skew;
  double c_plus;
  double c_minus;
  double centering_drift;  ///< integral of u/(1+u^2) against the measure (regularized for index > 1)
};

/// Analytic level-density families that can round-trip through a config file.
struct PowerForm {
  double coefficient;
  double exponent;  ///< h(z) = coefficient * |z|^-exponent
  double lower;     ///< support |z| > lower
  double upper;     ///< support |z| < upper (may be +inf)
};

struct LogPowerForm {
  double coefficient;
  double log_exponent;  ///< h(z) = coefficient / (|z| log(|z|)^log_exponent)
  double lower;         ///< support |z| > lower, lower > 1
};

using DensityForm = std::variant<PowerForm, LogPowerForm>;

struct DensityJumps {
  std::function<double(double)> level_density;  ///< h(z), called only for z != 0
  std::optional<DensityForm> form;              ///< set when built from an analytic family
  std::vector<double> breakpoints;              ///< |z| values where h may be discontinuous
};

class JumpMeasure {
 public:
  using Kind = std::variant<NoJumps, CompoundPoissonJumps, StableJumps, DensityJumps>;

  JumpMeasure() = default;

  static JumpMeasure none() { return JumpMeasure(); }

  static JumpMeasure compound_poisson(double rate, JumpLaw law) {
    if (!(rate > 0.0) || !std::isfinite(rate)) throw ConfigError("compound Poisson rate must be positive");
    jump_law::validate(law);
    const double m = jump_law::expect_on(law, [](double z) { return centering(z); });
    JumpMeasure out;
    out.support_ = jump_law::support(law);
    out.kind_ = CompoundPoissonJumps{rate, std::move(law), m};
    return out;
  }

  static JumpMeasure stable(double index, double scale, double skew) {
    if (!(index > 0.0 && index < 2.0)) throw ConfigError("stable index must lie in (0, 2)");
    if (!(scale > 0.0) || !std::isfinite(scale)) throw ConfigError("stable scale must be positive");
    if (!(skew >= -1.0 && skew <= 1.0)) throw ConfigError("stable skew must lie in [-1, 1]");
    const double pi = std::numbers::pi;
    double total;
    double drift = 0.0;
    if (index == 1.0) {
      total = 2.0 * scale / pi;
    } else {
      total = std::pow(scale, index) * index / (std::tgamma(1.0 - index) * std::cos(pi * index / 2.0));
    }
    const double cp = 0.5 * total * (1.0 + skew);
    const double cm = 0.5 * total * (1.0 - skew);
    if (index != 1.0) drift = (cp - cm) * pi / (2.0 * std::cos(pi * index / 2.0));
    JumpMeasure out;
    out.support_ = skew == 1.0    ? SupportSign::positive_only
                   : skew == -1.0 ? SupportSign::negative_only
                                  : SupportSign::two_sided;
    out.kind_ = StableJumps{index, scale, skew, cp, cm, drift};
    return out;
  }

  /// General level density h(z) on the sides selected by `sign`. The
  /// integrability of (1 ^ z^2) h is spot-checked by quadrature.
  static JumpMeasure density(std::function<double(double)> h, SupportSign sign, std::vector<double> breakpoints = {},
                             std::optional<DensityForm> form = std::nullopt) {
    if (!h) throw ConfigError("density jump measure needs a level density");
    JumpMeasure out;
    out.support_ = sign;
    std::sort(breakpoints.begin(), breakpoints.end());
    out.kind_ = DensityJumps{std::move(h), std::move(form), std::move(breakpoints)};
    double check;
    try {
      check = out.integrate([](double z) { return std::min(1.0, z * z); });
    } catch (const QuadratureError&) {
      check = infinity;
    }
    if (!std::isfinite(check)) throw ConfigError("level density violates the integrability condition on (1 ^ z^2)");
    return out;
  }

  static JumpMeasure power_density(double coefficient, double exponent, SupportSign sign, double lower = 0.0,
                                   double upper = infinity) {
    if (!(coefficient > 0.0)) throw ConfigError("power density coefficient must be positive");
    if (!(lower >= 0.0) || !(upper > lower)) throw ConfigError("power density needs 0 <= lower < upper");
    if (lower == 0.0 && !(exponent < 3.0)) throw ConfigError("power density with lower = 0 needs exponent < 3");
    if (!std::isfinite(upper) && !(exponent > 1.0)) throw ConfigError("power density with infinite support needs exponent > 1");
    PowerForm form{coefficient, exponent, lower, upper};
    auto h = [form](double z) {
      const double a = std::abs(z);
      return (a > form.lower && a < form.upper) ? form.coefficient * std::pow(a, -form.exponent) : 0.0;
    };
    std::vector<double> br;
    if (lower > 0.0) br.push_back(lower);
    if (std::isfinite(upper)) br.push_back(upper);
    return density(h, sign, br, form);
  }

  static JumpMeasure log_power_density(double coefficient, double log_exponent, SupportSign sign,
                                       double lower = std::numbers::e) {
    if (!(coefficient > 0.0)) throw ConfigError("log-power density coefficient must be positive");
    if (!(lower > 1.0)) throw ConfigError("log-power density needs lower > 1");
    if (!(log_exponent > 1.0)) throw ConfigError("log-power density needs log_exponent > 1 for finite mass");
    LogPowerForm form{coefficient, log_exponent, lower};
    auto h = [form](double z) {
      const double a = std::abs(z);
      return a > form.lower ? form.coefficient / (a * std::pow(std::log(a), form.log_exponent)) : 0.0;
    };
    return density(h, sign, {lower}, form);
  }

  const Kind& kind() const noexcept { return kind_; }
  SupportSign support_sign() const noexcept { return support_; }
  bool is_none() const noexcept { return std::holds_alternative<NoJumps>(kind_); }
  bool has_finite_activity() const noexcept {
    return is_none() || std::holds_alternative<CompoundPoissonJumps>(kind_);
  }

  template <class T>
  const T* get() const noexcept {
    return std::get_if<T>(&kind_);
  }

  std::string kind_name() const {
    static constexpr const char* names[] = {"none", "compound_poisson", "stable", "density"};
    return names[kind_.index()];
  }

  /// Density of the measure at |z| = v on one side (+1 or -1); only for the
  /// absolutely continuous kinds.
  double side_density(double side, double v) const {
    if (const auto* s = get<StableJumps>()) return (side > 0 ? s->c_plus : s->c_minus) * std::pow(v, -1.0 - s->index);
    if (const auto* d = get<DensityJumps>()) return d->level_density(side * v);
    return 0.0;
  }

  /// Integral of f over (lo, hi] against the measure. f must vanish like
  /// z^2 at the origin when the measure has infinite activity there.
  template <class F>
  double integrate(F&& f, double lo = -infinity, double hi = infinity, double abs_tol = 1e-10) const {
    if (!(hi > lo)) return 0.0;
    if (is_none()) return 0.0;
    if (const auto* cp = get<CompoundPoissonJumps>()) return cp->rate * jump_law::expect_on(cp->law, f, lo, hi);
    double total = 0.0;
    if (has_positive_side(support_)) total += integrate_side(1.0, f, std::max(lo, 0.0), hi, abs_tol);
    if (has_negative_side(support_)) total += integrate_side(-1.0, f, std::max(-hi, 0.0), -lo, abs_tol);
    return total;
  }

  /// rho((lo, hi]); +inf when the interval reaches the origin of an
  /// infinite-activity measure.
  double mass(double lo, double hi) const {
    if (!(hi > lo) || is_none()) return 0.0;
    if (const auto* cp = get<CompoundPoissonJumps>()) return cp->rate * jump_law::probability(cp->law, lo, hi);
    if (const auto* s = get<StableJumps>()) {
      auto side = [&](double c, double a, double b) {
        if (!(b > a) || c == 0.0) return 0.0;
        if (a <= 0.0) return infinity;
        const double tail_b = std::isfinite(b) ? std::pow(b, -s->index) : 0.0;
        return c * (std::pow(a, -s->index) - tail_b) / s->index;
      };
      return side(s->c_plus, std::max(lo, 0.0), hi) + side(s->c_minus, std::max(-hi, 0.0), -lo);
    }
    return integrate([](double) { return 1.0; }, lo, hi);
  }

 private:
  template <class F>
  double integrate_side(double side, F& f, double va, double vb, double abs_tol) const {
    if (!(vb > va)) return 0.0;
    std::vector<double> cuts{va};
    std::vector<double> inner{1.0};
    if (const auto* d = get<DensityJumps>()) inner.insert(inner.end(), d->breakpoints.begin(), d->breakpoints.end());
    std::sort(inner.begin(), inner.end());
    for (double c : inner)
      if (c > va && c < vb) cuts.push_back(c);
    cuts.push_back(vb);
    auto g = [&](double v) {
      if (!(v > 0.0)) return 0.0;
      const double w = side_density(side, v);
      if (w == 0.0 || !std::isfinite(w)) return 0.0;
      return w * f(side * v);
    };
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      const double a = cuts[i];
      const double b = cuts[i + 1];
      if (!std::isfinite(b)) {
        total += tail_integral(g, a, abs_tol);
      } else if (a == 0.0) {
        total += quad::integrate_singular(g, a, b, abs_tol);
      } else {
        // log coordinates keep power-like densities smooth across decades
        auto w = [&](double u) {
          const double v = std::exp(u);
          return g(v) * v;
        };
        total += quad::integrate(w, std::log(a), std::log(b), abs_tol);
      }
    }
    return total;
  }

  // int_a^inf g(v) dv in log coordinates u = log v. Beyond u = 600 the
  // integrand cannot be evaluated in double precision; the remainder is
  // extrapolated from the power-law decay of g(e^u) e^u in u.
  template <class G>
  static double tail_integral(G& g, double a, double abs_tol) {
    constexpr double u_end = 600.0;
    auto w = [&](double u) { return g(std::exp(u)) * std::exp(u); };
    const double u0 = std::log(a);
    if (u0 >= u_end) return 0.0;
    double total = quad::integrate(w, u0, std::min(u0 + 50.0, u_end), abs_tol);
    if (u0 + 50.0 < u_end) total += quad::integrate(w, u0 + 50.0, u_end, abs_tol);
    const double w_end = w(u_end);
    if (w_end == 0.0) return total;
    const double w_mid = w(u_end / 2.0);
    const double q = std::log(std::abs(w_mid / w_end)) / std::log(2.0);
    if (!(q > 1.0)) return infinity;
    return total + w_end * u_end / (q - 1.0);
  }

  Kind kind_{NoJumps{}};
  SupportSign support_ = SupportSign::two_sided;
};

// ---------------------------------------------------------------------------
// Generating triplet

class LevyTriplet {
 public:
  LevyTriplet(double drift, double sigma, JumpMeasure jumps) : drift_(drift), sigma_(sigma), jumps_(std::move(jumps)) {
    if (!std::isfinite(drift) || !std::isfinite(sigma)) throw ConfigError("triplet drift and sigma must be finite");
    if (sigma < 0.0) throw ConfigError("triplet sigma must be >= 0");
    if (drift == 0.0 && sigma == 0.0 && jumps_.is_none())
      throw ConfigError("degenerate driver: use LevyTriplet::zero() for the zero process");
  }

  static LevyTriplet zero() {
    LevyTriplet t;
    return t;
  }

  double drift() const noexcept { return drift_; }
  double sigma() const noexcept { return sigma_; }
  const JumpMeasure& jumps() const noexcept { return jumps_; }
  bool is_zero() const noexcept { return drift_ == 0.0 && sigma_ == 0.0 && jumps_.is_none(); }

 private:
  LevyTriplet() = default;

  double drift_ = 0.0;
  double sigma_ = 0.0;
  JumpMeasure jumps_;
};

// ---------------------------------------------------------------------------
// Characteristic exponent, E exp(i theta Z_t) = exp(-t psi(theta)) with
// psi(theta) = -i b theta + sigma^2 theta^2 / 2 - int (e^{i theta u} - 1 - i theta u/(1+u^2)) rho(du).

namespace detail {

inline Complex stable_exponent(const StableJumps& s, double theta) {
  if (theta == 0.0) return {};
  const double a = std::abs(theta);
  const double sgn = theta > 0 ? 1.0 : -1.0;
  const double pi = std::numbers::pi;
  if (s.index == 1.0) {
    const double g = s.scale;
    return Complex(g * a, g * s.skew * (2.0 / pi) * sgn * a * std::log(a)) -
           Complex(0.0, theta * 2.0 * g * s.skew / pi * (1.0 - euler_gamma));
  }
  const double ga = std::pow(s.scale, s.index) * std::pow(a, s.index);
  return Complex(ga, -ga * s.skew * std::tan(pi * s.index / 2.0) * sgn) + Complex(0.0, theta * s.centering_drift);
}

// -int_0^inf (e^{i theta side v} - 1 - i theta side c(v)) g(v) dv for one side of a density measure
inline Complex density_side_exponent(const JumpMeasure& m, double side, double theta) {
  const auto* d = m.get<DensityJumps>();
  const double w = std::abs(theta);
  const double sg = (theta > 0 ? 1.0 : -1.0) * side;  // sign multiplying sin terms
  auto g = [&](double v) {
    const double h = v > 0.0 ? m.side_density(side, v) : 0.0;
    return std::isfinite(h) ? h : 0.0;
  };

  double re = 0.0;
  double im = 0.0;
  // small jumps: (0, 1], split at the oscillation scale
  std::vector<double> cuts{0.0};
  const double osc = std::min(1.0, 1.0 / w);
  if (osc < 1.0) cuts.push_back(osc);
  for (double b : d->breakpoints)
    if (b > 0.0 && b < 1.0) cuts.push_back(b);
  cuts.push_back(1.0);
  std::sort(cuts.begin(), cuts.end());
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double a = cuts[i];
    const double b = cuts[i + 1];
    if (!(b > a)) continue;
    re += quad::integrate_singular(
        [&](double v) {
          const double s = std::sin(0.5 * w * v);
          const double gv = g(v);
          return gv == 0.0 ? 0.0 : -2.0 * s * s * gv;
        },
        a, b, 1e-11);
    im += quad::integrate_singular(
        [&](double v) {
          const double gv = g(v);
          return gv == 0.0 ? 0.0 : (std::sin(w * v) - w * centering(v)) * gv;
        },
        a, b, 1e-11);
  }
  // large jumps: [1, inf). Non-oscillatory parts by exp-sinh, oscillatory by Ooura.
  double start = 1.0;
  for (double b : d->breakpoints)
    if (b > start) start = std::max(start, b);
  // pieces between 1 and the last breakpoint are finite and handled by Gauss-Kronrod
  std::vector<double> big{1.0};
  for (double b : d->breakpoints)
    if (b > 1.0) big.push_back(b);
  std::sort(big.begin(), big.end());
  for (std::size_t i = 0; i + 1 < big.size(); ++i) {
    re += quad::integrate([&](double v) { return (std::cos(w * v) - 1.0) * g(v); }, big[i], big[i + 1], 1e-11);
    im += quad::integrate([&](double v) { return (std::sin(w * v) - w * centering(v)) * g(v); }, big[i], big[i + 1],
                          1e-11);
  }
  if (g(start * (1.0 + 1e-12) + 1e-12) != 0.0 || g(2.0 * start) != 0.0) {
    const double mass = m.integrate([](double) { return 1.0; }, side > 0 ? start : -infinity, side > 0 ? infinity : -start);
    const double cmean = side * m.integrate([](double z) { return centering(z); }, side > 0 ? start : -infinity,
                                            side > 0 ? infinity : -start);
    static thread_local boost::math::quadrature::ooura_fourier_cos<double> cos_int(1e-10);
    static thread_local boost::math::quadrature::ooura_fourier_sin<double> sin_int(1e-10);
    auto shifted = [&](double t) { return g(start + t); };
    const auto c = cos_int.integrate(shifted, w);
    const auto s = sin_int.integrate(shifted, w);
    const double cs = std::cos(w * start);
    const double sn = std::sin(w * start);
    re += cs * c.first - sn * s.first - mass;
    im += sn * c.first + cs * s.first - w * cmean;
    const double err = std::abs(c.first) * c.second + std::abs(s.first) * s.second;
    if (!(err < 1e-7)) throw QuadratureError("oscillatory tail of the Levy exponent", err);
  }
  return -Complex(re, sg * im);
}

}  // namespace detail

/// Jump part of the exponent alone.
inline Complex jump_exponent(const JumpMeasure& jumps, double theta) {
  if (theta == 0.0 || jumps.is_none()) return {};
  if (const auto* cp = jumps.get<CompoundPoissonJumps>()) {
    return -cp->rate * (jump_law::cf(cp->law, theta) - 1.0 - Complex(0.0, theta * cp->centering_mean));
  }
  if (const auto* s = jumps.get<StableJumps>()) return detail::stable_exponent(*s, theta);
  Complex total{};
  if (has_positive_side(jumps.support_sign())) total += detail::density_side_exponent(jumps, 1.0, theta);
  if (has_negative_side(jumps.support_sign())) total += detail::density_side_exponent(jumps, -1.0, theta);
  return total;
}

inline Complex evaluate_psi(const LevyTriplet& triplet, double theta) {
  if (!std::isfinite(theta)) throw ConfigError("evaluate_psi: theta must be finite");
  if (theta == 0.0) return {};
  const double s = triplet.sigma();
  return Complex(0.5 * s * s * theta * theta, -triplet.drift() * theta) + jump_exponent(triplet.jumps(), theta);
}

/// log E exp(u Z_1) for u >= 0, the exponent that enters the passage-time
/// transform for drivers without positive jumps. +inf where it diverges.
inline double laplace_exponent(const LevyTriplet& triplet, double u) {
  const double s = triplet.sigma();
  double k = triplet.drift() * u + 0.5 * s * s * u * u;
  const auto& jumps = triplet.jumps();
  if (jumps.is_none() || u == 0.0) return k;
  if (const auto* cp = jumps.get<CompoundPoissonJumps>()) {
    const double m = jump_law::mgf(cp->law, u);
    if (!std::isfinite(m)) return infinity;
    return k + cp->rate * (m - 1.0 - u * cp->centering_mean);
  }
  if (has_positive_side(jumps.support_sign()))
    throw PreconditionError("Laplace exponent requested for a driver with positive jumps of infinite activity");
  return k + jumps.integrate([u](double z) {
    const double e = std::expm1(u * z);
    return e - u * centering(z);
  });
}

// ---------------------------------------------------------------------------
// Samplers

/// Standard S1 stable draw (Chambers-Mallows-Stuck, Weron's form) with
/// E exp(i theta Y) = exp(-|theta|^a (1 - i skew tan(pi a/2) sgn theta)) for
/// a != 1 and exp(-|theta| (1 + i skew (2/pi) sgn theta log|theta|)) for a = 1.
inline double standard_stable(double index, double skew, RandomStream& rng) {
  const double pi = std::numbers::pi;
  const double v = pi * (rng.uniform() - 0.5);
  const double w = rng.exponential();
  if (index == 1.0) {
    const double h = pi / 2.0 + skew * v;
    return (2.0 / pi) * (h * std::tan(v) - skew * std::log((pi / 2.0) * w * std::cos(v) / h));
  }
  const double t = skew * std::tan(pi * index / 2.0);
  const double b = std::atan(t) / index;
  const double s = std::pow(1.0 + t * t, 1.0 / (2.0 * index));
  return s * std::sin(index * (v + b)) / std::pow(std::cos(v), 1.0 / index) *
         std::pow(std::cos(v - index * (v + b)) / w, (1.0 - index) / index);
}

/// Exact draw of int_0^h k(u) dZ_u for the stable part, given kernel moments
/// A = int k, A_index = int k^index, B = int k log k.
inline double stable_kernel_draw(const StableJumps& s, double a, double a_index, double b, RandomStream& rng) {
  const double y = standard_stable(s.index, s.skew, rng);
  if (s.index == 1.0) {
    const double pi = std::numbers::pi;
    const double c = s.scale * a;
    const double shift = (2.0 / pi) * s.skew * (c * std::log(c) - s.scale * b + s.scale * a * (1.0 - euler_gamma));
    return c * y + shift;
  }
  return std::pow(std::pow(s.scale, s.index) * a_index, 1.0 / s.index) * y - s.centering_drift * a;
}

/// Tabulated inverse CDF for the big jumps (|z| > threshold) of a density
/// measure.
class BigJumpTable {
 public:
  BigJumpTable(const JumpMeasure& m, double threshold) {
    constexpr double v_max = 1e12;
    constexpr std::size_t bins = 2048;
    for (double side : {1.0, -1.0}) {
      if (side > 0 && !has_positive_side(m.support_sign())) continue;
      if (side < 0 && !has_negative_side(m.support_sign())) continue;
      Side tab;
      tab.sign = side;
      const double la = std::log(threshold);
      const double lb = std::log(v_max);
      tab.knots.resize(bins + 1);
      tab.cdf.assign(bins + 1, 0.0);
      for (std::size_t i = 0; i <= bins; ++i) tab.knots[i] = std::exp(la + (lb - la) * double(i) / double(bins));
      for (std::size_t i = 0; i < bins; ++i) {
        const double lo = side > 0 ? tab.knots[i] : -tab.knots[i + 1];
        const double hi = side > 0 ? tab.knots[i + 1] : -tab.knots[i];
        tab.cdf[i + 1] = tab.cdf[i] + m.mass(lo, hi);
      }
      const double all = side > 0 ? m.mass(threshold, infinity) : m.mass(-infinity, -threshold);
      dropped_ += std::max(0.0, all - tab.cdf.back());
      total_ += tab.cdf.back();
      sides_.push_back(std::move(tab));
    }
  }

  double rate() const noexcept { return total_; }
  /// Mass beyond the table's upper end, which the sampler never produces.
  double dropped_mass() const noexcept { return dropped_; }

  double sample(RandomStream& rng) const {
    double u = rng.uniform() * total_;
    for (const auto& s : sides_) {
      if (u <= s.cdf.back() || &s == &sides_.back()) {
        u = std::min(u, s.cdf.back());
        const auto it = std::upper_bound(s.cdf.begin(), s.cdf.end(), u);
        std::size_t i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(1, it - s.cdf.begin())) - 1;
        i = std::min(i, s.knots.size() - 2);
        const double span = s.cdf[i + 1] - s.cdf[i];
        const double f = span > 0 ? (u - s.cdf[i]) / span : 0.5;
        const double lv = std::log(s.knots[i]) + f * (std::log(s.knots[i + 1]) - std::log(s.knots[i]));
        return s.sign * std::exp(lv);
      }
      u -= s.cdf.back();
    }
    return 0.0;
  }

 private:
  struct Side {
    double sign;
    std::vector<double> knots;
    std::vector<double> cdf;
  };
  std::vector<Side> sides_;
  double total_ = 0.0;
  double dropped_ = 0.0;
};

/// Decomposition of the driver into pieces that are each sampled exactly:
/// linear drift, Gaussian part, finite-activity jumps, and a stable part.
struct SimulationPlan {
  double drift = 0.0;              ///< drift rate of the continuous part after centering
  double gaussian_variance = 0.0;  ///< per unit time; sigma^2 plus substituted small-jump variance
  double jump_rate = 0.0;          ///< rate of explicitly simulated jumps
  std::function<double(RandomStream&)> draw_jump;
  std::optional<StableJumps> stable;
  double truncation = 0.0;      ///< small-jump threshold (density kind)
  double dropped_mass = 0.0;    ///< big-jump mass beyond the sampler table
  double small_variance = 0.0;  ///< variance rate replaced by the Gaussian substitute
};

struct TruncationOptions {
  double variance_ratio = 1e-6;  ///< truncated variance relative to int_{|z|<=1} z^2 rho(dz)
  double max_jump_rate = 1e4;    ///< cap on the explicit jump rate
};

inline SimulationPlan plan_simulation(const LevyTriplet& triplet, const TruncationOptions& opts = {}) {
  SimulationPlan plan;
  plan.drift = triplet.drift();
  plan.gaussian_variance = triplet.sigma() * triplet.sigma();
  const auto& jumps = triplet.jumps();
  if (const auto* cp = jumps.get<CompoundPoissonJumps>()) {
    plan.drift -= cp->rate * cp->centering_mean;
    plan.jump_rate = cp->rate;
    plan.draw_jump = [law = cp->law](RandomStream& rng) { return jump_law::sample(law, rng); };
  } else if (const auto* s = jumps.get<StableJumps>()) {
    plan.stable = *s;
  } else if (jumps.get<DensityJumps>()) {
    auto small_var = [&](double d) { return jumps.integrate([](double z) { return z * z; }, -d, d); };
    const double v1 = small_var(1.0);
    double delta = 1.0;
    if (v1 > 0.0) {
      // largest delta on a quarter-decade grid meeting the variance ratio
      delta = 1e-16;
      for (int k = 0; k <= 64; ++k) {
        const double d = std::pow(10.0, -0.25 * k);
        if (small_var(d) <= opts.variance_ratio * v1) {
          delta = d;
          break;
        }
      }
      while (jumps.mass(delta, infinity) + jumps.mass(-infinity, -delta) > opts.max_jump_rate && delta < 1.0)
        delta = std::min(1.0, delta * std::pow(10.0, 0.25));
    }
    plan.truncation = delta;
    plan.small_variance = small_var(delta);
    plan.gaussian_variance += plan.small_variance;
    plan.drift += jumps.integrate(centering_residual, -delta, delta) -
                  jumps.integrate([](double z) { return centering(z); }, -infinity, -delta) -
                  jumps.integrate([](double z) { return centering(z); }, delta, infinity);
    auto table = std::make_shared<BigJumpTable>(jumps, delta);
    plan.jump_rate = table->rate();
    plan.dropped_mass = table->dropped_mass();
    if (plan.jump_rate > 0.0) plan.draw_jump = [table](RandomStream& rng) { return table->sample(rng); };
  }
  return plan;
}

struct IncrementParts {
  double continuous = 0.0;  ///< drift, Gaussian and stable contributions
  double jumps = 0.0;       ///< sum of explicitly simulated jumps
  std::uint64_t jump_count = 0;

  double total() const noexcept { return continuous + jumps; }
};

inline IncrementParts sample_increment_parts(const SimulationPlan& plan, double dt, RandomStream& rng) {
  if (!(dt > 0.0)) throw ConfigError("sample_increment: dt must be positive");
  IncrementParts out;
  out.continuous = plan.drift * dt;
  if (plan.gaussian_variance > 0.0) out.continuous += std::sqrt(plan.gaussian_variance * dt) * rng.normal();
  if (plan.stable) out.continuous += stable_kernel_draw(*plan.stable, dt, dt, 0.0, rng);
  if (plan.jump_rate > 0.0) {
    out.jump_count = rng.poisson(plan.jump_rate * dt);
    for (std::uint64_t i = 0; i < out.jump_count; ++i) out.jumps += plan.draw_jump(rng);
  }
  return out;
}

/// One draw distributed as Z_dt.
inline double sample_increment(const LevyTriplet& triplet, double dt, RandomStream& rng) {
  if (triplet.is_zero()) {
    if (!(dt > 0.0)) throw ConfigError("sample_increment: dt must be positive");
    return 0.0;
  }
  return sample_increment_parts(plan_simulation(triplet), dt, rng).total();
}

// ---------------------------------------------------------------------------
// Log-moment condition: int_{|z|>1} log|z| rho(dz) < inf

enum class MomentStatus { finite, infinite, undetermined };

inline std::string to_string(MomentStatus s) {
  switch (s) {
    case MomentStatus::finite: return "finite";
    case MomentStatus::infinite: return "infinite";
    default: return "undetermined";
  }
}

struct LogMomentResult {
  MomentStatus status = MomentStatus::undetermined;
  double value = std::numeric_limits<double>::quiet_NaN();  ///< the integral when finite
  std::string diagnostic;

  bool finite() const noexcept { return status == MomentStatus::finite; }
};

namespace detail {

inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Tail class of one side of a density measure. In log-coordinates u = log z
// the integrand becomes w(u) = u h(e^u) e^u; compare its decay with 1/u and,
// at the boundary, with 1/(u log u).
inline MomentStatus log_moment_tail(const JumpMeasure& m, double side, std::string& why) {
  constexpr int points = 48;
  constexpr double u_lo = 20.0;
  constexpr double u_hi = 600.0;
  std::vector<double> lu, lw, llu, lv;
  bool vanished = false;
  for (int i = 0; i < points; ++i) {
    const double u = u_lo * std::pow(u_hi / u_lo, double(i) / (points - 1));
    const double h = m.side_density(side, std::exp(u));
    if (!std::isfinite(h) || h < 0.0) {
      why = "level density not finite in the far tail";
      return MomentStatus::undetermined;
    }
    const double log_w = std::log(u) + std::log(h) + u;
    if (h == 0.0 || log_w < -700.0) {
      vanished = true;
      continue;
    }
    if (vanished) {
      why = "level density reappears after vanishing in the far tail";
      return MomentStatus::undetermined;
    }
    if (i >= points / 2) {
      lu.push_back(std::log(u));
      lw.push_back(log_w);
      llu.push_back(std::log(std::log(u)));
      lv.push_back(log_w + std::log(u));
    }
  }
  if (vanished && lu.size() < 4) {
    why = "tail decays faster than any power of log|z|";
    return MomentStatus::finite;
  }
  const double q = -fit_slope(lu, lw);
  if (q > 1.25) {
    why = "log-tail decay exponent " + std::to_string(q) + " > 1";
    return MomentStatus::finite;
  }
  if (q < 0.75) {
    why = "log-tail decay exponent " + std::to_string(q) + " < 1";
    return MomentStatus::infinite;
  }
  const double p = -fit_slope(llu, lv);
  if (p > 1.1) {
    why = "boundary case, log-log correction exponent " + std::to_string(p) + " > 1";
    return MomentStatus::finite;
  }
  if (p < 0.9) {
    why = "boundary case, log-log correction exponent " + std::to_string(p) + " < 1";
    return MomentStatus::infinite;
  }
  why = "tail too close to the convergence boundary to classify";
  return MomentStatus::undetermined;
}

}  // namespace detail

inline LogMomentResult log_moment_finite(const JumpMeasure& jumps) {
  LogMomentResult out;
  auto integrand = [](double z) { return std::log(std::abs(z)); };
  if (jumps.is_none()) {
    out.status = MomentStatus::finite;
    out.value = 0.0;
    out.diagnostic = "no jumps";
    return out;
  }
  if (const auto* cp = jumps.get<CompoundPoissonJumps>()) {
    // every named law has exponential or lighter tails
    out.status = MomentStatus::finite;
    out.value = jumps.integrate(integrand, 1.0, infinity) + jumps.integrate(integrand, -infinity, -1.0);
    out.diagnostic = "compound Poisson with " + jump_law::name(cp->law) + " jumps";
    return out;
  }
  if (const auto* s = jumps.get<StableJumps>()) {
    out.status = MomentStatus::finite;
    out.value = (s->c_plus + s->c_minus) / (s->index * s->index);
    out.diagnostic = "stable tails";
    return out;
  }
  out.status = MomentStatus::finite;
  for (double side : {1.0, -1.0}) {
    if (side > 0 && !has_positive_side(jumps.support_sign())) continue;
    if (side < 0 && !has_negative_side(jumps.support_sign())) continue;
    std::string why;
    const MomentStatus st = detail::log_moment_tail(jumps, side, why);
    out.diagnostic += (side > 0 ? "positive side: " : "negative side: ") + why + "; ";
    if (st == MomentStatus::infinite) {
      out.status = MomentStatus::infinite;
    } else if (st == MomentStatus::undetermined && out.status == MomentStatus::finite) {
      out.status = MomentStatus::undetermined;
    }
  }
  if (out.status == MomentStatus::finite) {
    try {
      out.value = jumps.integrate(integrand, 1.0, infinity) + jumps.integrate(integrand, -infinity, -1.0);
    } catch (const QuadratureError& e) {
      out.diagnostic += std::string("value quadrature failed: ") + e.what();
    }
  }
  if (out.status == MomentStatus::infinite) out.value = infinity;
  return out;
}

/// v^2 int_{|vz| <= 1} z^2 rho(dz), the truncated second moment appearing in
/// the jump-case local-time existence condition.
inline double truncated_second_moment(const JumpMeasure& jumps, double v) {
  const double r = 1.0 / std::abs(v);
  if (jumps.is_none()) return 0.0;
  if (const auto* s = jumps.get<StableJumps>()) {
    return v * v * (s->c_plus + s->c_minus) * std::pow(r, 2.0 - s->index) / (2.0 - s->index);
  }
  return v * v * jumps.integrate([](double z) { return z * z; }, -r, r);
}

}  // namespace oulab

#endif
