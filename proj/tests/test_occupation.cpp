#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "oulab/occupation.hpp"
#include "support.hpp"

using namespace oulab;
using namespace oulab::testing;

namespace {

OuModel standard_benchmark(double x0 = 0.0) { return OuModel(1.0, x0, gaussian(std::sqrt(2.0))); }

SamplePath path_of(const OuModel& m, double horizon, double dt, std::uint64_t seed, std::uint64_t stream = 0) {
  RandomStream rng(seed, stream);
  return simulate_path(m, horizon, dt, rng);
}

std::vector<double> linspace(double lo, double hi, std::size_t n) { return uniform_grid(lo, hi, n); }

}  // namespace

TEST(BandTime, ConstantZeroPath) {
  const auto p = path_of(OuModel(1.0, 0.0, LevyTriplet::zero()), 3.0, 0.01, 1);
  EXPECT_NEAR(occupation_time_in_band(p, 0.0, 0.1, 2.5), 2.5, 1e-12);
  EXPECT_EQ(occupation_time_in_band(p, 5.0, 1.0, 3.0), 0.0);
}

TEST(BandTime, PureDecayCrossesLevelOneAtUnitSpeed) {
  // X_t = 2 e^{-t} passes 1 at t = ln 2 with speed 1, so L_eps(1, t) -> 1
  const auto p = path_of(OuModel(1.0, 2.0, LevyTriplet::zero()), 2.0, 1e-4, 1);
  const double eps = 1e-3;
  EXPECT_NEAR(occupation_time_in_band(p, 1.0, eps, 2.0) / (2.0 * eps), 1.0, 1e-3);
  EXPECT_EQ(occupation_time_in_band(p, 1.0, eps, std::numbers::ln2 - 0.01), 0.0);
}

TEST(BandTime, NoInterpolationAcrossMarkedJumps) {
  SamplePath p;
  p.grid = {0.0, 1.0};
  p.values = {0.0, 2.0};
  p.dt = 1.0;
  EXPECT_NEAR(occupation_time_in_band(p, 1.0, 0.5, 1.0), 0.5, 1e-15);
  p.jumps.push_back(JumpMark{0.5, 2.0, 0.0});
  EXPECT_EQ(occupation_time_in_band(p, 1.0, 0.5, 1.0), 0.0);
  EXPECT_NEAR(occupation_time_in_band(p, 2.0, 0.5, 1.0), 0.5, 1e-15);
}

TEST(BandTime, RejectsTimesBeyondHorizon) {
  const auto p = path_of(standard_benchmark(), 1.0, 0.01, 2);
  EXPECT_THROW(occupation_time_in_band(p, 0.0, 0.1, 1.5), ConfigError);
  EXPECT_THROW(occupation_time_in_band(p, 0.0, 0.0, 0.5), ConfigError);
}

TEST(BandTime, ProfileIsAdditiveAndMonotone) {
  const OuModel m(1.0, 0.3, LevyTriplet(0.1, 0.8, JumpMeasure::compound_poisson(2.0, NormalJump{0.0, 0.7})));
  const auto p = path_of(m, 10.0, 1e-3, 3);
  ASSERT_FALSE(p.jumps.empty());
  const std::vector<double> times{0.37, 1.0, 2.2229, 5.0, 10.0};
  const auto prof = band_time_profile(p, 0.2, {0.3, 0.05}, times);
  for (std::size_t i = 0; i < 2; ++i) {
    const double eps = i == 0 ? 0.3 : 0.05;
    for (std::size_t j = 0; j < times.size(); ++j) {
      EXPECT_NEAR(prof[i][j], occupation_time_in_band(p, 0.2, eps, times[j]), 1e-12);
      if (j > 0) {
        EXPECT_GE(prof[i][j], prof[i][j - 1]);
      }
    }
  }
}

TEST(BandTime, LevelIntegralEqualsElapsedTime) {
  const std::vector<OuModel> models{
      standard_benchmark(0.5),
      OuModel(2.0, 0.0, LevyTriplet(0.0, 0.5, JumpMeasure::compound_poisson(3.0, ExponentialJump{1.0, SupportSign::two_sided}))),
  };
  std::uint64_t seed = 10;
  for (const auto& m : models) {
    const auto p = path_of(m, 5.0, 1e-3, ++seed);
    double lo = 0, hi = 0;
    for (double v : p.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    for (const auto& j : p.jumps) {
      lo = std::min(lo, j.pre);
      hi = std::max(hi, j.pre);
    }
    const double eps = 0.05;
    const auto xs = linspace(lo - 2 * eps, hi + 2 * eps, 4001);
    double integral = 0.0;
    std::vector<double> l(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) l[i] = occupation_time_in_band(p, xs[i], eps, 5.0) / (2.0 * eps);
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) integral += 0.5 * (xs[i + 1] - xs[i]) * (l[i] + l[i + 1]);
    EXPECT_NEAR(integral, 5.0, 5e-3);
  }
}

TEST(LocalTime, ZeroDriverIsFlaggedNotConverged) {
  const auto p = path_of(OuModel(1.0, 0.0, LevyTriplet::zero()), 4.0, 1e-3, 1);
  const std::vector<double> times{1.0, 2.0, 4.0};
  const auto sched = default_schedule(OuModel(1.0, 0.0, LevyTriplet::zero()));
  ASSERT_EQ(sched.size(), 6u);
  const auto e = local_time_estimate(p, 0.0, times, sched);
  for (std::size_t i = 0; i < sched.size(); ++i)
    for (std::size_t j = 0; j < times.size(); ++j) EXPECT_NEAR(e.estimates[i][j], times[j] / (2.0 * sched[i]), 1e-9);
  EXPECT_FALSE(e.converged);
  for (std::size_t k = 1; k < e.diagnostics.size(); ++k) EXPECT_GT(e.diagnostics[k], e.diagnostics[k - 1]);
}

TEST(LocalTime, DefaultScheduleUsesStationarySpread) {
  const auto s = default_schedule(standard_benchmark());
  ASSERT_EQ(s.size(), 6u);
  EXPECT_DOUBLE_EQ(s[0], 0.5);
  EXPECT_DOUBLE_EQ(s[5], 0.5 / 32.0);
}

TEST(LocalTime, RefusesScheduleBelowResolution) {
  const auto p = path_of(standard_benchmark(1.0), 1.0, 1e-2, 4);
  try {
    local_time_estimate(p, 0.0, {1.0}, {0.1, 0.05});
    FAIL() << "expected refusal";
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("resolution bound"), std::string::npos);
  }
  EXPECT_THROW(local_time_estimate(p, 0.0, {1.0}, {0.1, 0.2}), ConfigError);
}

TEST(LocalTime, GaussianDriverConvergesAndMeanDiagnosticShrinks) {
  const auto m = standard_benchmark();
  const auto sched = default_schedule(m);
  std::vector<double> times;
  for (int j = 1; j <= 50; ++j) times.push_back(0.2 * j);
  RandomStream level_rng(5, stream_id(StreamPurpose::test, 0));
  const auto levels = random_levels(m, 40, level_rng);
  std::vector<double> mean_diag(sched.size() - 1, 0.0);
  int converged = 0;
  for (std::size_t r = 0; r < levels.size(); ++r) {
    const auto p = path_of(m, 10.0, 1e-4, 6, stream_id(StreamPurpose::local_time, r));
    const auto e = local_time_estimate(p, levels[r], times, sched);
    converged += e.converged;
    for (std::size_t k = 0; k < mean_diag.size(); ++k) mean_diag[k] += e.diagnostics[k] / double(levels.size());
  }
  EXPECT_GE(converged, 32);
  for (std::size_t k = 1; k < mean_diag.size(); ++k) EXPECT_LT(mean_diag[k], mean_diag[k - 1]) << "k=" << k;
}

TEST(LocalTime, CentralIntervalOfStandardNormal) {
  const auto [lo, hi] = central_interval(standard_benchmark());
  EXPECT_NEAR(lo, -1.959964, 1e-4);
  EXPECT_NEAR(hi, 1.959964, 1e-4);
}

TEST(LocalTime, ExpectedLocalTimeMatchesGaussianQuadrature) {
  // p(s, 0, x) is normal with variance 1 - e^{-2s}
  const auto m = standard_benchmark();
  const double x = 0.6, t = 5.0;
  const double ref = quad::integrate(
      [&](double s) { return s > 0 ? normal_pdf(x, 0.0, -std::expm1(-2.0 * s)) : 0.0; }, 0.0, t, 1e-12);
  EXPECT_NEAR(expected_local_time(m, x, t), ref, 1e-7);
}

TEST(LocalTime, MonteCarloMeanMatchesExpectedLocalTime) {
  const auto m = standard_benchmark();
  const double x = 0.6, t = 5.0, eps = 0.05;
  std::vector<double> ls(2000);
  for (std::size_t i = 0; i < ls.size(); ++i) {
    const auto p = path_of(m, t, 1e-3, 8, stream_id(StreamPurpose::local_time, i));
    ls[i] = occupation_time_in_band(p, x, eps, t) / (2.0 * eps);
  }
  const auto mo = moments(ls);
  EXPECT_NEAR(mo.mean, expected_local_time(m, x, t), 3.0 * mo.mean_se());
}

TEST(Ergodic, RatioApproachesInvariantDensity) {
  const auto e = ergodic_ratio(standard_benchmark(), 0.0, {50.0, 200.0}, 0.05, 40, 11);
  EXPECT_NEAR(e.f_ref, 1.0 / std::sqrt(2.0 * std::numbers::pi), 1e-9);
  EXPECT_NEAR(e.ratios[1], e.f_ref, 3.0 * e.stderrs[1]);
  EXPECT_LT(e.stderrs[1], e.stderrs[0]);
  for (double r : e.ratios) EXPECT_GE(r, 0.0);
}

TEST(Ergodic, FarLevelIsNeverVisited) {
  const auto e = ergodic_ratio(standard_benchmark(), 10.0, {50.0}, 0.05, 10, 12);
  EXPECT_LT(e.f_ref, 1e-20);
  EXPECT_EQ(e.ratios[0], 0.0);
}

TEST(Ergodic, ThreadCountDoesNotChangeResults) {
  const auto a = ergodic_ratio(standard_benchmark(), 0.3, {5.0, 10.0}, 0.1, 8, 13, {1e-3, 1});
  const auto b = ergodic_ratio(standard_benchmark(), 0.3, {5.0, 10.0}, 0.1, 8, 13, {1e-3, 3});
  EXPECT_EQ(a.ratios, b.ratios);
  EXPECT_EQ(a.stderrs, b.stderrs);
}

TEST(Ergodic, RefusesWhenHypothesesFail) {
  const OuModel cp(1.0, 0.0, LevyTriplet(0.0, 0.0, JumpMeasure::compound_poisson(1.0, NormalJump{0.0, 1.0})));
  EXPECT_THROW(ergodic_ratio(cp, 0.0, {10.0}, 0.1, 4, 1), PreconditionError);
  const OuModel heavy(1.0, 0.0, LevyTriplet(0.0, 1.0, JumpMeasure::log_power_density(1.0, 2.0, SupportSign::positive_only)));
  EXPECT_THROW(ergodic_ratio(heavy, 0.0, {10.0}, 0.1, 4, 1), PreconditionError);
}

TEST(OccupationExport, LongFormat) {
  const auto p = path_of(OuModel(1.0, 0.0, LevyTriplet::zero()), 1.0, 0.5, 1);
  const auto e = local_time_estimate(p, 0.0, {1.0}, {1.0, 0.5});
  std::ostringstream os;
  write_csv(os, e);
  EXPECT_EQ(os.str().rfind("# level: 0\n# converged: false\n# tolerance: ", 0), 0u);
  EXPECT_NE(os.str().find("\nepsilon,t,estimate\n1,1,0.5\n0.5,1,1\n"), std::string::npos);
}
