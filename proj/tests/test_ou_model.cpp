#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "oulab/ou_model.hpp"
#include "support.hpp"

using namespace oulab;
using namespace oulab::testing;

namespace {

// X_t for n independent paths, one counter stream per path.
std::vector<double> endpoints(const OuModel& m, double t, std::size_t n, std::uint64_t seed, double dt = 0.05) {
  const OuStepper stepper(m);
  std::vector<double> xs(n);
  for (std::size_t i = 0; i < n; ++i) {
    RandomStream rng(seed, stream_id(StreamPurpose::simulate, i));
    double x = m.start();
    double s = 0.0;
    while (s < t - 1e-12) {
      const double h = std::min(dt, t - s);
      x = stepper.advance(x, s, h, rng);
      s += h;
    }
    xs[i] = x;
  }
  return xs;
}

LevyTriplet unit_jumps(double rate, double drift) {
  return LevyTriplet(drift, 0.0, JumpMeasure::compound_poisson(rate, FixedJump{1.0}));
}

}  // namespace

TEST(OuModel, RejectsNonPositiveMeanReversion) {
  EXPECT_THROW(OuModel(0.0, 0.0, gaussian(1.0)), ConfigError);
  EXPECT_THROW(OuModel(-1.0, 0.0, gaussian(1.0)), ConfigError);
  EXPECT_THROW(OuModel(1.0, std::nan(""), gaussian(1.0)), ConfigError);
}

TEST(OuModel, DefaultStepFollowsTimeScale) {
  EXPECT_DOUBLE_EQ(default_dt(OuModel(1.0, 0.0, gaussian(1.0))), 1e-3);
  EXPECT_DOUBLE_EQ(default_dt(OuModel(100.0, 0.0, gaussian(1.0))), 1e-4);
}

TEST(SimulatePath, ZeroDriverHalvesOverLogTwo) {
  const OuModel m(1.0, 2.0, LevyTriplet::zero());
  RandomStream rng(1, 0);
  const auto p = simulate_path(m, std::numbers::ln2, std::numbers::ln2, rng);
  ASSERT_EQ(p.values.size(), 2u);
  EXPECT_NEAR(p.values.back(), 1.0, 1e-15);
}

TEST(SimulatePath, ZeroDriverDecayIsExactAtEveryNode) {
  const OuModel m(0.7, -3.0, LevyTriplet::zero());
  RandomStream rng(1, 0);
  const auto p = simulate_path(m, 5.0, 0.01, rng);
  for (std::size_t k = 0; k < p.grid.size(); ++k) EXPECT_EQ(p.values[k], std::exp(-0.7 * p.grid[k]) * -3.0);
  EXPECT_EQ(rng.draws(), 0u);
}

TEST(SimulatePath, GridIsStrictlyIncreasingAndEndsAtHorizon) {
  const OuModel m(1.0, 0.0, gaussian(1.0));
  RandomStream rng(3, 1);
  const auto p = simulate_path(m, 1.05, 0.1, rng);
  EXPECT_EQ(p.grid.front(), 0.0);
  EXPECT_EQ(p.values.front(), 0.0);
  EXPECT_DOUBLE_EQ(p.horizon(), 1.05);
  for (std::size_t k = 1; k < p.grid.size(); ++k) EXPECT_GT(p.grid[k], p.grid[k - 1]);
  EXPECT_EQ(p.root_seed, 3u);
  EXPECT_EQ(p.stream_id, 1u);
}

TEST(SimulatePath, CoarseStepWarnsButRuns) {
  const OuModel m(5.0, 0.0, gaussian(1.0));
  RandomStream rng(3, 1);
  const auto p = simulate_path(m, 2.0, 0.5, rng);
  EXPECT_EQ(p.warnings.size(), 1u);
  EXPECT_EQ(p.values.size(), 5u);
}

TEST(SimulatePath, RejectsBadGrid) {
  const OuModel m(1.0, 0.0, gaussian(1.0));
  RandomStream rng(3, 1);
  EXPECT_THROW(simulate_path(m, 0.0, 0.1, rng), ConfigError);
  EXPECT_THROW(simulate_path(m, 1.0, 0.0, rng), ConfigError);
  EXPECT_THROW(simulate_path(m, 1.0, 2.0, rng), ConfigError);
}

TEST(SimulatePath, JumpMarksCarryPreJumpValues) {
  const OuModel m(1.0, 0.0, unit_jumps(3.0, 0.0));
  RandomStream rng(9, 2);
  const auto p = simulate_path(m, 5.0, 0.1, rng);
  ASSERT_FALSE(p.jumps.empty());
  for (std::size_t i = 0; i < p.jumps.size(); ++i) {
    EXPECT_EQ(p.jumps[i].size, 1.0);
    if (i > 0) {
      EXPECT_GE(p.jumps[i].time, p.jumps[i - 1].time);
    }
  }
}

TEST(SimulatePath, GaussianVarianceAtOne) {
  // sigma^2 (1 - e^{-2}) / 2 with sigma^2 = 2
  const OuModel m(1.0, 0.0, gaussian(std::sqrt(2.0)));
  const auto mo = moments(endpoints(m, 1.0, 100000, 21, 0.25));
  EXPECT_NEAR(mo.var, 1.0 - std::exp(-2.0), 3.0 * mo.var_se());
}

TEST(SimulatePath, UnitJumpMeanAtOne) {
  // raw jumps at rate 1: the compensator is undone by b = rate * c(1) = 1/2
  const OuModel m(1.0, 0.0, unit_jumps(1.0, 0.5));
  const auto mo = moments(endpoints(m, 1.0, 100000, 22, 0.25));
  EXPECT_NEAR(mo.mean, 1.0 - std::exp(-1.0), 3.0 * mo.mean_se());
}

TEST(SimulatePath, EulerSchemeIsCloseForSmallSteps) {
  const OuModel m(1.0, 1.0, gaussian(0.5, 0.3));
  const OuStepper euler(m, SimulationScheme::euler);
  std::vector<double> xs(20000);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    RandomStream rng(5, i);
    double x = m.start();
    for (int k = 0; k < 1000; ++k) x = euler.advance(x, k * 1e-3, 1e-3, rng);
    xs[i] = x;
  }
  const auto law = transition_triplet(m, 1.0);
  const auto mo = moments(xs);
  EXPECT_NEAR(mo.mean, law.mean(), 4.0 * mo.mean_se() + 1e-3);
}

TEST(Semigroup, RestartAtIntermediateTimeHasSameLaw) {
  const LevyTriplet drv(0.2, 0.7, JumpMeasure::compound_poisson(2.0, NormalJump{-0.5, 0.3}));
  const OuModel m(1.5, 0.4, drv);
  const std::size_t n = 10000;
  const auto direct = endpoints(m, 1.0, n, 31);
  const auto mid = endpoints(m, 0.4, n, 32);
  std::vector<double> restarted(n);
  for (std::size_t i = 0; i < n; ++i) restarted[i] = endpoints(m.with_start(mid[i]), 0.6, 1, 33 + i)[0];
  EXPECT_LT(ks_statistic(direct, restarted), ks_critical_1pct(n, n));
}

TEST(TransitionTriplet, GaussianVarianceClosedForm) {
  for (double t : {0.1, 1.0, 3.0}) {
    const auto law = transition_triplet(OuModel(2.0, 0.0, gaussian(1.5)), t);
    EXPECT_NEAR(law.gaussian_variance, 2.25 * (1.0 - std::exp(-4.0 * t)) / 4.0, 1e-15);
    EXPECT_EQ(law.jump_mass(-infinity, infinity), 0.0);
  }
  const auto far = transition_triplet(OuModel(1.0, 0.0, gaussian(1.0)), 60.0);
  EXPECT_NEAR(far.gaussian_variance, 0.5, 1e-15);
}

TEST(TransitionTriplet, GaussianMeanDecaysTowardDriftOverQ) {
  const auto law = transition_triplet(OuModel(2.0, 3.0, gaussian(1.0, 1.0)), 0.5);
  EXPECT_NEAR(law.drift, 3.0 * std::exp(-1.0) + 0.5 * (1.0 - std::exp(-1.0)), 1e-14);
  EXPECT_THROW(transition_triplet(OuModel(2.0, 3.0, gaussian(1.0)), 0.0), ConfigError);
}

TEST(TransitionTriplet, UnitJumpMassOnDiscountedInterval) {
  // every s in [0, 1) puts the unit jump into e^{s}(e^{-1}, 1]
  for (double rate : {1.0, 2.5}) {
    const auto law = transition_triplet(OuModel(1.0, 0.0, unit_jumps(rate, 0.0)), 1.0);
    EXPECT_NEAR(law.jump_mass(std::exp(-1.0), 1.0), rate, 1e-14);
    EXPECT_NEAR(law.jump_mass(0.5, 1.0), rate * std::log(2.0), 1e-14);
    EXPECT_EQ(law.jump_mass(-1.0, 0.0), 0.0);
    EXPECT_NEAR(law.jump_mass(-infinity, infinity), rate, 1e-14);
  }
}

TEST(TransitionTriplet, JumpMassIsMonotoneForDensityDrivers) {
  const LevyTriplet drv(0.0, 0.0, JumpMeasure::compound_poisson(1.5, ExponentialJump{2.0, SupportSign::two_sided}));
  const auto law = transition_triplet(OuModel(0.8, 0.0, drv), 2.0);
  double prev = 0.0;
  for (double hi : {0.1, 0.3, 1.0, 3.0, 10.0}) {
    const double m = law.jump_mass(0.05, hi);
    EXPECT_GE(m, prev);
    prev = m;
  }
  const auto sl = transition_triplet(OuModel(0.8, 0.0, LevyTriplet(0.0, 0.0, JumpMeasure::stable(1.5, 1.0, 0.3))), 2.0);
  EXPECT_EQ(sl.jump_mass(-1.0, 1.0), infinity);
  EXPECT_GT(sl.jump_mass(0.5, 1.0), sl.jump_mass(0.6, 1.0));
}

TEST(TransitionTriplet, StableDiscountedMassMatchesQuadrature) {
  const auto jumps = JumpMeasure::stable(1.2, 0.8, -0.4);
  const double q = 1.3, t = 0.9;
  const double closed = detail::discounted_mass(jumps, q, t, 0.2, 1.7);
  const double quad = quad::integrate([&](double s) { return jumps.mass(std::exp(s * q) * 0.2, std::exp(s * q) * 1.7); }, 0.0, t);
  EXPECT_NEAR(closed, quad, 1e-9);
}

TEST(TransitionTriplet, CompoundPoissonMeanIncludesJumps) {
  // E X_t = e^{-t} x + (b + rate (1 - c(1))) (1 - e^{-t})
  const double rate = 2.0, b = 0.3, x = 1.2, t = 0.7;
  const auto law = transition_triplet(OuModel(1.0, x, unit_jumps(rate, b)), t);
  EXPECT_NEAR(law.mean(), std::exp(-t) * x + (b + rate * 0.5) * (1.0 - std::exp(-t)), 1e-12);
  EXPECT_NEAR(law.variance(), rate * (1.0 - std::exp(-2.0 * t)) / 2.0, 1e-12);
}

TEST(TransitionTriplet, MomentsMatchSimulation) {
  const std::vector<LevyTriplet> drivers{
      gaussian(1.0, 0.5),
      LevyTriplet(-0.2, 0.5, JumpMeasure::compound_poisson(2.0, ExponentialJump{1.5, SupportSign::positive_only})),
      LevyTriplet(0.0, 0.3, JumpMeasure::compound_poisson(1.0, UniformJump{-2.0, 1.0})),
  };
  std::uint64_t seed = 100;
  for (const auto& drv : drivers) {
    const OuModel m(1.2, 0.8, drv);
    for (double t : {0.1, 1.0, 5.0}) {
      const auto law = transition_triplet(m, t);
      const auto mo = moments(endpoints(m, t, 40000, ++seed, 0.1));
      EXPECT_NEAR(mo.mean, law.mean(), 4.0 * mo.mean_se()) << "t=" << t;
      EXPECT_NEAR(mo.var, law.variance(), 4.0 * mo.var_se()) << "t=" << t;
    }
  }
}

TEST(InvariantTriplet, GaussianIsStandardNormalForSigmaSqrtTwo) {
  const auto inv = invariant_triplet(OuModel(1.0, 0.0, gaussian(std::sqrt(2.0))));
  ASSERT_TRUE(inv.exists());
  EXPECT_NEAR(inv.gaussian_variance, 1.0, 1e-15);
  EXPECT_EQ(inv.drift, 0.0);
}

TEST(InvariantTriplet, IsTheLongTimeLimitOfTransition) {
  for (double q : {0.5, 1.0, 4.0}) {
    const OuModel m(q, 2.0, gaussian(1.3, 0.4));
    const auto inv = invariant_triplet(m);
    const auto law = transition_triplet(m, 50.0 / q);
    EXPECT_LT(std::abs(law.gaussian_variance - inv.gaussian_variance), 1e-8);
    EXPECT_NEAR(law.drift, inv.drift, 1e-8);
  }
  const OuModel cp(1.0, 0.0, LevyTriplet(0.1, 0.0, JumpMeasure::compound_poisson(1.0, NormalJump{0.5, 1.0})));
  const auto inv = invariant_triplet(cp);
  const auto law = transition_triplet(cp, 50.0);
  EXPECT_NEAR(law.mean(), inv.mean(), 1e-8);
  EXPECT_NEAR(law.variance(), inv.variance(), 1e-8);
  EXPECT_NEAR(law.jump_mass(0.2, 1.0), inv.jump_mass(0.2, 1.0), 1e-8);
}

TEST(InvariantTriplet, AbsentWhenLogMomentDiverges) {
  const LevyTriplet drv(0.0, 1.0, JumpMeasure::log_power_density(1.0, 2.0, SupportSign::positive_only));
  const auto inv = invariant_triplet(OuModel(1.0, 0.0, drv));
  EXPECT_EQ(inv.status, InvariantStatus::absent);
  EXPECT_FALSE(inv.exists());
}

TEST(InvariantTriplet, ZeroDriverIsDegenerateAtOrigin) {
  const auto inv = invariant_triplet(OuModel(1.0, 5.0, LevyTriplet::zero()));
  ASSERT_TRUE(inv.exists());
  EXPECT_EQ(inv.drift, 0.0);
  EXPECT_EQ(inv.gaussian_variance, 0.0);
  EXPECT_EQ(inv.jump_mass(-infinity, infinity), 0.0);
}

TEST(ExistenceCriterion, GaussianCase) {
  const auto v = check_existence_criterion(OuModel(1.0, 0.0, gaussian(1.0)));
  EXPECT_EQ(v.kind, ExistenceKind::gaussian_case);
  EXPECT_TRUE(v.passes());
}

TEST(ExistenceCriterion, InverseSquareDensityGivesAlphaOneCTwo) {
  // T(v) = int_{|z| <= 1/v} v^2 z^2 |z|^{-2} dz = 2 v
  const LevyTriplet drv(0.0, 0.0, JumpMeasure::power_density(1.0, 2.0, SupportSign::two_sided));
  const auto v = check_existence_criterion(OuModel(1.0, 0.0, drv));
  ASSERT_EQ(v.kind, ExistenceKind::jump_case) << v.diagnostic;
  EXPECT_NEAR(v.alpha, 1.0, 1e-6);
  EXPECT_NEAR(v.c, 2.0, 1e-6);
}

TEST(ExistenceCriterion, StableIndexSetsAlpha) {
  for (double beta : {0.8, 1.0, 1.5}) {
    const auto v = check_existence_criterion(OuModel(1.0, 0.0, LevyTriplet(0.0, 0.0, JumpMeasure::stable(beta, 1.0, 0.2))));
    ASSERT_EQ(v.kind, ExistenceKind::jump_case) << v.diagnostic;
    EXPECT_NEAR(v.alpha, 2.0 - beta, 0.1);
    EXPECT_GT(v.c, 0.0);
  }
}

TEST(ExistenceCriterion, FiniteMeasureFails) {
  const auto v = check_existence_criterion(OuModel(1.0, 0.0, unit_jumps(2.0, 0.0)));
  EXPECT_EQ(v.kind, ExistenceKind::fails);
  EXPECT_FALSE(v.passes());
  const auto e = check_existence_criterion(
      OuModel(1.0, 0.0, LevyTriplet(0.0, 0.0, JumpMeasure::compound_poisson(2.0, NormalJump{0.0, 1.0}))));
  EXPECT_EQ(e.kind, ExistenceKind::fails);
}

TEST(ExistenceCriterion, PureDriftFails) {
  const auto v = check_existence_criterion(OuModel(1.0, 0.0, LevyTriplet(1.0, 0.0, JumpMeasure::none())));
  EXPECT_EQ(v.kind, ExistenceKind::fails);
}
