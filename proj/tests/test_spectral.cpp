#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "oulab/spectral.hpp"
#include "support.hpp"

using namespace oulab;
using namespace oulab::testing;

namespace {

OuModel standard_benchmark(double x0 = 0.0) { return OuModel(1.0, x0, gaussian(std::sqrt(2.0))); }

OuModel brownian_plus_jumps(double x0) {
  return OuModel(0.8, x0, LevyTriplet(0.3, 0.6, JumpMeasure::compound_poisson(1.5, NormalJump{0.4, 0.5})));
}

// int_0^t psi(e^{-sQ} theta) ds by brute-force quadrature in s.
Complex brute_exponent(const OuModel& m, double t, double theta) {
  auto f = [&](double s) { return evaluate_psi(m.driver(), std::exp(-m.mean_reversion() * s) * theta); };
  return quad::integrate(f, 0.0, t, 1e-11);
}

double sup_distance(const SpectralGrid& a, const SpectralGrid& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) d = std::max(d, std::abs(a.values[i] - b.values[i]));
  return d;
}

}  // namespace

TEST(TransitionCf, OneAtOriginAndBoundedByOne) {
  const auto m = brownian_plus_jumps(1.0);
  const auto g = transition_cf(m, 0.7, symmetric_theta_grid(10.0, 0.25));
  ASSERT_EQ(g.theta.size() % 2, 1u);
  const std::size_t mid = g.theta.size() / 2;
  EXPECT_EQ(g.values[mid], Complex(1.0, 0.0));
  for (std::size_t i = 0; i < g.theta.size(); ++i) {
    EXPECT_LE(std::abs(g.values[i]), 1.0 + 1e-15);
    EXPECT_EQ(g.values[i], std::conj(g.values[g.theta.size() - 1 - i]));
  }
  EXPECT_EQ(g.flagged_count(), 0u);
}

TEST(TransitionCf, StandardNormalInTheLongRun) {
  const auto m = standard_benchmark();
  for (double th : {0.3, 1.0, 2.5}) {
    EXPECT_NEAR(std::abs(transition_cf_at(m, 60.0, th) - std::exp(-th * th / 2.0)), 0.0, 1e-14);
    EXPECT_NEAR(std::abs(invariant_cf_at(m, th) - std::exp(-th * th / 2.0)), 0.0, 1e-15);
  }
}

TEST(TransitionCf, StartingPointFactorsOut) {
  const auto m0 = brownian_plus_jumps(0.0);
  const auto m = brownian_plus_jumps(2.5);
  const double t = 0.9;
  for (double th : {-3.0, -0.5, 0.7, 4.0}) {
    const Complex shift = std::exp(Complex(0.0, 2.5 * std::exp(-0.8 * t) * th));
    EXPECT_LT(std::abs(transition_cf_at(m, t, th) - shift * transition_cf_at(m0, t, th)), 1e-15);
  }
}

TEST(TransitionCf, ClosedFormsMatchQuadratureOfTheExponent) {
  const std::vector<LevyTriplet> drivers{
      LevyTriplet(0.2, 0.0, JumpMeasure::stable(0.8, 0.7, 0.5)),
      LevyTriplet(0.0, 0.0, JumpMeasure::stable(1.0, 1.2, -0.6)),
      LevyTriplet(-0.1, 0.3, JumpMeasure::stable(1.5, 0.9, 0.8)),
      LevyTriplet(0.3, 0.6, JumpMeasure::compound_poisson(1.5, ExponentialJump{2.0, SupportSign::two_sided})),
      LevyTriplet(0.0, 0.2, JumpMeasure::power_density(0.5, 2.2, SupportSign::two_sided, 0.0, 5.0)),
  };
  for (const auto& d : drivers) {
    const OuModel m(1.3, 0.0, d);
    for (double t : {0.2, 1.5}) {
      for (double th : {0.4, 1.0, 3.0}) {
        const Complex ref = brute_exponent(m, t, th);
        EXPECT_LT(std::abs(integrated_exponent(m, t, th) - ref), 1e-8) << m.driver().jumps().kind_name();
      }
    }
  }
}

TEST(TransitionCf, ApproachesInvariantCf) {
  for (const auto& m : {standard_benchmark(1.0), brownian_plus_jumps(1.0),
                        OuModel(1.0, 0.5, LevyTriplet(0.0, 0.0, JumpMeasure::stable(1.2, 1.0, 0.3)))}) {
    const auto thetas = symmetric_theta_grid(8.0, 0.1);
    const auto inv = invariant_cf(m, thetas);
    const double q = m.mean_reversion();
    const double d40 = sup_distance(transition_cf(m, 40.0 / q, thetas), inv);
    const double d10 = sup_distance(transition_cf(m, 10.0 / q, thetas), inv);
    EXPECT_LT(d40, 1e-6);
    EXPECT_GT(d10, d40);
  }
}

TEST(TransitionCf, SimulatedStableEndpointsMatch) {
  // calibrates the centering of the discounted stable draw against the cf
  for (double beta : {0.8, 1.0, 1.5}) {
    const OuModel m(1.1, 0.3, LevyTriplet(0.2, 0.0, JumpMeasure::stable(beta, 0.6, 0.7)));
    const OuStepper stepper(m);
    std::vector<double> xs(40000);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      RandomStream rng(404, stream_id(StreamPurpose::test, i));
      double x = m.start();
      for (int k = 0; k < 4; ++k) x = stepper.advance(x, 0.25 * k, 0.25, rng);
      xs[i] = x;
    }
    for (double th : {0.5, 1.0, 2.0}) {
      const auto e = empirical_cf(xs, th);
      const Complex target = transition_cf_at(m, 1.0, th);
      EXPECT_NEAR(e.value.real(), target.real(), 4.0 * e.se_re) << "beta=" << beta;
      EXPECT_NEAR(e.value.imag(), target.imag(), 4.0 * e.se_im) << "beta=" << beta;
    }
  }
}

TEST(InvariantCf, RefusesWithoutInvariantLaw) {
  const OuModel m(1.0, 0.0, LevyTriplet(0.0, 1.0, JumpMeasure::log_power_density(1.0, 2.0, SupportSign::positive_only)));
  EXPECT_THROW(invariant_cf(m, symmetric_theta_grid(1.0, 0.5)), PreconditionError);
  EXPECT_THROW(invariant_density(m, uniform_grid(-1, 1, 11)), PreconditionError);
}

TEST(InvertToDensity, StandardNormalInvariantDensity) {
  const auto y = uniform_grid(-5.0, 5.0, 401);
  const auto d = invariant_density(standard_benchmark(), y);
  double err = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) err = std::max(err, std::abs(d.raw[i] - normal_pdf(y[i], 0.0, 1.0)));
  EXPECT_LT(err, 1e-6);
  EXPECT_NEAR(d.total_mass, 1.0, 1e-4);
  EXPECT_EQ(d.tag.kind, LawKind::invariant);
}

TEST(InvertToDensity, GaussianTransitionAtLogTwo) {
  const double x = 1.4;
  const auto y = uniform_grid(-3.0, 4.0, 351);
  const auto d = transition_density(standard_benchmark(x), std::numbers::ln2, y);
  double err = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) err = std::max(err, std::abs(d.raw[i] - normal_pdf(y[i], x / 2.0, 0.75)));
  EXPECT_LT(err, 1e-6);
}

TEST(InvertToDensity, TranslationIdentityOnSharedGrids) {
  for (const auto& [m0, mx] : {std::pair{standard_benchmark(0.0), standard_benchmark(1.7)},
                               std::pair{brownian_plus_jumps(0.0), brownian_plus_jumps(1.7)}}) {
    for (double t : {0.5, 2.0}) {
      const auto y = uniform_grid(-4.0, 6.0, 201);
      const double shift = 1.7 * std::exp(-mx.mean_reversion() * t);
      std::vector<double> ys(y.size());
      for (std::size_t i = 0; i < y.size(); ++i) ys[i] = y[i] - shift;
      const auto plan = plan_transition_grid(mx, t, y);
      const auto thetas = symmetric_theta_grid(plan.cutoff, plan.spacing);
      const auto px = invert_to_density(transition_cf(mx, t, thetas), y);
      const auto p0 = invert_to_density(transition_cf(m0, t, thetas), ys);
      double err = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) err = std::max(err, std::abs(px.raw[i] - p0.raw[i]));
      EXPECT_LT(err, 1e-8);
    }
  }
}

TEST(InvertToDensity, JumpDriverHasUnitMass) {
  const auto y = uniform_grid(-6.0, 8.0, 561);
  const auto d = transition_density(brownian_plus_jumps(0.5), 2.0, y);
  EXPECT_NEAR(d.total_mass, 1.0, 1e-4);
  EXPECT_LT(d.max_negativity, 1e-8);
}

TEST(InvertToDensity, StableDriverDensityIsProper) {
  // heavy tails leave mass outside the window, but the cf decays
  const OuModel m(1.0, 0.0, LevyTriplet(0.0, 0.0, JumpMeasure::stable(1.5, 0.5, 0.0)));
  const auto d = invariant_density(m, uniform_grid(-30.0, 30.0, 1201));
  EXPECT_GT(d.total_mass, 0.98);
  EXPECT_LT(d.total_mass, 1.0);
  EXPECT_LT(d.max_negativity, 1e-6);
}

TEST(InvertToDensity, RefusesCfWithoutDecay) {
  // pure compound Poisson keeps an atom: |phi| never decays
  const OuModel m(1.0, 0.0, LevyTriplet(0.0, 0.0, JumpMeasure::compound_poisson(1.0, NormalJump{0.0, 1.0})));
  try {
    transition_density(m, 1.0, uniform_grid(-3.0, 3.0, 61));
    FAIL() << "expected a refusal";
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("heavy-tailed cf"), std::string::npos);
  }
}

TEST(InvertToDensity, ReportsRequiredCutoff) {
  const auto m = standard_benchmark();
  const auto g = invariant_cf(m, symmetric_theta_grid(3.0, 0.05));
  try {
    invert_to_density(g, uniform_grid(-1.0, 1.0, 21));
    FAIL() << "expected a refusal";
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("required cutoff"), std::string::npos);
  }
}

TEST(InvertToDensity, RefusesFlaggedGrid) {
  auto g = invariant_cf(standard_benchmark(), symmetric_theta_grid(10.0, 0.5));
  g.flagged[3] = 1;
  g.node_errors.push_back("synthetic");
  EXPECT_THROW(invert_to_density(g, uniform_grid(-1.0, 1.0, 21)), NumericalError);
}

TEST(InvertToDensity, RejectsNonUniformGrids) {
  const auto g = invariant_cf(standard_benchmark(), symmetric_theta_grid(10.0, 0.5));
  EXPECT_THROW(invert_to_density(g, {0.0, 1.0, 3.0}), ConfigError);
}

TEST(SpectralExport, CsvColumnsAndMetadata) {
  const auto g = invariant_cf(standard_benchmark(), symmetric_theta_grid(1.0, 0.5));
  std::ostringstream os;
  write_csv(os, g, {{"seed", "7"}});
  EXPECT_EQ(os.str().rfind("# seed: 7\n# law: invariant\n# flagged: 0\ntheta,re,im\n-1,", 0), 0u);
  const auto d = invert_to_density(invariant_cf(standard_benchmark(), symmetric_theta_grid(12.0, 0.25)),
                                   uniform_grid(-1.0, 1.0, 3));
  std::ostringstream ds;
  write_csv(ds, d);
  EXPECT_NE(ds.str().find("y,density\n-1,0.24197072451914"), std::string::npos);
}
