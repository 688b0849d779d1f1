#include <gtest/gtest.h>

#include <cmath>

#include "iss/falsify.hpp"
#include "iss/numeric.hpp"

using namespace iss;

namespace {

SystemDef cubic() { return SystemDef("cubic", {"x"}, {"u"}, {parse("-x^3 + u")}, {parse("x + x^3 + u")}); }

SystemDef linear_scalar() { return SystemDef("lin", {"x"}, {}, {parse("-2*x")}, {parse("exp(1)*x")}); }

}  // namespace

TEST(ClassMember, MembersAreAdmissible) {
  const std::vector<DwellTimeClass> classes{FdtMinGap{1.25}, FdtMaxGap{0.8}, Adt{1.0, 0.5, 2.0, -1.0}};
  for (const auto& cls : classes)
    for (std::size_t k = 0; k < 30; ++k) {
      std::string desc;
      const auto seq = class_member(cls, 0.0, 40.0, k, 17, &desc);
      EXPECT_TRUE(member(seq, cls).holds) << describe(cls) << " trial " << k << " " << desc;
      EXPECT_FALSE(desc.empty());
    }
}

TEST(IssSweep, CubicExampleStaysBounded) {
  SweepOptions o;
  o.trials = 500;
  o.horizon = 30.0;
  o.state_radius = 2.0;
  o.input_radius = 0.5;
  const auto fit = iss_sweep(cubic(), FdtMinGap{1.25}, o);
  EXPECT_EQ(fit.diverged, 0u);
  EXPECT_FALSE(fit.not_iss);
  EXPECT_TRUE(fit.dominates);
  EXPECT_TRUE(fit.candidate_violations.empty());
  ASSERT_EQ(fit.trials.size(), 500u);
  for (const auto& t : fit.trials) {
    EXPECT_LE(t.peak, fit.beta(t.x0_norm, 0.0) + fit.gamma(t.input_norm) + 1e-12);
    EXPECT_GE(t.peak, t.x0_norm);
  }
}

TEST(IssSweep, EnvelopeIsMonotone) {
  SweepOptions o;
  o.trials = 200;
  o.horizon = 20.0;
  o.state_radius = 2.0;
  o.input_radius = 0.5;
  const auto fit = iss_sweep(cubic(), FdtMinGap{1.25}, o);
  const auto r = log_grid(1e-3, 2.0, 20);
  const auto t = linear_grid(0.0, 20.0, 21);
  for (std::size_t i = 0; i + 1 < r.size(); ++i)
    for (std::size_t j = 0; j + 1 < t.size(); ++j) {
      EXPECT_LE(fit.beta(r[i], t[j]), fit.beta(r[i + 1], t[j]) + 1e-15);
      EXPECT_GE(fit.beta(r[i], t[j]), fit.beta(r[i], t[j + 1]) - 1e-15);
    }
  for (std::size_t i = 0; i + 1 < r.size(); ++i) EXPECT_LE(fit.gamma(r[i]), fit.gamma(r[i + 1]));
}

TEST(IssSweep, ShortGapsDivergeWithReproducibleWitness) {
  SweepOptions o;
  o.trials = 100;
  o.horizon = 60.0;
  o.input_radius = 0.0;
  const auto fit = iss_sweep(linear_scalar(), FdtMinGap{0.4}, o);
  EXPECT_TRUE(fit.not_iss);
  EXPECT_GT(fit.diverged, 0u);
  ASSERT_TRUE(fit.witness.has_value());
  const auto& w = *fit.witness;
  ASSERT_EQ(w.x0.size(), 1u);
  // x(t) = exp(N(0,t) - 2t) x0, evaluated at the reported blow-up time.
  std::size_t n = 0;
  for (double s : w.impulse_times)
    if (s <= w.diverged_at) ++n;
  const double exact = std::exp(static_cast<double>(n) - 2.0 * w.diverged_at) * std::fabs(w.x0[0]);
  EXPECT_GE(exact, 0.5 * o.blowup);
  for (std::size_t k = 1; k < w.impulse_times.size(); ++k)
    EXPECT_GE(w.impulse_times[k] - w.impulse_times[k - 1], 0.4 - 1e-12);
}

TEST(IssSweep, ZeroDataGivesZeroTrajectories) {
  SweepOptions o;
  o.trials = 100;
  o.horizon = 10.0;
  o.input_radius = 0.0;
  o.fixed_x0 = Vec{0.0};
  const auto fit = iss_sweep(cubic(), FdtMinGap{1.25}, o);
  EXPECT_EQ(fit.diverged, 0u);
  for (const auto& t : fit.trials) EXPECT_EQ(t.peak, 0.0);
  o.trials = 99;
  EXPECT_THROW(iss_sweep(cubic(), FdtMinGap{1.25}, o), std::invalid_argument);
}

TEST(IssSweep, IsDeterministicInSeed) {
  SweepOptions o;
  o.trials = 120;
  o.horizon = 10.0;
  o.seed = 42;
  const auto a = iss_sweep(cubic(), FdtMinGap{1.25}, o);
  const auto b = iss_sweep(cubic(), FdtMinGap{1.25}, o);
  ASSERT_EQ(a.trials.size(), b.trials.size());
  for (std::size_t k = 0; k < a.trials.size(); ++k) {
    EXPECT_EQ(a.trials[k].seed, b.trials[k].seed);
    EXPECT_EQ(a.trials[k].peak, b.trials[k].peak);
    EXPECT_EQ(a.trials[k].impulses, b.trials[k].impulses);
  }
  EXPECT_EQ(a.M, b.M);
  EXPECT_EQ(a.lambda, b.lambda);
  o.seed = 43;
  const auto c = iss_sweep(cubic(), FdtMinGap{1.25}, o);
  bool differs = false;
  for (std::size_t k = 0; k < a.trials.size(); ++k) differs = differs || a.trials[k].peak != c.trials[k].peak;
  EXPECT_TRUE(differs);
}

TEST(GsCheck, HoldsAboveThresholdAndFailsBelow) {
  SweepOptions o;
  o.trials = 100;
  o.horizon = 30.0;
  o.state_radius = 2.0;
  o.input_radius = 0.0;
  // (1 + a)/(1 - a) at a = 0.1
  const auto ok = gs_check(cubic(), FdtMinGap{1.1 / 0.9}, o);
  EXPECT_TRUE(ok.holds);
  EXPECT_EQ(ok.diverged, 0u);
  EXPECT_TRUE(ok.dominates);
  for (const auto& t : ok.trials) EXPECT_LE(t.peak, ok.xi(t.x0_norm) + 1e-12);
  o.horizon = 60.0;
  const auto bad = gs_check(linear_scalar(), FdtMinGap{0.4}, o);
  EXPECT_FALSE(bad.holds);
  EXPECT_TRUE(bad.witness.has_value());
}

TEST(Tightness, ThreeRegimes) {
  const double c = 2.0, d = -1.0;
  const auto rep = gadt_tightness_demo(c, d, 60.0, {0.6, 0.4, 0.5});
  EXPECT_NEAR(rep.critical_gap, 0.5, 1e-15);
  ASSERT_EQ(rep.runs.size(), 3u);
  EXPECT_EQ(rep.runs[0].trend, "decreasing");
  EXPECT_EQ(rep.runs[1].trend, "growing");
  ASSERT_TRUE(rep.runs[1].exceeded_at.has_value());
  EXPECT_LT(*rep.runs[1].exceeded_at, 60.0);
  EXPECT_EQ(rep.runs[2].trend, "constant");
  EXPECT_LE(rep.runs[2].peak_spread, 1e-6);
  for (const auto& run : rep.runs) {
    EXPECT_NEAR(run.factor, std::exp(-d - c * run.gap), 1e-15);
    EXPECT_LE(run.max_closed_form_error, 1e-6);
    for (std::size_t k = 1; k < run.peaks.size() && run.peaks[k - 1] < 1e3; ++k)
      EXPECT_NEAR(run.peaks[k] / run.peaks[k - 1], run.factor, 1e-6 * run.factor) << run.gap << " " << k;
  }
  EXPECT_TRUE(rep.gadt_member);
  EXPECT_TRUE(rep.gadt_bounded);
  EXPECT_LE(rep.gadt_max_ratio, 1.0 + 1e-6);
}

TEST(Tightness, DefaultGaps) {
  const auto rep = gadt_tightness_demo(1.0, -0.5, 40.0);
  ASSERT_EQ(rep.runs.size(), 3u);
  EXPECT_NEAR(rep.runs[0].gap, 0.6, 1e-12);
  EXPECT_NEAR(rep.runs[1].gap, 0.4, 1e-12);
  EXPECT_NEAR(rep.runs[2].gap, 0.5, 1e-12);
  EXPECT_THROW(gadt_tightness_demo(-1.0, -0.5, 40.0), std::invalid_argument);
  EXPECT_THROW(gadt_tightness_demo(1.0, 0.5, 40.0), std::invalid_argument);
}
