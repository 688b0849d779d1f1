#include <gtest/gtest.h>

#include <cmath>

#include "iss/lyapcheck.hpp"
#include "iss/numeric.hpp"
#include "iss/repro.hpp"

using namespace iss;

namespace {

SystemDef cubic() { return SystemDef("cubic", {"x"}, {"u"}, {parse("-x^3 + u")}, {parse("x + x^3 + u")}); }

LyapunovCandidate cubic_certificate(double a) {
  const std::string as = format_double(a);
  LyapunovCandidate L;
  L.V = StateFunction(parse("abs(x)"), {"x"});
  L.psi1 = ScalarFn::parse("r", "r", FnClass::Kinf);
  L.psi2 = ScalarFn::parse("r", "r", FnClass::Kinf);
  L.gain = ScalarFn::parse("(r/" + as + ")^(1/3)", "r", FnClass::Kinf);
  L.flow = FlowRate::general(ScalarFn::parse("(1 - " + as + ")*s^3", "s", FnClass::PD));
  L.jump = JumpRate::general(ScalarFn::parse("s + (1 + " + as + ")*s^3", "s", FnClass::PD));
  return L;
}

SamplePlan small_plan(double radius = 3.0) {
  SamplePlan p;
  p.radius = radius;
  p.interior = 1024;
  p.boundary = 128;
  p.near_zero = 32;
  return p;
}

}  // namespace

TEST(Dini, AnalyticDerivatives) {
  const SystemDef pure("pure", {"x"}, {"u"}, {parse("-x^3")}, {parse("x")});
  const StateFunction absV(parse("abs(x)"), {"x"});
  const auto r1 = dini_derivative(pure, absV, {1.0}, {0.0}, 1e-3);
  EXPECT_NEAR(r1.value, -1.0, 1e-5);
  const SystemDef lin("lin", {"x"}, {}, {parse("-x")}, {parse("x")});
  EXPECT_EQ(dini_derivative(lin, StateFunction(parse("x^2"), {"x"}), {0.0}, {}, 1e-3).value, 0.0);
  EXPECT_NEAR(dini_derivative(cubic(), absV, {1.0}, {0.1}, 1e-3).value, -0.9, 1e-5);
}

TEST(Dini, ErrorEstimateIsHonest) {
  struct Case {
    SystemDef sys;
    std::string V;
    Vec x, u;
    double exact;
  };
  const SystemDef two("two", {"x1", "x2"}, {"u"}, {parse("-x1 + x2^2"), parse("-x2 + 3*sqrt(abs(x1)) + u")},
                      {parse("x1"), parse("x2")});
  std::vector<Case> cases{
      {cubic(), "abs(x)", {1.0}, {0.0}, -1.0},
      {cubic(), "abs(x)", {-0.7}, {0.2}, -(0.343 + 0.2)},
      {cubic(), "x^2", {1.3}, {-0.5}, 2 * 1.3 * (-2.197 - 0.5)},
      {cubic(), "exp(x) - 1", {0.4}, {1.0}, std::exp(0.4) * (1.0 - 0.064)},
      {two, "x1^2 + x2^2", {0.5, -1.0}, {0.3}, 2 * 0.5 * (-0.5 + 1.0) + 2 * -1.0 * (1.0 + 3 * std::sqrt(0.5) + 0.3)},
  };
  for (const auto& c : cases) {
    const auto r = dini_derivative(c.sys, StateFunction(parse(c.V), c.sys.states()), c.x, c.u, 1e-3);
    EXPECT_LE(std::fabs(r.value - c.exact), 5 * r.error) << c.V << " value " << r.value << " error " << r.error;
  }
}

TEST(Implication, CubicExampleCertified) {
  const auto rep = check_implication_form(cubic(), cubic_certificate(0.5), small_plan());
  EXPECT_TRUE(rep.certified);
  EXPECT_EQ(rep.flow.violations, 0u);
  EXPECT_EQ(rep.jump.violations, 0u);
  EXPECT_GT(rep.guarded, 100u);
  EXPECT_TRUE(rep.class_failures.empty());
}

TEST(Implication, TooFastRateIsViolatedWithReplayableWitness) {
  auto L = cubic_certificate(0.5);
  L.flow = FlowRate::general(ScalarFn::parse("2*s^3", "s", FnClass::PD));
  const auto rep = check_implication_form(cubic(), L, small_plan());
  ASSERT_FALSE(rep.certified);
  ASSERT_GT(rep.flow.violations, 0u);
  const Vec& x = rep.flow.witness_x;
  const Vec& xi = rep.flow.witness_xi;
  // Analytic derivative of |x| along -x^3 + xi.
  const double vdot = (x[0] > 0 ? 1.0 : -1.0) * (-x[0] * x[0] * x[0] + xi[0]);
  const double v = std::fabs(x[0]);
  EXPECT_GE(v, L.gain(std::fabs(xi[0])));
  EXPECT_TRUE(violates(vdot, -2.0 * v * v * v, 1e-6));
}

TEST(Implication, ZeroSystem) {
  const SystemDef zero("zero", {"x1", "x2"}, {"u"}, {parse("0*x1"), parse("0*x2")}, {parse("x1"), parse("x2")});
  LyapunovCandidate L;
  L.V = StateFunction(parse("x1^2 + x2^2"), {"x1", "x2"});
  L.gain = ScalarFn::parse("r");
  L.flow = FlowRate::general(ScalarFn());
  L.jump = JumpRate::general(ScalarFn::identity());
  EXPECT_TRUE(check_implication_form(zero, L, small_plan()).certified);
}

TEST(Implication, SandwichViolation) {
  auto L = cubic_certificate(0.5);
  L.psi1 = ScalarFn::parse("2*r", "r", FnClass::Kinf);
  const auto rep = check_implication_form(cubic(), L, small_plan());
  EXPECT_FALSE(rep.certified);
  EXPECT_GT(rep.sandwich.violations, 0u);
}

TEST(Implication, DeclaredClassFailureBlocksCertification) {
  auto L = cubic_certificate(0.5);
  L.gain = ScalarFn::parse("exp(-r)", "r", FnClass::Kinf);
  const auto rep = check_implication_form(cubic(), L, small_plan());
  EXPECT_FALSE(rep.certified);
  EXPECT_FALSE(rep.class_failures.empty());
}

TEST(Implication, ToleranceMonotonicity) {
  auto L = cubic_certificate(0.5);
  L.flow = FlowRate::general(ScalarFn::parse("0.52*s^3", "s", FnClass::PD));
  bool certified = false;
  for (double tol : {1e-9, 1e-6, 1e-3, 1e-2, 0.1, 1.0, 10.0}) {
    const bool now = check_implication_form(cubic(), L, small_plan(), tol).certified;
    if (certified) {
      EXPECT_TRUE(now) << tol;
    }
    certified = certified || now;
  }
  EXPECT_TRUE(certified);
}

TEST(Implication, NoGuardedSamplesThrows) {
  auto L = cubic_certificate(0.5);
  L.gain = ScalarFn::parse("1e9*r", "r");
  SamplePlan p = small_plan(1.0);
  p.zero_input_pairs = false;
  EXPECT_THROW(check_implication_form(cubic(), L, p), std::runtime_error);
}

TEST(MaxForm, JumpGrowthWithoutClaimIsViolated) {
  LyapunovCandidate L = cubic_certificate(0.5);
  L.form = CertForm::Max;
  L.gain = ScalarFn();
  L.jump = JumpRate::general(ScalarFn::identity());
  const auto rep = check_max_form(cubic(), L, small_plan());
  ASSERT_FALSE(rep.certified);
  // At x = 1, xi = 0 the jump lands at 2 > 1.
  EXPECT_GT(cubic().jump({1.0}, {0.0})[0], 1.0);
}

TEST(MaxForm, ZeroGainReducesToAlphaBound) {
  const SystemDef lin("lin", {"x"}, {"u"}, {parse("-2*x + u")}, {parse("0.5*x + u")});
  LyapunovCandidate L;
  L.form = CertForm::Max;
  L.V = StateFunction(parse("abs(x)"), {"x"});
  L.gain = ScalarFn();
  L.flow = FlowRate::exponential(1.0);
  L.jump = JumpRate::exponential(std::log(2.0));
  SamplePlan p = small_plan();
  // All inputs zero: alpha-bound |0.5 x| <= 0.5 |x| holds.
  p.input_radius = 1e-300;
  p.zero_input_pairs = true;
  EXPECT_EQ(check_max_form(lin, L, p).jump.violations, 0u);
  // Nonzero inputs: jump grows by |u| and the alpha-bound fails.
  p.input_radius = 1.0;
  EXPECT_GT(check_max_form(lin, L, p).jump.violations, 0u);
}

TEST(MaxForm, ConversionToImplicationAgrees) {
  const SystemDef lin("lin", {"x"}, {"u"}, {parse("-2*x + u")}, {parse("0.5*x + u")});
  LyapunovCandidate M;
  M.form = CertForm::Max;
  M.V = StateFunction(parse("abs(x)"), {"x"});
  M.gain = ScalarFn::parse("2*r", "r", FnClass::Kinf);
  M.flow = FlowRate::general(ScalarFn::identity());
  M.jump = JumpRate::general(ScalarFn::identity());
  const auto plan = small_plan();
  ASSERT_TRUE(check_max_form(lin, M, plan).certified);
  const auto conv = max_form_to_implication(M.gain, M.jump.alpha);
  LyapunovCandidate I = M;
  I.form = CertForm::Implication;
  I.gain = conv.chi;
  I.jump = JumpRate::general(conv.rho);
  EXPECT_TRUE(check_implication_form(lin, I, plan).certified);
}

TEST(MaxToImplication, Examples) {
  const auto grid = default_class_grid();
  const auto id = max_form_to_implication(ScalarFn::identity(), ScalarFn::parse("s/2", "s"), ScalarFn::identity());
  for (double r : grid) EXPECT_NEAR(id.chi(r), r, 1e-9 * r);

  const auto gamma = ScalarFn::parse("r^2");
  const auto alpha = ScalarFn::parse("exp(-1)*s", "s");
  const auto conv = max_form_to_implication(gamma, alpha);
  for (double r : log_grid(1e-3, 1e3, 40)) {
    EXPECT_GE(conv.chi(r), gamma(r));
    EXPECT_GT(conv.rho(r), alpha(r));
    // Bisection oracle for rho^-1(gamma(r)).
    const double target = gamma(r);
    double lo = 0.0, hi = 1.0;
    while (conv.rho(hi) < target) hi *= 2;
    for (int k = 0; k < 200; ++k) {
      const double mid = 0.5 * (lo + hi);
      (conv.rho(mid) < target ? lo : hi) = mid;
    }
    EXPECT_NEAR(conv.chi(r), std::max(gamma(r), hi), 1e-8 * conv.chi(r));
  }

  const auto zero = max_form_to_implication(gamma, ScalarFn(), ScalarFn::parse("2*s", "s"));
  for (double r : grid) EXPECT_NEAR(zero.chi(r), gamma(r), 1e-9 * gamma(r));
}

TEST(Fdt, CubicExampleMatchesClosedForm) {
  for (double a : {0.5, 0.1, 0.3}) {
    const auto L = cubic_certificate(a);
    const auto r = fdt_threshold(L.flow.phi, L.jump.alpha, default_class_grid(), FdtDirection::StabilizingFlow);
    ASSERT_FALSE(r.divergent());
    EXPECT_NEAR(r.bound, (1 + a) / (1 - a), 1e-6) << a;
    for (std::size_t k = 0; k < r.grid.size(); ++k) {
      // Independent closed form of the integral at lower limit y.
      const double y = r.grid[k];
      const double exact = (1 + a) / (2 * (1 - a)) * (2 + (1 + a) * y * y) / std::pow(1 + (1 + a) * y * y, 2);
      EXPECT_NEAR(r.values[k], exact, 1e-6 * exact) << y;
    }
  }
}

TEST(Fdt, ClosedFormHelperMatchesQuadrature) {
  for (double a : {0.1, 0.5, 0.9})
    for (double y : {1e-3, 0.7, 20.0}) {
      const auto q = integrate([a](double s) { return 1.0 / ((1 - a) * s * s * s); }, y, y + (1 + a) * y * y * y);
      EXPECT_NEAR(cubic_example_integral(y, a), q.value, 1e-6 * q.value);
    }
}

TEST(Fdt, ExponentialRatesAreConstant) {
  const auto r = fdt_threshold(ScalarFn::linear(2.0), ScalarFn::linear(std::exp(1.0)), default_class_grid(),
                               FdtDirection::StabilizingFlow);
  EXPECT_NEAR(r.bound, 0.5, 1e-8);
  const auto [lo, hi] = std::minmax_element(r.values.begin(), r.values.end());
  EXPECT_LE(*hi - *lo, 1e-8);
}

TEST(Fdt, JumpStabilizingDirection) {
  // V' <= V between jumps, V(g) <= exp(-1) V: int_{a/e}^a ds / s = 1.
  const auto r = fdt_threshold(ScalarFn::linear(-1.0), ScalarFn::linear(std::exp(-1.0)), default_class_grid(),
                               FdtDirection::StabilizingJumps);
  EXPECT_NEAR(r.bound, 1.0, 1e-8);
  // Cubic growth phi(s) = -s^3, alpha(s) = s/2: int_{a/2}^a ds/s^3 = 3/(2 a^2), inf at the largest a.
  const auto grid = default_class_grid();
  const auto c = fdt_threshold(ScalarFn::parse("-s^3", "s"), ScalarFn::linear(0.5), grid,
                               FdtDirection::StabilizingJumps);
  EXPECT_NEAR(c.bound, 1.5 / (grid.back() * grid.back()), 1e-9 * c.bound);
}

TEST(Fdt, NonIntegrableZeroIsReported) {
  // phi vanishes at s = 1, so the integral diverges whenever [a, 2a] contains 1.
  const auto r = fdt_threshold(ScalarFn::parse("s*(s - 1)^2", "s"), ScalarFn::linear(2.0), default_class_grid(),
                               FdtDirection::StabilizingFlow);
  ASSERT_TRUE(r.divergent());
  for (double a : r.divergent_at) {
    EXPECT_LE(a, 1.0);
    EXPECT_GE(2 * a, 1.0);
  }
}

namespace {

// sup over pairs of N - c L + d-term minus ln h for h = exp(1 - 0.5 L), c = 2,
// d = -1: equals sup_{i<=j} (j-i+1) - 1.5 (t_j - t_i) - 1, or -1 with no jumps.
double gadt_oracle(const std::vector<double>& t) {
  double best = -1.0;
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = i; j < t.size(); ++j)
      best = std::max(best, static_cast<double>(j - i + 1) - 1.5 * (t[j] - t[i]) - 1.0);
  return best;
}

}  // namespace

TEST(Gadt, PeriodicExamples) {
  const auto h = ScalarFn::parse("exp(1 - 0.5*x)", "x");
  const auto one = generate(PeriodicGen{1.0}, 0.0, 20.0);
  EXPECT_TRUE(gadt_check(2.0, -1.0, h, one).holds);
  EXPECT_LE(gadt_oracle(one.times()), 1e-12);
  const auto fast = generate(PeriodicGen{0.4}, 0.0, 20.0);
  const auto m = gadt_check(2.0, -1.0, h, fast);
  EXPECT_FALSE(m.holds);
  EXPECT_GT(gadt_oracle(fast.times()), 0.0);
  EXPECT_NEAR(m.worst_margin, gadt_oracle(fast.times()), 1e-6);
  EXPECT_TRUE(gadt_check(2.0, -1.0, h, ImpulseSequence(0, {}, 20)).holds);
}

TEST(Gadt, RandomSequencesMatchOracle) {
  const auto h = ScalarFn::parse("exp(1 - 0.5*x)", "x");
  Rng rng(41);
  for (int k = 0; k < 100; ++k) {
    const auto seq = generate(UniformRandomGen{0.3, 1.5}, 0.0, 10.0, rng.next());
    const double sup = gadt_oracle(seq.times());
    if (std::fabs(sup) < 1e-6) continue;
    EXPECT_EQ(gadt_check(2.0, -1.0, h, seq).holds, sup <= 0.0) << k;
  }
}

TEST(Gadt, RejectsInadmissibleH) {
  const auto seq = generate(PeriodicGen{1.0}, 0.0, 5.0);
  EXPECT_THROW(gadt_check(2.0, -1.0, ScalarFn::parse("1 + x", "x"), seq), std::invalid_argument);
  EXPECT_THROW(gadt_check(2.0, 0.0, ScalarFn::parse("exp(-x)", "x"), seq), std::invalid_argument);
}

TEST(Samples, PlanShape) {
  SamplePlan p = small_plan(2.0);
  const auto s = make_samples(2, 1, p);
  EXPECT_EQ(s.size(), 2 * (p.interior + p.boundary + p.near_zero));
  for (const auto& pair : s) {
    EXPECT_LE(norm_inf(pair.x), 2.0 + 1e-12);
    EXPECT_LE(norm2(pair.xi), 2.0 + 1e-12);
  }
  p.ball = true;
  for (const auto& pair : make_samples(3, 2, p)) EXPECT_LE(norm2(pair.x), 2.0 + 1e-12);
  const auto again = make_samples(2, 1, small_plan(2.0));
  EXPECT_EQ(again.front().x, s.front().x);
}
