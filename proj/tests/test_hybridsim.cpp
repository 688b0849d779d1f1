#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "iss/hybridsim.hpp"
#include "iss/numeric.hpp"

using namespace iss;

namespace {

SystemDef scalar_linear(double c, double d) {
  return SystemDef("linear", {"x"}, {"u"}, {parse(format_double(-c) + "*x + u")},
                   {parse(format_double(std::exp(-d)) + "*x")});
}

SystemDef cubic() { return SystemDef("cubic", {"x"}, {"u"}, {parse("-x^3 + u")}, {parse("x + x^3 + u")}); }

// Classical fixed-step RK4 for x' = -x^3 with jumps x + x^3.
double rk4_cubic(double x, const std::vector<double>& jumps, double tf, double dt) {
  auto f = [](double v) { return -v * v * v; };
  double t = 0.0;
  std::size_t next = 0;
  while (t < tf - 1e-15) {
    const double stop = next < jumps.size() ? std::min(jumps[next], tf) : tf;
    const auto steps = static_cast<long>(std::ceil((stop - t) / dt - 1e-9));
    const double h = (stop - t) / static_cast<double>(steps);
    for (long k = 0; k < steps; ++k) {
      const double k1 = f(x), k2 = f(x + 0.5 * h * k1), k3 = f(x + 0.5 * h * k2), k4 = f(x + h * k3);
      x += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    t = stop;
    if (next < jumps.size() && jumps[next] <= tf + 1e-15) {
      x = x + x * x * x;
      ++next;
    }
  }
  return x;
}

}  // namespace

TEST(System, RejectsBadDefinitions) {
  EXPECT_THROW(SystemDef("s", {"x"}, {}, {parse("-x + y")}, {parse("x")}), std::invalid_argument);
  EXPECT_THROW(SystemDef("s", {"x"}, {}, {parse("-x + 1")}, {parse("x")}), std::invalid_argument);
  EXPECT_THROW(SystemDef("s", {"x"}, {}, {parse("-x")}, {parse("x + 1")}), std::invalid_argument);
  EXPECT_THROW(SystemDef("s", {"x", "y"}, {}, {parse("-x")}, {parse("x"), parse("y")}), std::invalid_argument);
}

TEST(Simulate, ScalarLinearClosedForm) {
  const double c = 2.0, d = -1.0;
  const auto sys = scalar_linear(c, d);
  Rng rng(8);
  for (int k = 0; k < 5; ++k) {
    const auto seq = generate(UniformRandomGen{0.3, 1.2}, 0.0, 20.0, rng.next());
    const double x0 = rng.uniform(-3, 3);
    const auto traj = simulate(sys, seq, InputSignal::zero(1), {x0}, 0.0, 20.0);
    for (double t = 0.0; t <= 20.0; t += 0.013) {
      const double exact = std::exp(-d * static_cast<double>(seq.count(0.0, t)) - c * t) * x0;
      ASSERT_LE(std::fabs(traj.state_at(t)[0] - exact), 1e-6 * std::fabs(x0)) << t;
    }
  }
}

TEST(Simulate, PureOde) {
  const SystemDef sys("decay", {"x"}, {}, {parse("-x")}, {parse("x")});
  const auto traj = simulate(sys, ImpulseSequence(0, {}, 10), InputSignal::zero(0), {1.0}, 0.0, 10.0);
  for (double t = 0.0; t <= 10.0; t += 0.1) EXPECT_NEAR(traj.state_at(t)[0], std::exp(-t), 1e-8);
}

TEST(Simulate, CubicExampleMatchesRk4) {
  const auto seq = generate(PeriodicGen{1.2}, 0.0, 6.0);
  const auto traj = simulate(cubic(), seq, InputSignal::zero(1), {0.5}, 0.0, 6.0);
  for (double tf : {0.7, 1.2, 2.5, 3.6, 5.9, 6.0}) {
    std::vector<double> j;
    for (double t : seq.times())
      if (t <= tf) j.push_back(t);
    EXPECT_NEAR(traj.state_at(tf)[0], rk4_cubic(0.5, j, tf, 1e-5), 1e-5) << tf;
  }
}

TEST(Simulate, CubicExamplePeaksDecay) {
  const auto seq = generate(PeriodicGen{1.2}, 0.0, 60.0);
  const auto traj = simulate(cubic(), seq, InputSignal::zero(1), {0.5}, 0.0, 60.0);
  ASSERT_FALSE(traj.diverged());
  double prev = 0.5 + 0.125;
  for (const auto& j : traj.jumps()) {
    EXPECT_LT(j.post[0], prev);
    prev = j.post[0];
  }
  EXPECT_LE(traj.sup_norm(), 0.5 + 1e-12);
}

TEST(Simulate, LeftLimits) {
  const double c = 2.0, d = -1.0;
  const auto seq = generate(PeriodicGen{0.7}, 0.0, 5.0);
  const auto traj = simulate(scalar_linear(c, d), seq, InputSignal::zero(1), {1.5}, 0.0, 5.0);
  EXPECT_NEAR(traj.left_limit(0.7)[0], std::exp(-c * 0.7) * 1.5, 1e-9);
  EXPECT_NEAR(traj.state_at(0.7)[0], std::exp(-d - c * 0.7) * 1.5, 1e-9);
  EXPECT_EQ(traj.left_limit(1.0), traj.state_at(1.0));
  EXPECT_EQ(traj.left_limit(0.0)[0], 1.5);
  EXPECT_THROW(traj.left_limit(5.5), std::out_of_range);
}

TEST(Simulate, JumpConsistencyAndRightContinuity) {
  const SystemDef sys("pair", {"x1", "x2"}, {"u"}, {parse("-x1 + x2^2"), parse("-x2 + 3*sqrt(abs(x1)) + u")},
                      {parse("exp(-1)*x1 + u"), parse("exp(-1)*x2")});
  const InputSignal u({0.0, 0.9, 2.1}, {{0.2}, {-0.3}, {0.05}});
  const auto seq = generate(UniformRandomGen{0.2, 0.8}, 0.0, 6.0, 5);
  const auto traj = simulate(sys, seq, u, {0.4, -0.2}, 0.0, 6.0);
  ASSERT_EQ(traj.jumps().size(), seq.size());
  for (const auto& j : traj.jumps()) {
    const Vec g = sys.jump(j.pre, u.left_value(j.t));
    EXPECT_LE(std::hypot(g[0] - j.post[0], g[1] - j.post[1]), 1e-12);
  }
  for (std::size_t k = 1; k < traj.segments().size(); ++k) {
    const auto& seg = traj.segments()[k];
    const Vec first{seg.x[0], seg.x[1]};
    EXPECT_EQ(first, traj.state_at(seg.a));
  }
}

TEST(Simulate, InputBreakpointAtImpulseUsesLeftValue) {
  const SystemDef sys("hold", {"x"}, {"u"}, {parse("0*x")}, {parse("x + u")});
  const InputSignal u({0.0, 2.0}, {{1.0}, {5.0}});
  const auto traj = simulate(sys, ImpulseSequence(0, {2.0}, 4), u, {0.0}, 0.0, 4.0);
  EXPECT_DOUBLE_EQ(traj.state_at(3.0)[0], 1.0);
}

TEST(Simulate, ImpulsesNotAfterT0AreIgnored) {
  const auto sys = scalar_linear(0.0, -std::log(2.0));
  const auto seq = ImpulseSequence(0, {1.0, 2.0, 3.0}, 4.0);
  const auto traj = simulate(sys, seq, InputSignal::zero(1), {1.0}, 2.0, 4.0);
  ASSERT_EQ(traj.jumps().size(), 1u);
  EXPECT_NEAR(traj.final_state()[0], 2.0, 1e-12);
}

TEST(Simulate, ZeroIsInvariant) {
  const auto seq = generate(PeriodicGen{0.3}, 0.0, 10.0);
  const auto traj = simulate(cubic(), seq, InputSignal::zero(1), {0.0}, 0.0, 10.0);
  EXPECT_EQ(traj.sup_norm(), 0.0);
}

TEST(Simulate, ToleranceRefinement) {
  const auto seq = generate(PeriodicGen{1.2}, 0.0, 8.0);
  SimOptions coarse, fine;
  coarse.atol = coarse.rtol = 1e-8;
  fine.atol = fine.rtol = 5e-9;
  const double a = simulate(cubic(), seq, InputSignal::constant({0.1}), {0.9}, 0.0, 8.0, coarse).final_state()[0];
  const double b = simulate(cubic(), seq, InputSignal::constant({0.1}), {0.9}, 0.0, 8.0, fine).final_state()[0];
  EXPECT_LE(std::fabs(a - b), 10 * 5e-9);
}

TEST(Simulate, DivergenceIsReported) {
  const SystemDef sys("blowup", {"x"}, {}, {parse("x^2")}, {parse("x")});
  const auto traj = simulate(sys, ImpulseSequence(0, {}, 2), InputSignal::zero(0), {1.0}, 0.0, 2.0);
  ASSERT_TRUE(traj.diverged());
  EXPECT_NEAR(traj.diverged_at(), 1.0, 1e-3);
}

TEST(Simulate, DomainErrorsPropagate) {
  const SystemDef sys("log", {"x"}, {}, {parse("-x + 0*ln(1 + x)")}, {parse("x")});
  EXPECT_THROW(simulate(sys, ImpulseSequence(0, {}, 1), InputSignal::zero(0), {-2.0}, 0.0, 1.0), EvalError);
}

TEST(ShiftInvariance, Examples) {
  const auto seq = generate(UniformRandomGen{0.4, 1.0}, 0.0, 8.0, 9);
  const auto lin = scalar_linear(2.0, -1.0);
  EXPECT_EQ(shift_invariance_check(lin, seq, InputSignal::zero(1), {1.0}, 0.0), 0.0);
  EXPECT_LE(shift_invariance_check(lin, seq, InputSignal::zero(1), {1.0}, 3.0), 1e-7);
  const auto ex = generate(PeriodicGen{1.25}, 0.0, 8.0);
  EXPECT_LE(shift_invariance_check(cubic(), ex, InputSignal({0.0, 2.0}, {{0.1}, {0.0}}), {0.5}, 1.5), 1e-5);
}

TEST(Export, CsvColumns) {
  const auto seq = ImpulseSequence(0, {0.5}, 1.0);
  SimOptions o;
  o.samples_per_segment = 3;
  const auto traj = simulate(scalar_linear(1.0, -1.0), seq, InputSignal::zero(1), {1.0}, 0.0, 1.0, o);
  std::istringstream csv(trajectory_csv(scalar_linear(1.0, -1.0), traj));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "t,x,is_jump,pre_x");
  int jump_rows = 0, rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    ASSERT_EQ(f.size(), 4u) << line;
    if (f[2] == "1") {
      ++jump_rows;
      EXPECT_EQ(f[0], "0.5");
      EXPECT_NEAR(std::stod(f[3]), std::exp(-0.5), 1e-9);
    } else {
      EXPECT_EQ(f[3], "");
    }
  }
  EXPECT_EQ(jump_rows, 1);
  EXPECT_GE(rows, 5);
}
