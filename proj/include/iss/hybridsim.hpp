#pragma once

#include <span>
#include <string>
#include <vector>

#include "iss/expr.hpp"
#include "iss/impulseseq.hpp"

namespace iss {

using Vec = std::vector<double>;

double norm2(std::span<const double> v);
double norm_inf(std::span<const double> v);

/// x' = f(x, u) between impulse times, x = g(x-, u-) at impulse times.
class SystemDef {
 public:
  SystemDef() = default;
  /// Throws std::invalid_argument if f or g mention undeclared names, have the
  /// wrong length, or if f(0,0), g(0,0) are not zero within 1e-12.
  SystemDef(std::string name, std::vector<std::string> states, std::vector<std::string> inputs, std::vector<Expr> f,
            std::vector<Expr> g);

  const std::string& name() const { return name_; }
  std::size_t n() const { return states_.size(); }
  std::size_t m() const { return inputs_.size(); }
  const std::vector<std::string>& states() const { return states_; }
  const std::vector<std::string>& inputs() const { return inputs_; }
  const std::vector<Expr>& f_exprs() const { return f_; }
  const std::vector<Expr>& g_exprs() const { return g_; }

  void flow(std::span<const double> x, std::span<const double> u, std::span<double> out) const;
  void jump(std::span<const double> x, std::span<const double> u, std::span<double> out) const;
  Vec flow(const Vec& x, const Vec& u) const;
  Vec jump(const Vec& x, const Vec& u) const;

 private:
  void eval_all(const std::vector<CompiledExpr>& code, std::span<const double> x, std::span<const double> u,
                std::span<double> out) const;

  std::string name_;
  std::vector<std::string> states_, inputs_;
  std::vector<Expr> f_, g_;
  std::vector<CompiledExpr> fc_, gc_;
};

/// Piecewise-constant, right-continuous input: value(t) = values[k] for
/// starts[k] <= t < starts[k+1]; before starts[0] the first value applies.
class InputSignal {
 public:
  InputSignal() = default;
  InputSignal(std::vector<double> starts, std::vector<Vec> values);
  static InputSignal constant(Vec value);
  static InputSignal zero(std::size_t m) { return constant(Vec(m, 0.0)); }

  std::size_t dim() const { return values_.empty() ? 0 : values_.front().size(); }
  const Vec& value(double t) const;
  /// Limit from the left: at a breakpoint, the value before it.
  const Vec& left_value(double t) const;
  double sup_norm() const { return sup_norm_; }
  const std::vector<double>& starts() const { return starts_; }
  const std::vector<Vec>& values() const { return values_; }

  InputSignal shifted(double s) const;

 private:
  std::vector<double> starts_;
  std::vector<Vec> values_;
  double sup_norm_ = 0.0;
};

struct SimOptions {
  double atol = 1e-9;
  double rtol = 1e-9;
  double blowup = 1e9;
  int samples_per_segment = 200;
  double max_step = 0.0;  // 0: unlimited
  std::size_t max_steps = 50'000'000;
};

struct SolverStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t rhs_evals = 0;
};

struct Segment {
  double a = 0.0, b = 0.0;
  std::vector<double> t;  // samples, t.front() == a, t.back() == b
  std::vector<double> x;  // row-major, n per sample
  std::vector<double> dx;
};

struct JumpRecord {
  double t;
  Vec pre, post;
};

/// Result of a simulation.  Segments are delimited by impulse times and input
/// breakpoints; the state is right-continuous.
class HybridTrajectory {
 public:
  std::size_t n() const { return n_; }
  double t0() const { return t0_; }
  double tf() const { return tf_; }
  /// End of the simulated range (tf, or the divergence time).
  double t_end() const { return diverged_ ? diverged_at_ : tf_; }
  bool diverged() const { return diverged_; }
  double diverged_at() const { return diverged_at_; }
  const std::vector<Segment>& segments() const { return segments_; }
  const std::vector<JumpRecord>& jumps() const { return jumps_; }
  const SolverStats& stats() const { return stats_; }

  Vec state_at(double t) const;
  Vec left_limit(double t) const;
  Vec final_state() const;
  /// max over all stored samples and jump states of the Euclidean norm.
  double sup_norm() const;

 private:
  friend HybridTrajectory simulate(const SystemDef&, const ImpulseSequence&, const InputSignal&, const Vec&, double,
                                   double, const SimOptions&);
  Vec interpolate(const Segment& seg, double t) const;

  std::size_t n_ = 0;
  double t0_ = 0.0, tf_ = 0.0;
  Vec x0_;
  std::vector<Segment> segments_;
  std::vector<JumpRecord> jumps_;
  bool diverged_ = false;
  double diverged_at_ = 0.0;
  SolverStats stats_;
};

/// Dormand-Prince 5(4) between impulse times with Hermite-interpolated dense
/// samples.  Impulse times in (t0, tf] are applied; those <= t0 are ignored.
/// Throws std::runtime_error on step-size underflow; propagates EvalError for
/// domain errors (overflow marks the trajectory diverged instead).
HybridTrajectory simulate(const SystemDef& sys, const ImpulseSequence& seq, const InputSignal& u, const Vec& x0,
                          double t0, double tf, const SimOptions& opts = {});

/// Flow of x' = f(x, u) with constant u for the given duration, no impulses.
Vec flow_map(const SystemDef& sys, const Vec& x, const Vec& u, double duration, double atol = 1e-13,
             double rtol = 1e-13);

/// Max-norm deviation between the trajectory and the one obtained with the
/// sequence, input and initial time shifted by s, compared at matched samples.
double shift_invariance_check(const SystemDef& sys, const ImpulseSequence& seq, const InputSignal& u, const Vec& x0,
                              double s, const SimOptions& opts = {});

/// Columns t, x1..xn, is_jump, pre1..pren (pre-jump values on jump rows only).
std::string trajectory_csv(const SystemDef& sys, const HybridTrajectory& traj);

}  // namespace iss
