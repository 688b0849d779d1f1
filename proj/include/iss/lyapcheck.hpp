#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "iss/cmpfun.hpp"
#include "iss/expr.hpp"
#include "iss/hybridsim.hpp"
#include "iss/impulseseq.hpp"

namespace iss {

/// V over the state variables of a system: an expression, or a callable
/// (composite certificates built from non-algebraic paths).
class StateFunction {
 public:
  using Fn = std::function<double(std::span<const double>)>;

  StateFunction() = default;
  StateFunction(Expr body, const std::vector<std::string>& states);
  StateFunction(Fn fn, std::string description);

  double operator()(std::span<const double> x) const { return fn_(x); }
  double operator()(const Vec& x) const { return fn_(std::span<const double>(x)); }
  const std::optional<Expr>& expr() const { return body_; }
  const std::string& description() const { return description_; }

 private:
  Fn fn_ = [](std::span<const double>) { return 0.0; };
  std::optional<Expr> body_;
  std::string description_ = "0";
};

/// Decay rate along the flow: phi(s), or c*s when `coeff` is set.
struct FlowRate {
  ScalarFn phi;
  std::optional<double> coeff;
  static FlowRate exponential(double c);
  static FlowRate general(ScalarFn phi) { return {std::move(phi), std::nullopt}; }
};

/// Jump bound: alpha(s), or exp(-d)*s when `coeff` is set.
struct JumpRate {
  ScalarFn alpha;
  std::optional<double> coeff;
  static JumpRate exponential(double d);
  static JumpRate general(ScalarFn alpha) { return {std::move(alpha), std::nullopt}; }
};

enum class CertForm { Implication, Max };

struct LyapunovCandidate {
  StateFunction V;
  std::optional<ScalarFn> psi1, psi2;
  /// Guard gain: chi for the implication form, gamma for the max form.
  ScalarFn gain;
  FlowRate flow;
  JumpRate jump;
  CertForm form = CertForm::Implication;
};

struct SamplePlan {
  double radius = 10.0;        // box half-width, or ball radius when `ball`
  double input_radius = 0.0;   // 0: same as radius
  std::size_t interior = 4096;
  std::size_t boundary = 512;
  std::size_t near_zero = 64;
  bool ball = false;           // local check on the closed radius-ball
  bool zero_input_pairs = true;
  std::uint64_t seed = 1;
};

struct SamplePair {
  Vec x, xi;
};

/// Quasi-random states (Halton) plus boundary and near-zero states, each
/// paired with a log-uniform input of random direction and with xi = 0.
std::vector<SamplePair> make_samples(std::size_t n, std::size_t m, const SamplePlan& plan);

struct DiniResult {
  double value;
  double error;
};

/// Forward difference quotient of V along the no-impulse flow with constant
/// input xi, at h0, h0/2, h0/4, Richardson-extrapolated.  h0 <= 0 picks a
/// step from the local scale of x and f(x, xi).
DiniResult dini_derivative(const SystemDef& sys, const StateFunction& V, const Vec& x, const Vec& xi, double h0 = 0.0);

struct BranchStats {
  std::size_t checked = 0;
  std::size_t violations = 0;
  /// max over checked pairs of (lhs - rhs) / (1 + |rhs|); violation when > tol.
  double worst_margin = -std::numeric_limits<double>::infinity();
  Vec witness_x, witness_xi;
  double lhs = 0.0, rhs = 0.0;
};

struct CertificateReport {
  bool certified = false;
  CertForm form = CertForm::Implication;
  double tol = 0.0;
  std::size_t samples = 0;
  std::size_t guarded = 0;  // pairs satisfying the flow guard
  BranchStats flow, jump, sandwich;
  std::vector<std::string> class_failures;
  std::vector<std::string> notes;
};

/// Relative violation measure used by all certificate branches.
inline bool violates(double lhs, double rhs, double tol) { return lhs > rhs + tol * (1.0 + std::fabs(rhs)); }

/// V(x) >= chi(|xi|) implies V' <= -phi(V) and V(g(x,xi)) <= alpha(V).
/// Throws std::runtime_error if no sample satisfies the guard.
CertificateReport check_implication_form(const SystemDef& sys, const LyapunovCandidate& L, const SamplePlan& plan,
                                         double tol = 1e-6);

/// V(g(x,xi)) <= max{alpha(V), gamma(|xi|)} on all samples; V' <= -phi(V)
/// where V(x) >= gamma(|xi|).
CertificateReport check_max_form(const SystemDef& sys, const LyapunovCandidate& L, const SamplePlan& plan,
                                 double tol = 1e-6);

CertificateReport check_certificate(const SystemDef& sys, const LyapunovCandidate& L, const SamplePlan& plan,
                                    double tol = 1e-6);

struct ImplicationGain {
  ScalarFn chi;
  ScalarFn rho;
};

/// chi = max{gamma, rho^-1 o gamma} with rho > alpha.  Without an explicit rho
/// uses alpha(r) + 1e-3 r, falling back to 1.001*max(alpha(r), r).
ImplicationGain max_form_to_implication(const ScalarFn& gamma, const ScalarFn& alpha,
                                        const std::optional<ScalarFn>& rho = std::nullopt);

enum class FdtDirection { StabilizingFlow, StabilizingJumps };

struct FdtResult {
  /// sup_a of the integral (flow-stabilizing) or inf_a (jump-stabilizing).
  double bound = 0.0;
  double argument = 0.0;  // grid point attaining the bound
  std::vector<double> grid, values;
  std::vector<double> divergent_at;
  bool divergent() const { return !divergent_at.empty(); }
};

/// Flow-stabilizing: sup over a of int_a^{alpha(a)} ds / phi(s), certifying
/// dwell times theta - delta >= bound.  Jump-stabilizing: inf over a of
/// int_{alpha(a)}^a ds / (-phi(s)), certifying theta + delta <= bound.
FdtResult fdt_threshold(const ScalarFn& phi, const ScalarFn& alpha, const std::vector<double>& a_grid,
                        FdtDirection direction);

/// Averaged dwell-time hypothesis -d N(t,s) - c (t-s) <= ln h(t-s) on the
/// finite horizon.  Throws std::invalid_argument if h has no L-majorant or d == 0.
Membership gadt_check(double c, double d, const ScalarFn& h, const ImpulseSequence& seq, double tol = 1e-9);

}  // namespace iss
