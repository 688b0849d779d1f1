#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "iss/expr.hpp"

namespace iss {

/// Comparison-function classes.  NegPD means -f is positive definite (a flow
/// rate for systems whose continuous dynamics destabilize).
enum class FnClass { None, PD, NegPD, K, Kinf, L };

const char* class_name(FnClass c);
/// Accepts "PD", "negPD", "K", "Kinf", "L", "none" (case-insensitive).
FnClass class_from_name(std::string_view name);

/// A scalar function R+ -> R backed by an expression, a table, or a callable.
/// Cheap to copy; immutable.
class ScalarFn {
 public:
  /// The zero function.
  ScalarFn();

  static ScalarFn from_expr(const Expr& body, const std::string& var, FnClass declared = FnClass::None);
  static ScalarFn parse(std::string_view source, const std::string& var = "r", FnClass declared = FnClass::None);
  static ScalarFn from_callable(std::function<double(double)> fn, std::string description,
                                FnClass declared = FnClass::None);
  static ScalarFn linear(double slope);
  static ScalarFn identity() { return linear(1.0); }

  double operator()(double r) const { return fn_(r); }

  const std::string& description() const { return description_; }
  FnClass declared() const { return declared_; }
  const std::optional<Expr>& expr() const { return expr_; }
  /// Name of the free variable when expression-backed.
  const std::string& variable() const { return var_; }

  ScalarFn with_class(FnClass c) const;
  const std::function<double(double)>& callable() const { return fn_; }

 private:
  std::function<double(double)> fn_;
  std::string description_;
  FnClass declared_ = FnClass::None;
  std::optional<Expr> expr_;
  std::string var_;
};

/// Monotone piecewise table.  LogLog interpolation is exact for power
/// functions a*r^b and is what grid-backed comparison functions use.
class Table {
 public:
  enum class Interp { Linear, LogLog };

  Table(std::vector<double> xs, std::vector<double> ys, Interp interp);

  double operator()(double x) const;
  /// Inverse of the interpolant; requires strictly increasing ys.
  double inverse(double y) const;

  const std::vector<double>& xs() const { return xs_; }
  const std::vector<double>& ys() const { return ys_; }
  Interp interp() const { return interp_; }

  ScalarFn as_fn(std::string description, FnClass declared = FnClass::None) const;
  ScalarFn inverse_fn(std::string description, FnClass declared = FnClass::None) const;

 private:
  static double eval(const std::vector<double>& x, const std::vector<double>& y, Interp interp, double q);
  std::vector<double> xs_, ys_;
  Interp interp_;
};

struct ClassCheck {
  bool ok = true;
  std::optional<double> counterexample;  // grid point where the check failed
  std::string reason;
  explicit operator bool() const { return ok; }
};

/// Grid certification of class membership.  Grid must be strictly increasing,
/// >= 16 points, spanning >= 4 decades.  `tol` bounds |f(0)| and, for class L,
/// the decay ratio f(last)/f(0).  K-infinity unboundedness is a heuristic:
/// f(10*last) > f(last).
ClassCheck validate_class(const ScalarFn& f, FnClass cls, const std::vector<double>& grid, double tol = 1e-9);
ClassCheck validate_class(const ScalarFn& f, FnClass cls);

/// beta(r, t) expression over variables `rvar`, `tvar`.
struct KLCandidate {
  Expr body;
  std::string rvar = "r";
  std::string tvar = "t";
};

ClassCheck validate_kl(const KLCandidate& beta, const std::vector<double>& r_grid, const std::vector<double>& t_grid,
                       double tol = 1e-9);

struct LMajorant {
  ScalarFn envelope;
  std::vector<double> grid;    // includes 0 as the first point
  std::vector<double> values;  // nonincreasing
};

/// Nonincreasing piecewise-linear envelope g >= h on {0} u grid, decaying past
/// the grid end as g(last)*last/x.  Fails (nullopt) when the running maximum
/// from the right does not drop below tol*h(0).
std::optional<LMajorant> majorize_by_L(const ScalarFn& h, const std::vector<double>& grid, double tol = 1e-6);

/// Bisection inverse of an increasing function on [lo, hi].  Throws
/// std::domain_error if y is outside [f(lo), f(hi)].
double inverse_on_grid(const ScalarFn& f, double y, double lo, double hi);

/// Inverse of an increasing f with f(0) = 0 and f unbounded; the bracket grows
/// geometrically from [0, 1].
double inverse(const ScalarFn& f, double y);

}  // namespace iss
