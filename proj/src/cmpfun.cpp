#include "iss/cmpfun.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "iss/numeric.hpp"

namespace iss {

const char* class_name(FnClass c) {
  switch (c) {
    case FnClass::None: return "none";
    case FnClass::PD: return "PD";
    case FnClass::NegPD: return "negPD";
    case FnClass::K: return "K";
    case FnClass::Kinf: return "Kinf";
    case FnClass::L: return "L";
  }
  return "?";
}

FnClass class_from_name(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "none" || s.empty()) return FnClass::None;
  if (s == "pd") return FnClass::PD;
  if (s == "negpd") return FnClass::NegPD;
  if (s == "k") return FnClass::K;
  if (s == "kinf" || s == "k_inf" || s == "kinfty") return FnClass::Kinf;
  if (s == "l") return FnClass::L;
  throw std::invalid_argument("unknown function class '" + std::string(name) + "'");
}

ScalarFn::ScalarFn() : fn_([](double) { return 0.0; }), description_("0") {}

ScalarFn ScalarFn::from_expr(const Expr& body, const std::string& var, FnClass declared) {
  for (const auto& v : free_vars(body))
    if (v != var) throw EvalError("scalar function has free variable '" + v + "' besides '" + var + "'");
  const std::array<std::string, 1> slots{var};
  CompiledExpr code(body, slots);
  ScalarFn f;
  f.fn_ = [code](double r) { return code(std::span<const double>(&r, 1)); };
  f.description_ = to_string(body);
  f.declared_ = declared;
  f.expr_ = body;
  f.var_ = var;
  return f;
}

ScalarFn ScalarFn::parse(std::string_view source, const std::string& var, FnClass declared) {
  return from_expr(iss::parse(source), var, declared);
}

ScalarFn ScalarFn::from_callable(std::function<double(double)> fn, std::string description, FnClass declared) {
  ScalarFn f;
  f.fn_ = std::move(fn);
  f.description_ = std::move(description);
  f.declared_ = declared;
  return f;
}

ScalarFn ScalarFn::linear(double slope) {
  std::ostringstream os;
  os.precision(17);
  os << slope << "*r";
  return from_callable([slope](double r) { return slope * r; }, os.str(), slope > 0 ? FnClass::Kinf : FnClass::None);
}

ScalarFn ScalarFn::with_class(FnClass c) const {
  ScalarFn copy = *this;
  copy.declared_ = c;
  return copy;
}

Table::Table(std::vector<double> xs, std::vector<double> ys, Interp interp)
    : xs_(std::move(xs)), ys_(std::move(ys)), interp_(interp) {
  if (xs_.size() != ys_.size() || xs_.size() < 2) throw std::invalid_argument("Table: need >= 2 matching points");
  for (std::size_t i = 1; i < xs_.size(); ++i)
    if (!(xs_[i] > xs_[i - 1])) throw std::invalid_argument("Table: abscissae must be strictly increasing");
  if (interp_ == Interp::LogLog) {
    for (std::size_t i = 0; i < xs_.size(); ++i)
      if (!(xs_[i] > 0.0) || !(ys_[i] > 0.0)) throw std::invalid_argument("Table: log-log table needs positive data");
  }
}

double Table::eval(const std::vector<double>& x, const std::vector<double>& y, Interp interp, double q) {
  if (interp == Interp::LogLog) {
    if (q <= 0.0) return 0.0;
    const double lq = std::log(q);
    std::size_t i;
    if (q <= x.front()) i = 0;
    else if (q >= x.back()) i = x.size() - 2;
    else i = static_cast<std::size_t>(std::upper_bound(x.begin(), x.end(), q) - x.begin()) - 1;
    const double lx0 = std::log(x[i]), lx1 = std::log(x[i + 1]);
    const double ly0 = std::log(y[i]), ly1 = std::log(y[i + 1]);
    return std::exp(ly0 + (ly1 - ly0) * (lq - lx0) / (lx1 - lx0));
  }
  if (q <= x.front()) {
    return y.front();
  }
  if (q >= x.back()) return y.back();
  const std::size_t i = static_cast<std::size_t>(std::upper_bound(x.begin(), x.end(), q) - x.begin()) - 1;
  const double w = (q - x[i]) / (x[i + 1] - x[i]);
  return y[i] + w * (y[i + 1] - y[i]);
}

double Table::operator()(double x) const { return eval(xs_, ys_, interp_, x); }

double Table::inverse(double y) const {
  for (std::size_t i = 1; i < ys_.size(); ++i)
    if (!(ys_[i] > ys_[i - 1])) throw std::domain_error("Table::inverse: table is not strictly increasing");
  return eval(ys_, xs_, interp_, y);
}

ScalarFn Table::as_fn(std::string description, FnClass declared) const {
  auto self = std::make_shared<const Table>(*this);
  return ScalarFn::from_callable([self](double x) { return (*self)(x); }, std::move(description), declared);
}

ScalarFn Table::inverse_fn(std::string description, FnClass declared) const {
  for (std::size_t i = 1; i < ys_.size(); ++i)
    if (!(ys_[i] > ys_[i - 1])) throw std::domain_error("Table::inverse_fn: table is not strictly increasing");
  auto self = std::make_shared<const Table>(*this);
  return ScalarFn::from_callable([self](double y) { return self->inverse(y); }, std::move(description), declared);
}

namespace {

void check_grid(const std::vector<double>& grid) {
  if (grid.size() < 16) throw std::invalid_argument("class grid needs at least 16 points");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("class grid must be strictly increasing");
  if (!(grid.front() > 0.0) || grid.back() / grid.front() < 1e4 * (1 - 1e-12))
    throw std::invalid_argument("class grid must be positive and span at least 4 decades");
}

ClassCheck fail(double r, std::string reason) { return ClassCheck{false, r, std::move(reason)}; }

}  // namespace

ClassCheck validate_class(const ScalarFn& f, FnClass cls, const std::vector<double>& grid, double tol) {
  check_grid(grid);
  std::vector<double> v(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) v[i] = f(grid[i]);
  if (cls == FnClass::None) return {};
  const double f0 = f(0.0);

  if (cls == FnClass::L) {
    if (!(f0 > 0.0)) return fail(0.0, "L: f(0) must be positive");
    double prev = f0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (v[i] < 0.0) return fail(grid[i], "L: negative value");
      // values that reached 0 by underflow may stay at 0
      if (!(v[i] < prev) && !(v[i] == 0.0 && prev == 0.0)) return fail(grid[i], "L: not strictly decreasing");
      prev = v[i];
    }
    if (!(v.back() < tol * f0)) return fail(grid.back(), "L: does not decay below tol*f(0)");
    return {};
  }

  if (std::fabs(f0) > tol) return fail(0.0, std::string(class_name(cls)) + ": f(0) != 0");
  if (cls == FnClass::PD || cls == FnClass::NegPD) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      if (cls == FnClass::PD && !(v[i] > 0.0)) return fail(grid[i], "PD: not positive");
      if (cls == FnClass::NegPD && !(v[i] < 0.0)) return fail(grid[i], "negPD: not negative");
    }
    return {};
  }

  // K and Kinf
  double prev = f0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(v[i] > prev)) return fail(grid[i], std::string(class_name(cls)) + ": not strictly increasing");
    prev = v[i];
  }
  if (cls == FnClass::Kinf) {
    const double far = f(10.0 * grid.back());
    if (!(far > v.back())) return fail(10.0 * grid.back(), "Kinf: no growth beyond the grid");
  }
  return {};
}

ClassCheck validate_class(const ScalarFn& f, FnClass cls) { return validate_class(f, cls, default_class_grid()); }

ClassCheck validate_kl(const KLCandidate& beta, const std::vector<double>& r_grid, const std::vector<double>& t_grid,
                       double tol) {
  const std::array<std::string, 2> slots{beta.rvar, beta.tvar};
  CompiledExpr code(beta.body, slots);
  for (double t : t_grid) {
    auto slice = ScalarFn::from_callable(
        [&code, t](double r) {
          const double args[2] = {r, t};
          return code(args);
        },
        "beta(.,t)");
    auto c = validate_class(slice, FnClass::K, r_grid, tol);
    if (!c) {
      c.reason = "beta(., t=" + std::to_string(t) + ") " + c.reason;
      return c;
    }
  }
  for (double r : r_grid) {
    auto slice = ScalarFn::from_callable(
        [&code, r](double t) {
          const double args[2] = {r, t};
          return code(args);
        },
        "beta(r,.)");
    auto c = validate_class(slice, FnClass::L, t_grid, tol);
    if (!c) {
      c.reason = "beta(r=" + std::to_string(r) + ", .) " + c.reason;
      return c;
    }
  }
  return {};
}

std::optional<LMajorant> majorize_by_L(const ScalarFn& h, const std::vector<double>& grid, double tol) {
  std::vector<double> pts;
  pts.reserve(grid.size() + 1);
  pts.push_back(0.0);
  for (double g : grid)
    if (g > 0.0) pts.push_back(g);
  std::vector<double> vals(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    vals[i] = h(pts[i]);
    if (vals[i] < 0.0) throw std::invalid_argument("majorize_by_L: h must be positive");
  }
  if (!(vals[0] > 0.0)) throw std::invalid_argument("majorize_by_L: h(0) must be positive");
  for (std::size_t i = vals.size() - 1; i-- > 0;) vals[i] = std::max(vals[i], vals[i + 1]);
  if (!(vals.back() <= tol * vals.front())) return std::nullopt;

  LMajorant out;
  out.grid = pts;
  out.values = vals;
  auto table = std::make_shared<const Table>(pts, vals, Table::Interp::Linear);
  const double last_x = pts.back(), last_v = vals.back();
  out.envelope = ScalarFn::from_callable(
      [table, last_x, last_v](double x) { return x <= last_x ? (*table)(x) : last_v * last_x / x; },
      "L-majorant(" + h.description() + ")", FnClass::None);
  return out;
}

double inverse_on_grid(const ScalarFn& f, double y, double lo, double hi) {
  const double flo = f(lo), fhi = f(hi);
  if (y < flo || y > fhi) throw std::domain_error("inverse_on_grid: value outside [f(lo), f(hi)]");
  if (y == flo) return lo;
  if (y == fhi) return hi;
  return bisect_root([&](double x) { return f(x) - y; }, lo, hi);
}

double inverse(const ScalarFn& f, double y) {
  if (y <= 0.0) return 0.0;
  double hi = 1.0;
  for (int i = 0; i < 2100 && f(hi) < y; ++i) hi *= 2.0;
  if (f(hi) < y) throw std::domain_error("inverse: function does not reach the requested value");
  return inverse_on_grid(f, y, 0.0, hi);
}

}  // namespace iss
