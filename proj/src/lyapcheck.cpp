#include "iss/lyapcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "iss/numeric.hpp"

namespace iss {

StateFunction::StateFunction(Expr body, const std::vector<std::string>& states) {
  CompiledExpr code(body, states);
  fn_ = [code](std::span<const double> x) { return code(x); };
  description_ = to_string(body);
  body_ = std::move(body);
}

StateFunction::StateFunction(Fn fn, std::string description)
    : fn_(std::move(fn)), description_(std::move(description)) {}

FlowRate FlowRate::exponential(double c) {
  return {ScalarFn::linear(c).with_class(c > 0 ? FnClass::PD : c < 0 ? FnClass::NegPD : FnClass::None), c};
}

JumpRate JumpRate::exponential(double d) {
  const double k = std::exp(-d);
  return {ScalarFn::from_callable([k](double s) { return k * s; }, "exp(" + format_double(-d) + ")*s", FnClass::PD),
          d};
}

namespace {

Vec random_direction(Rng& rng, std::size_t dim) {
  Vec v(dim);
  double nrm = 0.0;
  while (nrm < 1e-12) {
    for (auto& c : v) c = rng.normal();
    nrm = norm2(v);
  }
  for (auto& c : v) c /= nrm;
  return v;
}

}  // namespace

std::vector<SamplePair> make_samples(std::size_t n, std::size_t m, const SamplePlan& plan) {
  if (!(plan.radius > 0)) throw std::invalid_argument("sample plan: radius must be positive");
  const double R = plan.radius;
  const double Ri = plan.input_radius > 0 ? plan.input_radius : R;
  Rng rng(plan.seed);
  std::vector<Vec> states;
  states.reserve(plan.interior + plan.boundary + plan.near_zero);

  std::uint64_t idx = 1;
  while (states.size() < plan.interior) {
    auto h = halton(idx++, n);
    Vec x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = R * (2.0 * h[i] - 1.0);
    if (plan.ball && norm2(x) > R) continue;
    states.push_back(std::move(x));
  }
  for (std::size_t k = 0; k < plan.boundary; ++k) {
    Vec x(n);
    if (plan.ball) {
      x = random_direction(rng, n);
      for (auto& c : x) c *= R;
    } else {
      for (auto& c : x) c = rng.uniform(-R, R);
      x[rng.below(n)] = rng.uniform() < 0.5 ? -R : R;
    }
    states.push_back(std::move(x));
  }
  for (std::size_t k = 0; k < plan.near_zero; ++k) {
    Vec x = random_direction(rng, n);
    const double mag = rng.log_uniform(1e-6 * R, 1e-2 * R);
    for (auto& c : x) c *= mag;
    states.push_back(std::move(x));
  }

  std::vector<SamplePair> out;
  out.reserve(states.size() * 2);
  const double lo = std::min(1e-4, 1e-4 * Ri);
  for (auto& x : states) {
    if (m == 0) {
      out.push_back({x, {}});
      continue;
    }
    Vec xi = random_direction(rng, m);
    const double mag = rng.log_uniform(lo, Ri);
    for (auto& c : xi) c *= mag;
    out.push_back({x, std::move(xi)});
    if (plan.zero_input_pairs) out.push_back({x, Vec(m, 0.0)});
  }
  return out;
}

DiniResult dini_derivative(const SystemDef& sys, const StateFunction& V, const Vec& x, const Vec& xi, double h0) {
  if (h0 <= 0) {
    const Vec f = sys.flow(x, xi);
    h0 = 1e-4 * (1.0 + norm2(x)) / (1.0 + norm2(f));
  }
  const double v0 = V(x);
  const double eps = std::numeric_limits<double>::epsilon();
  auto quotient = [&](double h) { return (V(flow_map(sys, x, xi, h)) - v0) / h; };
  // A kink of V near the flow line (e.g. V a max of smooth pieces) breaks the
  // O(h) error model; shrink h until the three quotients are consistent.
  double h = h0;
  DiniResult last{0.0, 0.0};
  for (int attempt = 0; attempt < 6; ++attempt, h /= 16) {
    const double D1 = quotient(h), D2 = quotient(h / 2), D3 = quotient(h / 4);
    const double noise = 8.0 * (eps * std::fabs(v0) + 1e-13 * (1.0 + std::fabs(v0))) / (h / 4);
    const double d12 = D1 - D2, d23 = D2 - D3;
    const double R1 = 2 * D2 - D1, R2 = 2 * D3 - D2;
    const double R = (4 * R2 - R1) / 3;
    const bool smooth = std::fabs(d12) <= 4 * noise || std::fabs(d23) <= 4 * noise ||
                        (d12 * d23 > 0 && std::fabs(d12 / d23) > 1.5 && std::fabs(d12 / d23) < 2.7);
    if (smooth) return {R, std::fabs(R - R2) + noise};
    last = {D3, 2 * std::fabs(d23) + noise};
  }
  return last;
}

namespace {

struct PairEval {
  bool guard = false;
  bool flow_checked = false;
  double flow_lhs = 0, flow_rhs = 0;
  double jump_lhs = 0, jump_rhs = 0;
  bool jump_checked = false;
  bool sandwich_checked = false;
  double sw_margin = 0, sw_lhs = 0, sw_rhs = 0;
};

void account(BranchStats& b, double lhs, double rhs, double tol, const SamplePair& p) {
  ++b.checked;
  if (violates(lhs, rhs, tol)) ++b.violations;
  const double margin = (lhs - rhs) / (1.0 + std::fabs(rhs));
  if (margin > b.worst_margin || b.witness_x.empty()) {
    b.worst_margin = margin;
    b.witness_x = p.x;
    b.witness_xi = p.xi;
    b.lhs = lhs;
    b.rhs = rhs;
  }
}

void validate_declared(const ScalarFn& f, const char* role, CertificateReport& rep) {
  if (f.declared() == FnClass::None) return;
  auto c = validate_class(f, f.declared());
  if (!c) rep.class_failures.push_back(std::string(role) + ": " + c.reason);
}

CertificateReport run_check(const SystemDef& sys, const LyapunovCandidate& L, const SamplePlan& plan, double tol,
                            CertForm form) {
  CertificateReport rep;
  rep.form = form;
  rep.tol = tol;
  if (L.psi1) validate_declared(*L.psi1, "psi1", rep);
  if (L.psi2) validate_declared(*L.psi2, "psi2", rep);
  validate_declared(L.gain, form == CertForm::Max ? "gamma" : "chi", rep);
  if (!L.flow.coeff) validate_declared(L.flow.phi, "phi", rep);
  if (!L.jump.coeff) validate_declared(L.jump.alpha, "alpha", rep);

  const auto samples = make_samples(sys.n(), sys.m(), plan);
  rep.samples = samples.size();
  std::vector<PairEval> evals(samples.size());

  auto phi = [&](double v) { return L.flow.coeff ? *L.flow.coeff * v : L.flow.phi(v); };
  auto alpha = [&](double v) { return L.jump.coeff ? std::exp(-*L.jump.coeff) * v : L.jump.alpha(v); };

  parallel_for(samples.size(), [&](std::size_t k) {
    const auto& p = samples[k];
    auto& e = evals[k];
    const double v = L.V(p.x);
    const double xin = norm2(p.xi);
    const double gain = L.gain(xin);
    e.guard = v >= gain;
    if (L.psi1 || L.psi2) {
      e.sandwich_checked = true;
      const double xn = norm2(p.x);
      double worst = -std::numeric_limits<double>::infinity();
      if (L.psi1) {
        const double lo = (*L.psi1)(xn);
        worst = (lo - v) / (1.0 + v);
        e.sw_lhs = lo;
        e.sw_rhs = v;
      }
      if (L.psi2) {
        const double hi = (*L.psi2)(xn);
        const double m = (v - hi) / (1.0 + std::fabs(hi));
        if (m > worst) {
          worst = m;
          e.sw_lhs = v;
          e.sw_rhs = hi;
        }
      }
      e.sw_margin = worst;
    }
    if (e.guard) {
      e.flow_checked = true;
      e.flow_lhs = dini_derivative(sys, L.V, p.x, p.xi).value;
      e.flow_rhs = -phi(v);
    }
    if (form == CertForm::Max || e.guard) {
      e.jump_checked = true;
      e.jump_lhs = L.V(sys.jump(p.x, p.xi));
      e.jump_rhs = form == CertForm::Max ? std::max(alpha(v), gain) : alpha(v);
    }
  });

  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto& e = evals[k];
    if (e.guard) ++rep.guarded;
    if (e.flow_checked) account(rep.flow, e.flow_lhs, e.flow_rhs, tol, samples[k]);
    if (e.jump_checked) account(rep.jump, e.jump_lhs, e.jump_rhs, tol, samples[k]);
    if (e.sandwich_checked) account(rep.sandwich, e.sw_lhs, e.sw_rhs, tol, samples[k]);
  }
  if (rep.guarded == 0) throw std::runtime_error("certificate check: no sample satisfies the guard V(x) >= gain(|xi|)");
  rep.notes.push_back("flow branch uses constant input continuations u = xi");
  if (plan.ball) rep.notes.push_back("local check on the ball of radius " + format_double(plan.radius));
  rep.certified = rep.flow.violations == 0 && rep.jump.violations == 0 && rep.sandwich.violations == 0 &&
                  rep.class_failures.empty();
  return rep;
}

}  // namespace

CertificateReport check_implication_form(const SystemDef& sys, const LyapunovCandidate& L, const SamplePlan& plan,
                                         double tol) {
  return run_check(sys, L, plan, tol, CertForm::Implication);
}

CertificateReport check_max_form(const SystemDef& sys, const LyapunovCandidate& L, const SamplePlan& plan,
                                 double tol) {
  return run_check(sys, L, plan, tol, CertForm::Max);
}

CertificateReport check_certificate(const SystemDef& sys, const LyapunovCandidate& L, const SamplePlan& plan,
                                    double tol) {
  return run_check(sys, L, plan, tol, L.form);
}

ImplicationGain max_form_to_implication(const ScalarFn& gamma, const ScalarFn& alpha,
                                        const std::optional<ScalarFn>& rho) {
  const auto grid = default_class_grid();
  auto above_alpha = [&](const ScalarFn& r) {
    for (double x : grid)
      if (!(r(x) > alpha(x))) return false;
    return true;
  };
  ScalarFn chosen;
  if (rho) {
    if (!validate_class(*rho, FnClass::Kinf) || !above_alpha(*rho))
      throw std::invalid_argument("max_form_to_implication: rho must be Kinf and exceed alpha on the grid");
    chosen = *rho;
  } else {
    auto r1 = ScalarFn::from_callable([alpha](double r) { return alpha(r) + 1e-3 * r; },
                                      alpha.description() + " + 0.001*r", FnClass::Kinf);
    auto r2 = ScalarFn::from_callable([alpha](double r) { return 1.001 * std::max(alpha(r), r); },
                                      "1.001*max(" + alpha.description() + ", r)", FnClass::Kinf);
    if (validate_class(r1, FnClass::Kinf) && above_alpha(r1)) chosen = r1;
    else if (validate_class(r2, FnClass::Kinf) && above_alpha(r2)) chosen = r2;
    else throw std::runtime_error("max_form_to_implication: no Kinf rho above alpha found on the grid");
  }
  auto chi = ScalarFn::from_callable(
      [gamma, chosen](double r) {
        const double g = gamma(r);
        return std::max(g, inverse(chosen, g));
      },
      "max(" + gamma.description() + ", rho^-1(" + gamma.description() + "))", FnClass::Kinf);
  return {chi, chosen};
}

FdtResult fdt_threshold(const ScalarFn& phi, const ScalarFn& alpha, const std::vector<double>& a_grid,
                        FdtDirection direction) {
  if (a_grid.empty()) throw std::invalid_argument("fdt_threshold: empty grid");
  FdtResult res;
  res.grid = a_grid;
  const bool flow = direction == FdtDirection::StabilizingFlow;
  const double sign = flow ? 1.0 : -1.0;
  bool have = false;
  for (double a : a_grid) {
    if (!(a > 0)) throw std::invalid_argument("fdt_threshold: grid points must be positive");
    const double b = alpha(a);
    double value = std::numeric_limits<double>::infinity();
    if (b > 0 && std::isfinite(b)) {
      // flow: int_a^{alpha(a)}; jumps: int_{alpha(a)}^a of 1/(-phi).
      // s = base*e^v turns int ds / phi(s) into int s / phi(s) dv, which keeps
      // the integrand bounded near s = 0 whenever phi(s)/s is bounded below;
      // log1p keeps the v-range accurate when alpha(a) is close to a.
      const double base = flow ? a : b;
      const double top = flow ? b : a;
      const double span = std::log1p((top - base) / base);
      auto integrand = [&](double v) {
        const double s = base * std::exp(v);
        return sign * s / phi(s);
      };
      const auto q = integrate(integrand, 0.0, span, 1e-13, 1e-15);
      if (q.converged && std::isfinite(q.value)) value = q.value;
    }
    if (!std::isfinite(value)) res.divergent_at.push_back(a);
    res.values.push_back(value);
    const bool better = !have || (flow ? value > res.bound : value < res.bound);
    if (better) {
      res.bound = value;
      res.argument = a;
      have = true;
    }
  }
  return res;
}

Membership gadt_check(double c, double d, const ScalarFn& h, const ImpulseSequence& seq, double tol) {
  if (d == 0.0) throw std::invalid_argument("gadt_check: need d != 0");
  const DwellTimeClass cls = Gadt{h, c, d};
  validate_dwell_class(cls);
  return member(seq, cls, tol);
}

}  // namespace iss
