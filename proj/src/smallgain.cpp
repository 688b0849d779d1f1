#include "iss/smallgain.hpp"

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "iss/numeric.hpp"

namespace iss {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double PowerFn::operator()(double s) const { return s <= 0.0 ? 0.0 : coeff * std::pow(s, exponent); }

std::optional<PowerFn> detect_power(const ScalarFn& f, double tol) {
  const auto grid = log_grid(1e-6, 1e6, 64);
  std::vector<double> xs, ys;
  for (double s : grid) {
    const double v = f(s);
    if (!(v > 0.0) || !std::isfinite(v)) return std::nullopt;
    xs.push_back(std::log(s));
    ys.push_back(std::log(v));
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  const double b = sxy / sxx;
  const double la = my - b * mx;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (std::fabs(ys[i] - (la + b * xs[i])) > tol * (1.0 + std::fabs(ys[i]))) return std::nullopt;
  if (!(b > 0)) return std::nullopt;
  double p = b;
  for (int den = 1; den <= 12; ++den) {
    const double q = std::round(b * den) / den;
    if (q > 0 && std::fabs(b - q) <= 1e-9 * std::max(1.0, b)) {
      p = q;
      break;
    }
  }
  const double c1 = f(1.0);
  return PowerFn{c1 > 0.0 && std::isfinite(c1) ? c1 : std::exp(la), p};
}

PowerMax::PowerMax(std::vector<PowerFn> terms) {
  std::erase_if(terms, [](const PowerFn& t) { return !(t.coeff > 0.0); });
  for (const auto& t : terms)
    if (!(t.exponent > 0.0) || !std::isfinite(t.coeff)) throw std::invalid_argument("PowerMax: need positive exponents");
  std::sort(terms.begin(), terms.end(), [](const PowerFn& a, const PowerFn& b) {
    return a.exponent != b.exponent ? a.exponent < b.exponent : a.coeff > b.coeff;
  });
  std::vector<PowerFn> uniq;
  for (const auto& t : terms)
    if (uniq.empty() || std::fabs(t.exponent - uniq.back().exponent) > 1e-14 * t.exponent) uniq.push_back(t);
  // upper envelope of the lines log c + p u
  auto cross = [](const PowerFn& a, const PowerFn& b) {
    return (std::log(a.coeff) - std::log(b.coeff)) / (b.exponent - a.exponent);
  };
  for (const auto& t : uniq) {
    while (terms_.size() >= 2 && cross(terms_[terms_.size() - 2], t) <= cross(terms_[terms_.size() - 2], terms_.back()))
      terms_.pop_back();
    terms_.push_back(t);
  }
}

double PowerMax::operator()(double t) const {
  double v = 0.0;
  for (const auto& f : terms_) v = std::max(v, f(t));
  return v;
}

double PowerMax::inverse(double y) const {
  if (y <= 0.0) return 0.0;
  if (terms_.empty()) throw std::domain_error("PowerMax::inverse: zero function");
  double v = kInf;
  for (const auto& f : terms_) v = std::min(v, std::pow(y / f.coeff, 1.0 / f.exponent));
  return v;
}

PowerMax PowerMax::composed_with(const PowerFn& g) const {
  std::vector<PowerFn> out;
  for (const auto& f : terms_) out.push_back({g.coeff * std::pow(f.coeff, g.exponent), f.exponent * g.exponent});
  return PowerMax(std::move(out));
}

PowerMax PowerMax::max(const PowerMax& a, const PowerMax& b) {
  auto t = a.terms_;
  t.insert(t.end(), b.terms_.begin(), b.terms_.end());
  return PowerMax(std::move(t));
}

std::vector<double> PowerMax::breakpoints() const {
  std::vector<double> out;
  for (std::size_t k = 1; k < terms_.size(); ++k) {
    const auto& a = terms_[k - 1];
    const auto& b = terms_[k];
    out.push_back(std::exp((std::log(a.coeff) - std::log(b.coeff)) / (b.exponent - a.exponent)));
  }
  return out;
}

std::string PowerMax::describe(const std::string& var) const {
  if (terms_.empty()) return "0";
  std::string s = terms_.size() > 1 ? "max(" : "";
  for (std::size_t k = 0; k < terms_.size(); ++k) {
    if (k) s += ", ";
    s += format_double(terms_[k].coeff) + "*" + var + "^" + format_double(terms_[k].exponent);
  }
  return terms_.size() > 1 ? s + ")" : s;
}

GainNetwork::GainNetwork(std::size_t n) : n_(n), gains_(n * n), external_(n) {}

GainNetwork GainNetwork::linear(const std::vector<std::vector<double>>& G) {
  GainNetwork net(G.size());
  for (std::size_t i = 0; i < G.size(); ++i) {
    if (G[i].size() != G.size()) throw std::invalid_argument("linear network: matrix must be square");
    for (std::size_t j = 0; j < G.size(); ++j) {
      if (G[i][j] < 0 || !std::isfinite(G[i][j])) throw std::invalid_argument("linear network: gains must be >= 0");
      if (i == j) {
        if (G[i][j] != 0) throw std::invalid_argument("linear network: diagonal gains must be zero");
        continue;
      }
      if (G[i][j] > 0) net.set_gain(i, j, ScalarFn::linear(G[i][j]));
    }
  }
  return net;
}

void GainNetwork::set_gain(std::size_t i, std::size_t j, ScalarFn g) {
  if (i >= n_ || j >= n_) throw std::out_of_range("set_gain: index out of range");
  if (i == j) throw std::invalid_argument("set_gain: diagonal gains are identically zero");
  gains_[i * n_ + j] = std::move(g);
}

std::optional<std::vector<std::vector<double>>> GainNetwork::linear_matrix() const {
  std::vector<std::vector<double>> G(n_, std::vector<double>(n_, 0.0));
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < n_; ++j) {
      const auto& g = gain(i, j);
      if (!g) continue;
      auto p = detect_power(*g);
      if (!p || std::fabs(p->exponent - 1.0) > 1e-9) return std::nullopt;
      G[i][j] = (*g)(1.0);
    }
  return G;
}

std::optional<std::vector<std::optional<PowerFn>>> GainNetwork::power_gains() const {
  std::vector<std::optional<PowerFn>> out(n_ * n_);
  for (std::size_t k = 0; k < n_ * n_; ++k) {
    if (!gains_[k]) continue;
    auto p = detect_power(*gains_[k]);
    if (!p) return std::nullopt;
    out[k] = p;
  }
  return out;
}

std::vector<double> gamma_apply(const GainNetwork& net, const std::vector<double>& s) {
  if (s.size() != net.n()) throw std::invalid_argument("gamma_apply: dimension mismatch");
  std::vector<double> out(net.n(), 0.0);
  for (std::size_t i = 0; i < net.n(); ++i)
    for (std::size_t j = 0; j < net.n(); ++j)
      if (const auto& g = net.gain(i, j)) out[i] = std::max(out[i], (*g)(s[j]));
  return out;
}

std::vector<double> small_gain_grid() { return log_grid(1e-6, 1e6, 64); }

namespace {

void enumerate_cycles(const GainNetwork& net, std::size_t start, std::size_t v, std::vector<std::size_t>& path,
                      std::vector<bool>& on_path, std::vector<std::vector<std::size_t>>& out) {
  for (std::size_t j = start; j < net.n(); ++j) {
    if (!net.gain(v, j)) continue;
    if (j == start) {
      auto c = path;
      c.push_back(start);
      out.push_back(std::move(c));
    } else if (!on_path[j]) {
      on_path[j] = true;
      path.push_back(j);
      enumerate_cycles(net, start, j, path, on_path, out);
      path.pop_back();
      on_path[j] = false;
    }
  }
}

std::vector<std::vector<std::size_t>> simple_cycles(const GainNetwork& net) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<bool> on_path(net.n(), false);
  for (std::size_t s = 0; s < net.n(); ++s) {
    std::vector<std::size_t> path{s};
    on_path[s] = true;
    enumerate_cycles(net, s, s, path, on_path, out);
    on_path[s] = false;
  }
  return out;
}

}  // namespace

SmallGainResult small_gain_check(const GainNetwork& net, const std::vector<double>& r_grid) {
  SmallGainResult res;
  const auto cycles = simple_cycles(net);
  res.cycles = cycles.size();
  for (const auto& cyc : cycles) {
    const std::size_t p = cyc.size();  // k1..kp, kp == k1
    for (double s : r_grid) {
      // x_{k_m} = gamma_{k_m k_{m+1}}(x_{k_{m+1}}), starting from x_{k_p} = s
      std::vector<double> w(net.n(), 0.0);
      double val = s;
      for (std::size_t m = p - 1; m-- > 0;) {
        val = (*net.gain(cyc[m], cyc[m + 1]))(val);
        if (m > 0) w[cyc[m]] = val;
      }
      res.worst_ratio = std::max(res.worst_ratio, val / s);
      if (!(val < s)) {
        w[cyc[0]] = s;
        res.holds = false;
        res.violations.push_back({cyc, s, val, std::move(w)});
      }
    }
  }
  return res;
}

namespace {

void strong_connect(const std::vector<std::vector<double>>& G, std::size_t v, std::size_t& counter,
                    std::vector<std::size_t>& index, std::vector<std::size_t>& low, std::vector<bool>& on_stack,
                    std::vector<std::size_t>& stack, std::vector<std::vector<std::size_t>>& out) {
  index[v] = low[v] = counter++;
  stack.push_back(v);
  on_stack[v] = true;
  for (std::size_t w = 0; w < G.size(); ++w) {
    if (G[v][w] <= 0.0) continue;
    if (index[w] == SIZE_MAX) {
      strong_connect(G, w, counter, index, low, on_stack, stack, out);
      low[v] = std::min(low[v], low[w]);
    } else if (on_stack[w]) {
      low[v] = std::min(low[v], index[w]);
    }
  }
  if (low[v] != index[v]) return;
  std::vector<std::size_t> comp;
  std::size_t w;
  do {
    w = stack.back();
    stack.pop_back();
    on_stack[w] = false;
    comp.push_back(w);
  } while (w != v);
  out.push_back(std::move(comp));
}

// Perron root of an irreducible block via power iteration on B + tau I.
double irreducible_radius(const std::vector<std::vector<double>>& B, double tol) {
  const std::size_t n = B.size();
  double tau = 0.0;
  for (const auto& row : B) {
    double rs = 0.0;
    for (double v : row) rs += v;
    tau = std::max(tau, rs);
  }
  tau *= 0.5;
  std::vector<double> x(n, 1.0 / static_cast<double>(n)), y(n);
  double prev = kInf;
  for (int it = 0; it < 2'000'000; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = tau * x[i];
      for (std::size_t j = 0; j < n; ++j) acc += B[i][j] * x[j];
      y[i] = acc;
    }
    double lo = kInf, hi = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sx += x[i];
      sy += y[i];
      lo = std::min(lo, y[i] / x[i]);
      hi = std::max(hi, y[i] / x[i]);
    }
    const double ratio = sy / sx;
    if (hi - lo <= tol * std::max(1.0, hi)) return 0.5 * (hi + lo) - tau;
    if (it > 1000 && std::fabs(ratio - prev) <= 1e-3 * tol * std::max(1.0, ratio)) return ratio - tau;
    prev = ratio;
    for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / sy;
  }
  return prev - tau;
}

}  // namespace

double spectral_radius(const std::vector<std::vector<double>>& G, double tol) {
  const std::size_t n = G.size();
  for (const auto& row : G) {
    if (row.size() != n) throw std::invalid_argument("spectral_radius: matrix must be square");
    for (double v : row)
      if (v < 0 || !std::isfinite(v)) throw std::invalid_argument("spectral_radius: matrix must be nonnegative");
  }
  // The spectrum of a reducible matrix is the union of the spectra of its
  // strongly connected diagonal blocks.
  std::vector<std::size_t> index(n, SIZE_MAX), low(n, 0), stack;
  std::vector<bool> on_stack(n, false);
  std::vector<std::vector<std::size_t>> comps;
  std::size_t counter = 0;
  for (std::size_t v = 0; v < n; ++v)
    if (index[v] == SIZE_MAX) strong_connect(G, v, counter, index, low, on_stack, stack, comps);
  double rho = 0.0;
  for (const auto& comp : comps) {
    if (comp.size() == 1) {
      rho = std::max(rho, G[comp[0]][comp[0]]);
      continue;
    }
    std::vector<std::vector<double>> B(comp.size(), std::vector<double>(comp.size()));
    for (std::size_t i = 0; i < comp.size(); ++i)
      for (std::size_t j = 0; j < comp.size(); ++j) B[i][j] = G[comp[i]][comp[j]];
    rho = std::max(rho, irreducible_radius(B, tol));
  }
  return rho;
}

double spectral_radius(const GainNetwork& net, double tol) {
  auto G = net.linear_matrix();
  if (!G) throw std::invalid_argument("spectral_radius: network has nonlinear gains");
  return spectral_radius(*G, tol);
}

void validate_omega_path(const GainNetwork& net, OmegaPath& path) {
  const std::size_t n = net.n();
  path.strict = true;
  path.worst_ratio = 0.0;
  path.table.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    auto c = validate_class(path.sigma[i], FnClass::Kinf, path.grid);
    if (!c) throw std::runtime_error("Omega-path: sigma_" + std::to_string(i + 1) + " is not Kinf: " + c.reason);
  }
  for (double r : path.grid) {
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = path.sigma[i](r);
      path.table[i].push_back(s[i]);
    }
    const auto g = gamma_apply(net, s);
    for (std::size_t i = 0; i < n; ++i) {
      path.worst_ratio = std::max(path.worst_ratio, g[i] / s[i]);
      if (g[i] > s[i] * (1.0 + 1e-12))
        throw std::runtime_error("Omega-path: Gamma(sigma(r)) > sigma(r) at r=" + format_double(r) + ", component " +
                                 std::to_string(i + 1));
      if (!(g[i] < s[i])) path.strict = false;
    }
  }
}

namespace {

ScalarFn bisection_inverse(const ScalarFn& f, std::string description) {
  return ScalarFn::from_callable([f](double y) { return inverse(f, y); }, std::move(description), FnClass::Kinf);
}

std::vector<PowerMax> power_q_path(const std::vector<std::optional<PowerFn>>& pg, std::size_t n,
                                   const std::vector<double>& a) {
  std::vector<PowerMax> cur(n), best(n);
  for (std::size_t i = 0; i < n; ++i) cur[i] = best[i] = PowerMax({PowerFn{a[i], 1.0}});
  for (std::size_t it = 1; it < n; ++it) {
    std::vector<PowerMax> next(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (pg[i * n + j]) next[i] = PowerMax::max(next[i], cur[j].composed_with(*pg[i * n + j]));
    cur = std::move(next);
    for (std::size_t i = 0; i < n; ++i) best[i] = PowerMax::max(best[i], cur[i]);
  }
  return best;
}

}  // namespace

OmegaPath omega_path_power(const GainNetwork& net, std::vector<PowerMax> sigma, const std::vector<double>& r_grid) {
  if (sigma.size() != net.n()) throw std::invalid_argument("omega_path: one sigma per subsystem required");
  OmegaPath path;
  path.construction = "power envelope";
  path.grid = r_grid;
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    auto s = std::make_shared<const PowerMax>(sigma[i]);
    path.sigma.push_back(ScalarFn::from_callable([s](double t) { return (*s)(t); }, s->describe("r"), FnClass::Kinf));
    path.sigma_inv.push_back(ScalarFn::from_callable([s](double y) { return s->inverse(y); },
                                                     "inverse(" + s->describe("r") + ")", FnClass::Kinf));
  }
  path.power = std::move(sigma);
  validate_omega_path(net, path);
  return path;
}

OmegaPath omega_path(const GainNetwork& net, const std::vector<double>& a, const std::vector<double>& r_grid) {
  const std::size_t n = net.n();
  if (a.size() != n) throw std::invalid_argument("omega_path: direction has wrong dimension");
  for (double v : a)
    if (!(v > 0)) throw std::invalid_argument("omega_path: direction must be positive");
  if (auto pg = net.power_gains()) {
    auto path = omega_path_power(net, power_q_path(*pg, n, a), r_grid);
    path.direction = a;
    path.construction = "Q(a t), power envelope";
    return path;
  }
  OmegaPath path;
  path.direction = a;
  path.construction = "Q(a t)";
  path.grid = r_grid;
  auto shared = std::make_shared<const GainNetwork>(net);
  auto Q = [shared, a](double t) {
    std::vector<double> cur(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) cur[i] = a[i] * t;
    auto best = cur;
    for (std::size_t it = 1; it < a.size(); ++it) {
      cur = gamma_apply(*shared, cur);
      for (std::size_t i = 0; i < a.size(); ++i) best[i] = std::max(best[i], cur[i]);
    }
    return best;
  };
  for (std::size_t i = 0; i < n; ++i) {
    auto si = ScalarFn::from_callable([Q, i](double t) { return Q(t)[i]; }, "Q(a r)_" + std::to_string(i + 1),
                                      FnClass::Kinf);
    path.sigma.push_back(si);
    path.sigma_inv.push_back(bisection_inverse(si, "inverse(Q(a r)_" + std::to_string(i + 1) + ")"));
  }
  validate_omega_path(net, path);
  return path;
}

namespace {

Expr inverse_expr(const PowerMax& sigma, const Expr& arg) {
  std::vector<Expr> pieces;
  for (const auto& t : sigma.terms()) {
    Expr e = arg;
    if (t.coeff != 1.0) e = Expr::binary(BinaryOp::Div, e, Expr::number(t.coeff));
    const double q = 1.0 / t.exponent;
    if (q != 1.0) e = Expr::binary(BinaryOp::Pow, e, Expr::number(q));
    pieces.push_back(std::move(e));
  }
  return pieces.size() == 1 ? pieces.front() : Expr::call(Func::Min, std::move(pieces));
}

// V = max_i sigma_i^-1(V_i), symbolic when possible.
StateFunction composite_V(const GainNetwork& net, const OmegaPath& path) {
  const std::size_t n = net.n();
  bool symbolic = path.power.has_value() && !net.states.empty();
  for (const auto& c : net.certs) symbolic = symbolic && c.V.expr().has_value();
  if (symbolic) {
    std::vector<Expr> parts;
    for (std::size_t i = 0; i < n; ++i) parts.push_back(inverse_expr((*path.power)[i], *net.certs[i].V.expr()));
    Expr body = n == 1 ? parts.front() : Expr::call(Func::Max, std::move(parts));
    return StateFunction(body, net.states);
  }
  auto certs = net.certs;
  auto inv = path.sigma_inv;
  std::string desc = "max_i sigma_i^-1(V_i)";
  return StateFunction(
      [certs, inv](std::span<const double> x) {
        double v = 0.0;
        for (std::size_t i = 0; i < certs.size(); ++i) v = std::max(v, inv[i](certs[i].V(x)));
        return v;
      },
      desc);
}

bool is_zero_fn(const ScalarFn& f) { return !f.expr() && f(1.0) == 0.0 && f(1e3) == 0.0 && f(1e-3) == 0.0; }

ScalarFn composite_chi(const GainNetwork& net, const OmegaPath& path) {
  std::vector<ScalarFn> ext;
  for (std::size_t i = 0; i < net.n(); ++i) ext.push_back(net.external(i));
  if (path.power) {
    std::vector<Expr> parts;
    std::string var;
    bool symbolic = true;
    for (std::size_t i = 0; i < ext.size() && symbolic; ++i) {
      if (is_zero_fn(ext[i])) continue;
      if (!ext[i].expr() || (!var.empty() && ext[i].variable() != var)) {
        symbolic = false;
        break;
      }
      var = ext[i].variable();
      parts.push_back(inverse_expr((*path.power)[i], *ext[i].expr()));
    }
    if (symbolic && parts.empty()) return ScalarFn();
    if (symbolic)
      return ScalarFn::from_expr(parts.size() == 1 ? parts.front() : Expr::call(Func::Max, std::move(parts)), var,
                                 FnClass::Kinf);
  }
  auto inv = path.sigma_inv;
  return ScalarFn::from_callable(
      [ext, inv](double r) {
        double v = 0.0;
        for (std::size_t i = 0; i < ext.size(); ++i) v = std::max(v, inv[i](ext[i](r)));
        return v;
      },
      "max_i sigma_i^-1(chi_i(r))");
}

double flow_phi(const SubsystemCert& c, double v) { return c.flow.coeff ? *c.flow.coeff * v : c.flow.phi(v); }
double jump_alpha(const SubsystemCert& c, double v) {
  return c.jump.coeff ? std::exp(-*c.jump.coeff) * v : c.jump.alpha(v);
}

}  // namespace

CompositeCertificate compose_certificate(const GainNetwork& net, const OmegaPath& path) {
  const std::size_t n = net.n();
  if (net.certs.size() != n) throw std::invalid_argument("compose_certificate: one certificate per subsystem required");
  if (path.sigma.size() != n) throw std::invalid_argument("compose_certificate: path has wrong dimension");
  CompositeCertificate out;
  auto& L = out.cert;
  L.form = CertForm::Max;
  L.V = composite_V(net, path);
  L.gain = composite_chi(net, path);

  auto certs = net.certs;
  auto sig = path.sigma;
  auto inv = path.sigma_inv;
  L.flow = FlowRate::general(ScalarFn::from_callable(
      [certs, sig, inv](double r) {
        if (r <= 0.0) return 0.0;
        double best = kInf;
        for (std::size_t i = 0; i < certs.size(); ++i) {
          const double y = sig[i](r);
          const double h = 1e-6 * y;
          const double deriv = (inv[i](y + h) - inv[i](y - h)) / (2 * h);
          best = std::min(best, deriv * flow_phi(certs[i], y));
        }
        return best;
      },
      "min_i (sigma_i^-1)'(sigma_i(r)) phi_i(sigma_i(r))"));

  auto alpha_tilde = [certs, sig, inv](double r) {
    double v = 0.0;
    for (std::size_t i = 0; i < certs.size(); ++i) v = std::max(v, inv[i](jump_alpha(certs[i], sig[i](r))));
    return v;
  };
  std::vector<double> vals;
  for (double r : path.grid) vals.push_back(alpha_tilde(r));
  for (std::size_t k = 1; k < vals.size(); ++k) vals[k] = std::max(vals[k], vals[k - 1]);
  for (std::size_t k = 0; k < vals.size(); ++k) vals[k] = vals[k] * (1.0 + 1e-9) + 1e-12 * path.grid[k];
  auto table = std::make_shared<const Table>(path.grid, vals, Table::Interp::LogLog);
  auto alpha_star = [table, alpha_tilde](double r) { return std::max((*table)(r), alpha_tilde(r)); };

  auto shared = std::make_shared<const GainNetwork>(net);
  auto eta = [shared, sig, inv](double r) {
    double v = 0.0;
    for (std::size_t i = 0; i < sig.size(); ++i)
      for (std::size_t j = 0; j < sig.size(); ++j)
        if (const auto& g = shared->gain(i, j)) v = std::max(v, inv[i]((*g)(sig[j](r))));
    return v;
  };
  for (double r : path.grid) {
    const double e = eta(r);
    out.eta_sup = std::max(out.eta_sup, e / r);
    if (!(e < r)) out.eta_below_identity = false;
  }
  if (net.jumps_coupled) {
    if (!out.eta_below_identity)
      throw std::runtime_error("compose_certificate: eta >= id on the grid; the path cannot absorb coupled jumps");
    L.jump = JumpRate::general(ScalarFn::from_callable(
        [alpha_star, eta](double r) { return std::max(alpha_star(r), eta(r)); }, "max(alpha*, eta)"));
  } else {
    L.jump = JumpRate::general(ScalarFn::from_callable(alpha_star, "alpha*"));
    out.notes.push_back("jumps decoupled: composite jump bound is alpha*");
  }
  if (!path.strict) out.notes.push_back("path satisfies Gamma(sigma) <= sigma (non-strict) on the grid");
  return out;
}

namespace {

// sup_t h(t)/t for h = sigma_i^-1 o (k * sigma_i): the ratio is piecewise power
// in t with kinks at sigma's breakpoints and their preimages under k*sigma.
double jump_ratio_sup(const PowerMax& sigma, double k) {
  const auto& T = sigma.terms();
  double sup = std::max(std::pow(k, 1.0 / T.front().exponent), std::pow(k, 1.0 / T.back().exponent));
  for (double bp : sigma.breakpoints()) {
    for (double t : {bp, sigma.inverse(sigma(bp) / k)}) {
      if (t > 0 && std::isfinite(t)) sup = std::max(sup, sigma.inverse(k * sigma(t)) / t);
    }
  }
  return sup;
}

// sup_t sigma_i^-1(g(sigma_j(t)))/t; infinite if the end exponents exceed the
// identity's.
double eta_ratio_sup(const PowerMax& si, const PowerFn& g, const PowerMax& sj) {
  const PowerMax inner = sj.composed_with(g);
  const auto& Ti = si.terms();
  const auto& Tn = inner.terms();
  auto end_ratio = [](const PowerFn& in, const PowerFn& outer_inv) -> std::pair<double, double> {
    // (c t^p / ci)^{1/pi}
    const double q = in.exponent / outer_inv.exponent;
    const double k = std::pow(in.coeff / outer_inv.coeff, 1.0 / outer_inv.exponent);
    return {q, k};
  };
  double sup = 0.0;
  auto [q0, k0] = end_ratio(Tn.front(), Ti.front());
  auto [q1, k1] = end_ratio(Tn.back(), Ti.back());
  if (q0 < 1.0 - 1e-12 || q1 > 1.0 + 1e-12) return kInf;
  if (std::fabs(q0 - 1.0) <= 1e-12) sup = std::max(sup, k0);
  if (std::fabs(q1 - 1.0) <= 1e-12) sup = std::max(sup, k1);
  std::vector<double> kinks = sj.breakpoints();
  for (double bp : inner.breakpoints()) kinks.push_back(bp);
  for (double bp : si.breakpoints()) kinks.push_back(inner.inverse(si(bp)));
  for (double t : kinks)
    if (t > 0 && std::isfinite(t)) sup = std::max(sup, si.inverse(inner(t)) / t);
  return sup;
}

}  // namespace

ExponentialComposite compose_exponential(const GainNetwork& net, const std::optional<std::vector<PowerMax>>& path,
                                         const std::vector<double>& direction) {
  const std::size_t n = net.n();
  if (net.certs.size() != n) throw std::invalid_argument("compose_exponential: one certificate per subsystem required");
  for (const auto& c : net.certs)
    if (!c.flow.coeff || !c.jump.coeff)
      throw std::invalid_argument("compose_exponential: subsystem certificates must have exponential rates");
  const auto pg = net.power_gains();
  if (!pg) throw std::invalid_argument("compose_exponential: gains are not power functions a*s^b");
  const auto sg = small_gain_check(net);
  if (!sg.holds) throw std::runtime_error("compose_exponential: small-gain condition fails");

  ExponentialComposite out;
  if (path) {
    out.path = omega_path_power(net, *path);
    out.path.construction = "explicit power path";
  } else {
    std::vector<double> a = direction.empty() ? std::vector<double>(n, 1.0) : direction;
    out.path = omega_path(net, a);
  }
  out.sigma = *out.path.power;

  out.c = kInf;
  out.alpha_factor = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& t : out.sigma[i].terms()) out.c = std::min(out.c, *net.certs[i].flow.coeff / t.exponent);
    out.alpha_factor = std::max(out.alpha_factor, jump_ratio_sup(out.sigma[i], std::exp(-*net.certs[i].jump.coeff)));
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if ((*pg)[i * n + j]) out.eta_sup = std::max(out.eta_sup, eta_ratio_sup(out.sigma[i], *(*pg)[i * n + j], out.sigma[j]));
  if (net.jumps_coupled) {
    if (out.eta_sup > 1.0 + 1e-12) throw std::runtime_error("compose_exponential: eta exceeds the identity");
    out.alpha_factor = std::max(out.alpha_factor, out.eta_sup);
  } else {
    out.notes.push_back("jumps decoupled: composite jump factor from sigma_i^-1 o alpha_i o sigma_i only");
  }
  out.d = -std::log(out.alpha_factor);

  auto& L = out.cert;
  L.form = CertForm::Max;
  L.V = composite_V(net, out.path);
  L.gain = composite_chi(net, out.path);
  L.flow = FlowRate::exponential(out.c);
  L.jump = JumpRate::exponential(out.d);
  if (!out.path.strict) out.notes.push_back("quasi Omega-path: Gamma(sigma) <= sigma with equality somewhere on the grid");
  return out;
}

TradeoffCurve tradeoff_curve(const std::vector<std::vector<double>>& chi, double c_tilde, double d,
                             const std::vector<double>& k_grid) {
  if (!(d < 0)) throw std::invalid_argument("tradeoff_curve: need d < 0");
  TradeoffCurve out;
  out.rho = spectral_radius(chi);
  if (!(c_tilde > out.rho)) throw std::invalid_argument("tradeoff_curve: need c~ > rho(chi)");
  double prev_k = -kInf, prev_omega = kInf;
  for (double k : k_grid) {
    if (!(k > out.rho && k < c_tilde)) throw std::invalid_argument("tradeoff_curve: k=" + format_double(k) + " outside (rho, c~)");
    auto scaled = chi;
    for (auto& row : scaled)
      for (auto& v : row) v /= k;
    TradeoffPoint p{k, spectral_radius(scaled), c_tilde - k, (c_tilde - k) / (-d)};
    if (!(p.rho_k < 1.0)) out.all_small_gain = false;
    if (k > prev_k && !(p.omega < prev_omega)) out.omega_decreasing = false;
    prev_k = k;
    prev_omega = p.omega;
    out.points.push_back(p);
  }
  return out;
}

ExampleTradeoff solve_example_tradeoff() {
  auto f = [](double b) { return 6 * b * b * b - b * b - 1; };
  const double b = bisect_root(f, 0.5, 1.0);
  return {b, 6 * b - 1, 2 * (3 * b - 1), std::fabs(f(b))};
}

}  // namespace iss
