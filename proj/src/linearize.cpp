#include "iss/linearize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "iss/numeric.hpp"

namespace iss {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Column j of the Jacobian of F(z) at 0, z = (x, u).
template <class F>
VectorXd central_column(F&& fn, std::size_t dim, std::size_t j, std::size_t rows, double h) {
  auto diff = [&](double step) {
    Vec zp(dim, 0.0), zm(dim, 0.0);
    zp[j] = step;
    zm[j] = -step;
    const Vec a = fn(zp), b = fn(zm);
    VectorXd out(rows);
    for (std::size_t i = 0; i < rows; ++i) out[static_cast<Eigen::Index>(i)] = (a[i] - b[i]) / (2 * step);
    return out;
  };
  return (4.0 * diff(h / 2) - diff(h)) / 3.0;
}

template <class F>
bool non_lipschitz(F&& fn, std::size_t dim, std::size_t j, std::size_t rows, double h) {
  auto quotient = [&](double step, double sign) {
    Vec z(dim, 0.0);
    z[j] = sign * step;
    const Vec a = fn(z);
    double q = 0.0;
    for (std::size_t i = 0; i < rows; ++i) q = std::max(q, std::fabs(a[i]) / step);
    return q;
  };
  for (double sign : {1.0, -1.0}) {
    const double q1 = quotient(h, sign), q2 = quotient(h * 1e-2, sign);
    if (q2 > 2.0 * q1 + 1e-3) return true;
  }
  return false;
}

Vec random_unit(Rng& rng, std::size_t n) {
  Vec v(n);
  double s = 0.0;
  do {
    s = 0.0;
    for (auto& c : v) {
      c = rng.normal();
      s += c * c;
    }
  } while (s == 0.0);
  s = std::sqrt(s);
  for (auto& c : v) c /= s;
  return v;
}

VectorXd to_eigen(const Vec& v) { return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())); }

}  // namespace

Linearization numeric_jacobians(const SystemDef& sys, double h) {
  if (!(h > 0)) throw std::invalid_argument("numeric_jacobians: step must be positive");
  const std::size_t n = sys.n(), m = sys.m(), dim = n + m;
  auto split = [n, m](const Vec& z) {
    return std::pair<Vec, Vec>{Vec(z.begin(), z.begin() + static_cast<long>(n)), Vec(z.begin() + static_cast<long>(n), z.begin() + static_cast<long>(n + m))};
  };
  auto f = [&](const Vec& z) {
    auto [x, u] = split(z);
    return sys.flow(x, u);
  };
  auto g = [&](const Vec& z) {
    auto [x, u] = split(z);
    return sys.jump(x, u);
  };

  Linearization lin;
  const auto N = static_cast<Eigen::Index>(n), M = static_cast<Eigen::Index>(m);
  lin.R = MatrixXd::Zero(N, N);
  lin.C = MatrixXd::Zero(N, M);
  lin.D = MatrixXd::Zero(N, N);
  lin.F = MatrixXd::Zero(N, M);
  auto name = [&](std::size_t j) { return j < n ? sys.states()[j] : sys.inputs()[j - n]; };
  for (std::size_t j = 0; j < dim; ++j) {
    const VectorXd cf = central_column(f, dim, j, n, h);
    const VectorXd cg = central_column(g, dim, j, n, h);
    if (j < n) {
      lin.R.col(static_cast<Eigen::Index>(j)) = cf;
      lin.D.col(static_cast<Eigen::Index>(j)) = cg;
    } else {
      lin.C.col(static_cast<Eigen::Index>(j - n)) = cf;
      lin.F.col(static_cast<Eigen::Index>(j - n)) = cg;
    }
    if (non_lipschitz(f, dim, j, n, h))
      lin.warnings.push_back("flow is not Lipschitz in " + name(j) + " at the origin; the linear part ignores it");
    if (non_lipschitz(g, dim, j, n, h))
      lin.warnings.push_back("jump map is not Lipschitz in " + name(j) + " at the origin; the linear part ignores it");
  }

  lin.rho_grid = log_grid(1e-4, 10.0, 32);
  Rng rng(0x6c696eULL);
  for (double rho : lin.rho_grid) {
    double wf = 0.0, wg = 0.0;
    for (int k = 0; k < 256; ++k) {
      Vec z = random_unit(rng, dim);
      for (auto& c : z) c *= rho;
      auto [x, u] = split(z);
      const VectorXd X = to_eigen(x), U = to_eigen(u);
      const double scale = norm2(x) + norm2(u);
      try {
        const VectorXd f1 = to_eigen(sys.flow(x, u)) - lin.R * X - lin.C * U;
        const VectorXd g1 = to_eigen(sys.jump(x, u)) - lin.D * X - lin.F * U;
        wf = std::max(wf, f1.norm() / scale);
        wg = std::max(wg, g1.norm() / scale);
      } catch (const EvalError&) {
        wf = wg = std::numeric_limits<double>::infinity();
      }
    }
    lin.w_flow.push_back(wf);
    lin.w_jump.push_back(wg);
  }
  return lin;
}

double spectral_abscissa(const MatrixXd& R) {
  if (R.rows() == 0) return -std::numeric_limits<double>::infinity();
  Eigen::EigenSolver<MatrixXd> es(R, false);
  if (es.info() != Eigen::Success) throw std::runtime_error("spectral_abscissa: eigenvalue iteration failed");
  return es.eigenvalues().real().maxCoeff();
}

double lyapunov_residual(const MatrixXd& R, const MatrixXd& P) {
  return (R.transpose() * P + P * R + MatrixXd::Identity(R.rows(), R.cols())).norm();
}

MatrixXd solve_lyapunov_equation(const MatrixXd& R) {
  if (R.rows() != R.cols()) throw std::invalid_argument("solve_lyapunov_equation: matrix must be square");
  const Eigen::Index n = R.rows();
  const double abscissa = spectral_abscissa(R);
  if (!(abscissa < -1e-10))
    throw LyapunovEquationError("matrix is not Hurwitz: spectral abscissa " + format_double(abscissa), abscissa);

  std::vector<std::pair<Eigen::Index, Eigen::Index>> idx;
  MatrixXd pos = MatrixXd::Constant(n, n, -1);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) {
      pos(i, j) = pos(j, i) = static_cast<double>(idx.size());
      idx.emplace_back(i, j);
    }
  const auto K = static_cast<Eigen::Index>(idx.size());
  // Equation (i,j), i <= j: sum_k R_ki P_kj + P_ik R_kj = -delta_ij.
  MatrixXd A = MatrixXd::Zero(K, K);
  VectorXd b = VectorXd::Zero(K);
  for (Eigen::Index e = 0; e < K; ++e) {
    const auto [i, j] = idx[static_cast<std::size_t>(e)];
    for (Eigen::Index k = 0; k < n; ++k) {
      A(e, static_cast<Eigen::Index>(pos(k, j))) += R(k, i);
      A(e, static_cast<Eigen::Index>(pos(i, k))) += R(k, j);
    }
    b[e] = i == j ? -1.0 : 0.0;
  }
  Eigen::FullPivLU<MatrixXd> lu(A);
  VectorXd p = lu.solve(b);
  auto assemble = [&](const VectorXd& v) {
    MatrixXd P(n, n);
    for (Eigen::Index e = 0; e < K; ++e) {
      const auto [i, j] = idx[static_cast<std::size_t>(e)];
      P(i, j) = P(j, i) = v[e];
    }
    return P;
  };
  for (int it = 0; it < 3; ++it) {
    const VectorXd r = b - A * p;
    if (r.norm() == 0.0) break;
    p += lu.solve(r);
  }
  const MatrixXd P = assemble(p);
  const double res = lyapunov_residual(R, P);
  if (!(res <= 1e-9))
    throw LyapunovEquationError("Lyapunov equation residual " + format_double(res) + " exceeds 1e-9", abscissa);
  Eigen::LLT<MatrixXd> llt(P);
  if (llt.info() != Eigen::Success) throw LyapunovEquationError("solution P is not positive definite", abscissa);
  return P;
}

namespace {

RadiusResult probe_radius(const SystemDef& sys, const Linearization& lin, const MatrixXd& P, double lam_M, double eps,
                          double norm_P, double rho, std::size_t samples, Rng rng) {
  const std::size_t n = sys.n(), m = sys.m();
  RadiusResult r;
  r.rho = rho;
  const double outer = 2.0 * rho;
  r.q = -std::numeric_limits<double>::infinity();
  auto probe = [&](const Vec& x, const Vec& u) {
    const VectorXd X = to_eigen(x);
    const double xx = X.squaredNorm();
    if (xx == 0.0) return;
    const VectorXd f = to_eigen(sys.flow(x, u));
    const VectorXd Pg = to_eigen(sys.jump(x, u));
    r.q = std::max(r.q, 2.0 * X.dot(P * (f - lin.R * X)) / xx);
    r.r2 = std::max(r.r2, Pg.dot(P * Pg) / xx);
  };
  try {
    for (std::size_t k = 0; k < samples; ++k) {
      Vec x = random_unit(rng, n);
      const double mag = k % 4 == 0 ? outer : outer * std::pow(rng.uniform(), 1.0 / static_cast<double>(n));
      for (auto& c : x) c *= mag;
      Vec u(m, 0.0);
      if (m > 0 && k % 3 != 0) {
        u = random_unit(rng, m);
        const double cap = std::min(outer, mag * mag);
        const double um = k % 3 == 1 ? cap : cap * rng.uniform();
        for (auto& c : u) c *= um;
      }
      probe(x, u);
    }
  } catch (const EvalError&) {
    r.certified = false;
    return r;
  }
  if (!std::isfinite(r.q)) r.q = 0.0;
  // x^T(R^T P + P R)x = -|x|^2 for P from the Lyapunov equation; in general
  // bounded by -lam_M |x|^2 with lam_M the least eigenvalue of -(R^T P + P R).
  const double margin = lam_M - r.q;
  r.c = margin >= 0 ? margin / norm_P : margin / eps;
  r.certified = r.c > 0 || (r.c == 0 && r.q <= 0 && lam_M == 0);
  return r;
}

Expr quadratic_form(const MatrixXd& P, const std::vector<std::string>& states) {
  std::vector<Expr> terms;
  const auto n = P.rows();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) {
      const double c = i == j ? P(i, i) : 2.0 * P(i, j);
      if (c == 0.0) continue;
      Expr xi = Expr::variable(states[static_cast<std::size_t>(i)]);
      Expr xj = Expr::variable(states[static_cast<std::size_t>(j)]);
      Expr mono = i == j ? Expr::binary(BinaryOp::Pow, xi, Expr::number(2)) : Expr::binary(BinaryOp::Mul, xi, xj);
      terms.push_back(Expr::binary(BinaryOp::Mul, Expr::number(c), mono));
    }
  if (terms.empty()) return Expr::number(0.0);
  Expr acc = terms.front();
  for (std::size_t k = 1; k < terms.size(); ++k) acc = Expr::binary(BinaryOp::Add, acc, terms[k]);
  return acc;
}

}  // namespace

QuadraticCertificate build_local_certificate(const SystemDef& sys, const Linearization& lin, const MatrixXd& P,
                                             const LocalSearchOptions& opts) {
  const auto n = static_cast<Eigen::Index>(sys.n());
  if (P.rows() != n || P.cols() != n) throw std::invalid_argument("build_local_certificate: P has wrong size");
  if (lin.R.rows() != n) throw std::invalid_argument("build_local_certificate: linearization has wrong size");
  if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument("build_local_certificate: P is not symmetric");

  QuadraticCertificate cert;
  cert.P = 0.5 * (P + P.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cert.P);
  cert.eps = es.eigenvalues().minCoeff();
  cert.norm_P = es.eigenvalues().maxCoeff();
  if (!(cert.eps > 0)) throw std::invalid_argument("build_local_certificate: P is not positive definite");
  const MatrixXd M = -(lin.R.transpose() * cert.P + cert.P * lin.R);
  const double lam_M = Eigen::SelfAdjointEigenSolver<MatrixXd>(0.5 * (M + M.transpose())).eigenvalues().minCoeff();
  cert.warnings = lin.warnings;

  const auto grid = opts.rho_grid.empty() ? log_grid(1e-4, 10.0, 32) : opts.rho_grid;
  cert.radii.resize(grid.size());
  const Rng base(opts.seed);
  parallel_for(grid.size(), [&](std::size_t k) {
    cert.radii[k] = probe_radius(sys, lin, cert.P, lam_M, cert.eps, cert.norm_P, grid[k], opts.samples, base.split(k));
  });
  // The rho-ball contains every smaller ball: accumulate q and r2 upward and
  // stop at the first radius that fails.
  const RadiusResult* best = nullptr;
  std::vector<std::size_t> order(grid.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return grid[a] < grid[b]; });
  double q = -std::numeric_limits<double>::infinity(), r2 = 0.0;
  for (std::size_t k : order) {
    auto& r = cert.radii[k];
    q = std::max(q, r.q);
    r2 = std::max(r2, r.r2);
    r.q = q;
    r.r2 = r2;
    const double margin = lam_M - q;
    r.c = margin >= 0 ? margin / cert.norm_P : margin / cert.eps;
    r.certified = r.certified && (r.c > 0 || (r.c == 0 && q <= 0 && lam_M == 0));
    if (!r.certified) break;
    best = &r;
  }
  for (std::size_t k = 0; k < order.size(); ++k)
    if (best && grid[order[k]] > best->rho) cert.radii[order[k]].certified = false;
  if (!best)
    throw std::runtime_error(
        "no radius on the grid certifies: the linearization at the origin is unstable or the remainder is too large");

  cert.rho = best->rho;
  cert.c_local = best->c;
  // the sampled maximum of V(Dx)/|x|^2 never exceeds its exact value
  const MatrixXd DPD = lin.D.transpose() * cert.P * lin.D;
  cert.r2 = std::max(best->r2, Eigen::SelfAdjointEigenSolver<MatrixXd>(0.5 * (DPD + DPD.transpose())).eigenvalues().maxCoeff());
  cert.jump_factor = cert.r2 / cert.eps;
  cert.d = cert.jump_factor > 0 ? -std::log(cert.jump_factor) : std::numeric_limits<double>::infinity();
  if (cert.rho == grid.back()) cert.warnings.push_back("largest grid radius certified; the true radius may be larger");

  auto& L = cert.candidate;
  L.form = CertForm::Implication;
  L.V = StateFunction(quadratic_form(cert.P, sys.states()), sys.states());
  L.psi1 = ScalarFn::from_callable([e = cert.eps](double r) { return e * r * r; },
                                   format_double(cert.eps) + "*r^2", FnClass::Kinf);
  L.psi2 = ScalarFn::from_callable([p = cert.norm_P](double r) { return p * r * r; },
                                   format_double(cert.norm_P) + "*r^2", FnClass::Kinf);
  // |x|^2 >= V/|P| >= |u| whenever V >= |P| |u|.
  L.gain = ScalarFn::linear(cert.norm_P);
  L.flow = FlowRate::exponential(cert.c_local);
  if (cert.jump_factor > 0) {
    L.jump = JumpRate::exponential(cert.d);
  } else {
    L.jump = JumpRate::general(ScalarFn::from_callable([](double) { return 0.0; }, "0"));
  }
  return cert;
}

SamplePlan local_sample_plan(const QuadraticCertificate& cert, std::uint64_t seed) {
  SamplePlan plan;
  plan.radius = cert.rho;
  plan.input_radius = cert.rho;
  plan.ball = true;
  plan.seed = seed;
  return plan;
}

}  // namespace iss
