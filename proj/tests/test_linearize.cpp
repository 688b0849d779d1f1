#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "iss/linearize.hpp"
#include "iss/numeric.hpp"

using namespace iss;
using Eigen::MatrixXd;

namespace {

SystemDef scalar(const std::string& f, const std::string& g) {
  return SystemDef("s", {"x"}, {"u"}, {parse(f)}, {parse(g)});
}

std::string matrix_expr(const MatrixXd& A, const std::vector<std::string>& names, Eigen::Index row) {
  std::string out = "0*" + names[0];
  for (Eigen::Index j = 0; j < A.cols(); ++j) out += " + (" + format_double(A(row, j)) + ")*" + names[j];
  return out;
}

MatrixXd random_hurwitz(Rng& rng, Eigen::Index n) {
  MatrixXd A(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) A(i, j) = rng.uniform(-1, 1);
  const double shift = spectral_abscissa(A) + rng.uniform(0.2, 1.0);
  A -= shift * MatrixXd::Identity(n, n);
  return A;
}

SystemDef linear_system(const MatrixXd& A, const MatrixXd& J) {
  std::vector<std::string> names;
  for (Eigen::Index i = 0; i < A.rows(); ++i) names.push_back("x" + std::to_string(i + 1));
  std::vector<Expr> f, g;
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    f.push_back(parse(matrix_expr(A, names, i)));
    g.push_back(parse(matrix_expr(J, names, i)));
  }
  return SystemDef("lin", names, {}, f, g);
}

}  // namespace

TEST(Jacobians, ScalarExamples) {
  const auto cubic = numeric_jacobians(scalar("-x^3 + u", "x + x^3 + u"));
  EXPECT_NEAR(cubic.R(0, 0), 0.0, 1e-8);
  EXPECT_NEAR(cubic.C(0, 0), 1.0, 1e-8);
  EXPECT_NEAR(cubic.D(0, 0), 1.0, 1e-8);
  EXPECT_NEAR(cubic.F(0, 0), 1.0, 1e-8);
  const auto quad = numeric_jacobians(scalar("-x + x^2", "0.5*x"));
  EXPECT_NEAR(quad.R(0, 0), -1.0, 1e-8);
  EXPECT_NEAR(quad.C(0, 0), 0.0, 1e-8);
  EXPECT_NEAR(quad.D(0, 0), 0.5, 1e-8);
  EXPECT_TRUE(quad.warnings.empty());
}

TEST(Jacobians, LinearSystemsAreRecovered) {
  Rng rng(3);
  for (int k = 0; k < 10; ++k) {
    const auto n = static_cast<Eigen::Index>(1 + rng.below(4));
    MatrixXd A(n, n), J(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        A(i, j) = rng.uniform(-3, 3);
        J(i, j) = rng.uniform(-1, 1);
      }
    const auto lin = numeric_jacobians(linear_system(A, J));
    EXPECT_LE((lin.R - A).cwiseAbs().maxCoeff(), 1e-7);
    EXPECT_LE((lin.D - J).cwiseAbs().maxCoeff(), 1e-7);
    EXPECT_EQ(lin.C.cols(), 0);
  }
}

TEST(Jacobians, NonLipschitzCoordinateIsReported) {
  const SystemDef sys("pair", {"x1", "x2"}, {}, {parse("-x1 + x2^2"), parse("-x2 + 3*sqrt(abs(x1))")},
                      {parse("exp(-1)*x1"), parse("exp(-1)*x2")});
  const auto lin = numeric_jacobians(sys);
  EXPECT_NEAR(lin.R(0, 0), -1.0, 1e-8);
  EXPECT_NEAR(lin.R(1, 1), -1.0, 1e-8);
  EXPECT_NEAR(lin.R(0, 1), 0.0, 1e-6);
  EXPECT_NEAR(lin.D(0, 0), std::exp(-1.0), 1e-8);
  ASSERT_FALSE(lin.warnings.empty());
  bool names_x1 = false;
  for (const auto& w : lin.warnings) names_x1 = names_x1 || w.find("x1") != std::string::npos;
  EXPECT_TRUE(names_x1);
}

TEST(LyapunovEquation, ClosedForms) {
  MatrixXd R(1, 1);
  R << -1.0;
  EXPECT_NEAR(solve_lyapunov_equation(R)(0, 0), 0.5, 1e-14);
  MatrixXd D = MatrixXd::Zero(2, 2);
  D.diagonal() << -1.0, -2.0;
  const auto P = solve_lyapunov_equation(D);
  EXPECT_NEAR(P(0, 0), 0.5, 1e-14);
  EXPECT_NEAR(P(1, 1), 0.25, 1e-14);
  EXPECT_NEAR(P(0, 1), 0.0, 1e-14);
}

TEST(LyapunovEquation, RandomHurwitzResidualAndDefiniteness) {
  Rng rng(11);
  for (int k = 0; k < 50; ++k) {
    const auto n = static_cast<Eigen::Index>(1 + rng.below(5));
    const MatrixXd A = random_hurwitz(rng, n);
    const MatrixXd P = solve_lyapunov_equation(A);
    const MatrixXd res = A.transpose() * P + P * A + MatrixXd::Identity(n, n);
    EXPECT_LE(res.cwiseAbs().maxCoeff(), 1e-9) << k;
    EXPECT_NEAR(lyapunov_residual(A, P), res.norm(), 1e-9);
    EXPECT_LE((P - P.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(Eigen::LLT<MatrixXd>(P).info(), Eigen::Success);
  }
}

TEST(LyapunovEquation, NonHurwitzThrows) {
  MatrixXd R(2, 2);
  R << 0.1, 1.0, -1.0, 0.1;
  try {
    solve_lyapunov_equation(R);
    FAIL() << "expected LyapunovEquationError";
  } catch (const LyapunovEquationError& e) {
    EXPECT_NEAR(e.spectral_abscissa(), 0.1, 1e-12);
  }
  MatrixXd Z = MatrixXd::Zero(1, 1);
  EXPECT_THROW(solve_lyapunov_equation(Z), LyapunovEquationError);
}

TEST(LocalCertificate, LinearFlowWithContractingJumps) {
  const auto sys = scalar("-x + u", "0.5*x");
  const auto lin = numeric_jacobians(sys);
  const auto P = solve_lyapunov_equation(lin.R);
  const auto cert = build_local_certificate(sys, lin, P);
  EXPECT_NEAR(cert.eps, 0.5, 1e-12);
  EXPECT_NEAR(cert.norm_P, 0.5, 1e-12);
  EXPECT_NEAR(cert.jump_factor, 0.25, 1e-9);
  EXPECT_NEAR(cert.d, std::log(4.0), 1e-9);
  EXPECT_GT(cert.c_local, 0.0);
  EXPECT_GT(cert.rho, 0.0);
  const auto rep = check_implication_form(sys, cert.candidate, local_sample_plan(cert));
  EXPECT_TRUE(rep.certified) << rep.flow.worst_margin << " " << rep.jump.worst_margin;
}

TEST(LocalCertificate, ExpandingJumpsGiveNegativeD) {
  const auto sys = scalar("-x + u", "2*x");
  const auto lin = numeric_jacobians(sys);
  const auto cert = build_local_certificate(sys, lin, solve_lyapunov_equation(lin.R));
  EXPECT_NEAR(cert.jump_factor, 4.0, 1e-9);
  EXPECT_NEAR(cert.d, -std::log(4.0), 1e-9);
}

TEST(LocalCertificate, RadiusShrinksForUnstableRemainder) {
  // Flow vanishes at |x| = 1, so no ball of radius >= 1 can certify decay.
  const auto sys = scalar("-x + x^3 + u", "0.5*x");
  const auto lin = numeric_jacobians(sys);
  const auto cert = build_local_certificate(sys, lin, solve_lyapunov_equation(lin.R));
  EXPECT_LT(cert.rho, 1.0);
  EXPECT_GT(cert.rho, 1e-4);
  for (std::size_t k = 1; k < cert.radii.size(); ++k) {
    EXPECT_GE(cert.radii[k].q, cert.radii[k - 1].q);
    if (cert.radii[k].certified) {
      EXPECT_TRUE(cert.radii[k - 1].certified);
    }
  }
  const auto rep = check_implication_form(sys, cert.candidate, local_sample_plan(cert, 7));
  EXPECT_TRUE(rep.certified) << rep.flow.worst_margin << " " << rep.jump.worst_margin;
}

TEST(LocalCertificate, RandomLinearSystemsCertifyWithSandwich) {
  Rng rng(21);
  for (int k = 0; k < 5; ++k) {
    const auto n = static_cast<Eigen::Index>(2 + rng.below(3));
    const MatrixXd A = random_hurwitz(rng, n);
    MatrixXd J(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) J(i, j) = rng.uniform(-1, 1);
    const auto sys = linear_system(A, J);
    const auto lin = numeric_jacobians(sys);
    const MatrixXd P = solve_lyapunov_equation(lin.R);
    LocalSearchOptions o;
    o.samples = 512;
    const auto cert = build_local_certificate(sys, lin, P, o);
    // Exact jump factor: lambda_max(J^T P J) / lambda_min(P).
    const MatrixXd JPJ = J.transpose() * cert.P * J;
    const double exact = Eigen::SelfAdjointEigenSolver<MatrixXd>(0.5 * (JPJ + JPJ.transpose())).eigenvalues().maxCoeff();
    EXPECT_NEAR(cert.r2, exact, 1e-6 * (1 + exact));
    for (int t = 0; t < 100; ++t) {
      Vec x(static_cast<std::size_t>(n));
      for (auto& v : x) v = rng.uniform(-2, 2);
      const double V = cert.candidate.V(x);
      double nx = 0;
      for (double v : x) nx += v * v;
      EXPECT_GE(V, cert.eps * nx * (1 - 1e-12));
      EXPECT_LE(V, cert.norm_P * nx * (1 + 1e-12));
    }
    SamplePlan plan = local_sample_plan(cert, 3);
    plan.interior = 1024;
    EXPECT_TRUE(check_implication_form(sys, cert.candidate, plan).certified) << k;
  }
}

TEST(LocalCertificate, RejectsBadP) {
  const auto sys = scalar("-x + u", "0.5*x");
  const auto lin = numeric_jacobians(sys);
  MatrixXd neg(1, 1);
  neg << -1.0;
  EXPECT_THROW(build_local_certificate(sys, lin, neg), std::invalid_argument);
  EXPECT_THROW(build_local_certificate(sys, lin, MatrixXd::Identity(2, 2)), std::invalid_argument);
}
