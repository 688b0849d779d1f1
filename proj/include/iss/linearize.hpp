#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "iss/hybridsim.hpp"
#include "iss/lyapcheck.hpp"

namespace iss {

/// f(x,u) = R x + C u + f1(x,u), g(x,u) = D x + F u + g1(x,u) near the origin.
struct Linearization {
  Eigen::MatrixXd R, C, D, F;
  /// w(rho) = max over samples with |(x,u)| = rho of |f1| / (|x| + |u|), and
  /// likewise for g1.
  std::vector<double> rho_grid, w_flow, w_jump;
  std::vector<std::string> warnings;
};

/// Central differences at step h and h/2, Richardson-combined.  Coordinates in
/// which a one-sided quotient keeps growing as the step shrinks are reported
/// as non-Lipschitz in `warnings`.
Linearization numeric_jacobians(const SystemDef& sys, double h = 1e-6);

class LyapunovEquationError : public std::runtime_error {
 public:
  LyapunovEquationError(const std::string& what, double abscissa)
      : std::runtime_error(what), abscissa_(abscissa) {}
  double spectral_abscissa() const { return abscissa_; }

 private:
  double abscissa_;
};

/// max Re(lambda) over the eigenvalues of R.
double spectral_abscissa(const Eigen::MatrixXd& R);

/// R^T P + P R = -I in the n(n+1)/2 symmetric unknowns.  Throws
/// LyapunovEquationError when R is not Hurwitz (abscissa >= -1e-10), the
/// residual exceeds 1e-9 or P is not positive definite.
Eigen::MatrixXd solve_lyapunov_equation(const Eigen::MatrixXd& R);

double lyapunov_residual(const Eigen::MatrixXd& R, const Eigen::MatrixXd& P);

struct RadiusResult {
  double rho = 0.0;
  double q = 0.0;        // max of 2 x^T P (f - R x) / |x|^2 over samples
  double c = 0.0;        // flow rate implied by q
  double r2 = 0.0;       // max of V(g) / |x|^2
  bool certified = false;
};

struct QuadraticCertificate {
  Eigen::MatrixXd P;
  double eps = 0.0;      // lambda_min(P)
  double norm_P = 0.0;   // lambda_max(P)
  double rho = 0.0;
  double c_local = 0.0;
  double r2 = 0.0;
  double jump_factor = 0.0;  // r2 / eps = exp(-d)
  double d = 0.0;
  std::vector<RadiusResult> radii;
  LyapunovCandidate candidate;  // V = x^T P x, chi(r) = |P| r, implication form
  std::vector<std::string> warnings;
};

struct LocalSearchOptions {
  std::vector<double> rho_grid;  // empty: 32 log-spaced points on [1e-4, 10]
  std::size_t samples = 2048;    // per radius, drawn from the 2*rho ball
  std::uint64_t seed = 1;
};

/// Largest grid radius rho on which V = x^T P x decays along the flow and has
/// a fitted jump factor, for |x| <= rho, |u| <= rho, |x| >= sqrt(|u|).
/// Throws std::runtime_error if no radius certifies.
QuadraticCertificate build_local_certificate(const SystemDef& sys, const Linearization& lin, const Eigen::MatrixXd& P,
                                             const LocalSearchOptions& opts = {});

/// Sample plan for re-checking a local certificate on its rho-ball.
SamplePlan local_sample_plan(const QuadraticCertificate& cert, std::uint64_t seed = 1);

}  // namespace iss
