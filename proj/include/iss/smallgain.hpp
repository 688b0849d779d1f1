#pragma once

#include <optional>
#include <string>
#include <vector>

#include "iss/cmpfun.hpp"
#include "iss/lyapcheck.hpp"
#include "iss/numeric.hpp"

namespace iss {

/// f(s) = coeff * s^exponent.
struct PowerFn {
  double coeff = 0.0;
  double exponent = 1.0;
  double operator()(double s) const;
};

/// Least-squares fit of log f against log s on a log grid over [1e-6, 1e6];
/// accepted when the max log residual is <= tol.
std::optional<PowerFn> detect_power(const ScalarFn& f, double tol = 1e-9);

/// max_k c_k t^{p_k}, kept as its upper envelope in log-log coordinates
/// (terms sorted by increasing exponent, each active on an interval).
class PowerMax {
 public:
  PowerMax() = default;
  explicit PowerMax(std::vector<PowerFn> terms);

  double operator()(double t) const;
  /// min_k (y / c_k)^{1/p_k}: the exact inverse of the envelope.
  double inverse(double y) const;
  /// g o this, valid for increasing g.
  PowerMax composed_with(const PowerFn& g) const;
  static PowerMax max(const PowerMax& a, const PowerMax& b);

  const std::vector<PowerFn>& terms() const { return terms_; }
  /// t-values where the active term changes (ascending).
  std::vector<double> breakpoints() const;
  std::string describe(const std::string& var = "t") const;

 private:
  std::vector<PowerFn> terms_;
};

/// Interconnection gains chi_ij (i <- j), external gains chi_i, optional
/// per-subsystem certificates.  Missing gains are identically zero.
struct SubsystemCert {
  StateFunction V;  // over the interconnection's full state
  FlowRate flow;
  JumpRate jump;
};

class GainNetwork {
 public:
  explicit GainNetwork(std::size_t n = 0);
  static GainNetwork linear(const std::vector<std::vector<double>>& G);

  std::size_t n() const { return n_; }
  void set_gain(std::size_t i, std::size_t j, ScalarFn g);
  const std::optional<ScalarFn>& gain(std::size_t i, std::size_t j) const { return gains_[i * n_ + j]; }
  void set_external(std::size_t i, ScalarFn g) { external_.at(i) = std::move(g); }
  const ScalarFn& external(std::size_t i) const { return external_.at(i); }

  std::vector<SubsystemCert> certs;
  /// State names of the interconnection; lets composites keep V symbolic.
  std::vector<std::string> states;
  /// When true, subsystem jump bounds contain the cross gains and the
  /// composite jump bound includes eta.
  bool jumps_coupled = false;

  /// Gains as a matrix when all are linear (power fits with exponent 1).
  std::optional<std::vector<std::vector<double>>> linear_matrix() const;
  /// Power fits for every present gain, or nullopt if one is not in P.
  std::optional<std::vector<std::optional<PowerFn>>> power_gains() const;

 private:
  std::size_t n_;
  std::vector<std::optional<ScalarFn>> gains_;
  std::vector<ScalarFn> external_;
};

std::vector<double> gamma_apply(const GainNetwork& net, const std::vector<double>& s);

struct CycleViolation {
  std::vector<std::size_t> cycle;  // k1, ..., kp with k1 == kp
  double s = 0.0;
  double composed = 0.0;           // gamma_{k1k2} o ... o gamma_{k(p-1)kp}(s) >= s
  std::vector<double> witness;     // nonzero w with Gamma(w) >= w
};

struct SmallGainResult {
  bool holds = true;
  std::size_t cycles = 0;
  std::vector<CycleViolation> violations;  // every (cycle, grid point) failure
  /// max over cycles and grid points of composed(s)/s.
  double worst_ratio = 0.0;
};

/// Default small-gain grid: 64 log-spaced points on [1e-6, 1e6].
std::vector<double> small_gain_grid();

SmallGainResult small_gain_check(const GainNetwork& net, const std::vector<double>& r_grid = small_gain_grid());

/// Spectral radius of a nonnegative matrix by shifted power iteration.
double spectral_radius(const std::vector<std::vector<double>>& G, double tol = 1e-10);
/// Throws std::invalid_argument if any gain is nonlinear.
double spectral_radius(const GainNetwork& net, double tol = 1e-10);

struct OmegaPath {
  std::vector<ScalarFn> sigma, sigma_inv;
  std::vector<double> direction;
  std::string construction;
  std::vector<double> grid;
  std::vector<std::vector<double>> table;  // table[i][k] = sigma_i(grid[k])
  bool strict = false;                     // Gamma(sigma) < sigma at every grid point
  double worst_ratio = 0.0;                // max_{i,r} Gamma(sigma(r))_i / sigma_i(r)
  std::optional<std::vector<PowerMax>> power;  // exact representation for power gains
};

/// sigma(t) = Q(a t), Q(x) = MAX{x, Gamma(x), ..., Gamma^{n-1}(x)}; validated
/// on the grid.  Throws std::runtime_error naming the offending r and component.
OmegaPath omega_path(const GainNetwork& net, const std::vector<double>& a,
                     const std::vector<double>& r_grid = default_class_grid());

/// Path from explicit power envelopes, validated on the grid.
OmegaPath omega_path_power(const GainNetwork& net, std::vector<PowerMax> sigma,
                           const std::vector<double>& r_grid = default_class_grid());

/// Checks Gamma(sigma(r)) <= sigma(r) (relative slack 1e-12) and the K-infinity
/// class of each sigma_i; fills strict / worst_ratio.
void validate_omega_path(const GainNetwork& net, OmegaPath& path);

struct CompositeCertificate {
  LyapunovCandidate cert;  // max form
  double eta_sup = 0.0;    // sup_r eta(r)/r on the grid
  bool eta_below_identity = true;
  std::vector<std::string> notes;
};

/// V = max_i sigma_i^-1(V_i), chi = max_i sigma_i^-1 o chi_i,
/// phi(r) = min_i (sigma_i^-1)'(sigma_i(r)) phi_i(sigma_i(r)), alpha = alpha*
/// (max{alpha*, eta} when jumps are coupled).
CompositeCertificate compose_certificate(const GainNetwork& net, const OmegaPath& path);

struct ExponentialComposite {
  LyapunovCandidate cert;
  double c = 0.0, d = 0.0;
  std::vector<PowerMax> sigma;
  OmegaPath path;
  double alpha_factor = 0.0;  // exp(-d)
  double eta_sup = 0.0;
  std::vector<std::string> notes;
};

/// Exponential composite for power gains.  Without an explicit path uses
/// Q(a t) with a = `direction` (default all ones).
ExponentialComposite compose_exponential(const GainNetwork& net,
                                         const std::optional<std::vector<PowerMax>>& path = std::nullopt,
                                         const std::vector<double>& direction = {});

struct TradeoffPoint {
  double k;
  double rho_k;  // spectral radius of chi / k
  double c_k;    // c~ - k
  double omega;  // (c~ - k) / (-d)
};

struct TradeoffCurve {
  double rho = 0.0;
  std::vector<TradeoffPoint> points;
  bool omega_decreasing = true;
  bool all_small_gain = true;
};

TradeoffCurve tradeoff_curve(const std::vector<std::vector<double>>& chi, double c_tilde, double d,
                             const std::vector<double>& k_grid);

struct ExampleTradeoff {
  double b;
  double a;         // a - 1 = 2(3b - 1)
  double growth;    // 2(3b - 1), flow growth rate of the composite V
  double residual;  // |6b^3 - b^2 - 1|
};

/// Balances a - 1 = 2(3b - 1) on the small-gain boundary a b^2 = 1.
ExampleTradeoff solve_example_tradeoff();

}  // namespace iss
