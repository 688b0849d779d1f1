#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace iss {

/// `n` log-spaced points on [lo, hi], endpoints included.
std::vector<double> log_grid(double lo, double hi, std::size_t n);
std::vector<double> linear_grid(double lo, double hi, std::size_t n);

/// Default comparison-function grid: 64 log-spaced points on [1e-4, 1e4].
std::vector<double> default_class_grid();

/// std::mt19937_64 seeded through std::seed_seq.  Variates are derived from the
/// raw engine output rather than the standard distributions, whose algorithms
/// differ between standard libraries, so reports stay byte-reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  /// Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Log-uniform on [lo, hi], lo > 0.
  double log_uniform(double lo, double hi);
  double normal();
  std::size_t below(std::size_t n);

  /// Independent stream for sub-task `index`; the parent is not advanced.
  Rng split(std::uint64_t index) const;

 private:
  Rng(std::uint64_t seed, std::uint64_t stream, bool);

  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

/// i-th point (1-based index recommended) of the Halton sequence in `dim`
/// dimensions, components in [0, 1).
std::vector<double> halton(std::uint64_t index, std::size_t dim);

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
  bool converged = true;
};

/// Adaptive Gauss-Kronrod (7/15) on [a, b].
QuadratureResult integrate(const std::function<double(double)>& f, double a, double b, double rel_tol = 1e-12,
                           double abs_tol = 1e-14, int max_depth = 50);

/// Runs fn(0..n-1) on up to `threads` worker threads (0: hardware
/// concurrency).  The first exception thrown by any call is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, unsigned threads = 0);

/// Shortest decimal that round-trips; "nan", "inf", "-inf" for non-finite.
std::string format_double(double v);

/// Bisection root of a continuous function with f(lo), f(hi) of opposite sign,
/// iterated until the bracket no longer shrinks in floating point.
double bisect_root(const std::function<double(double)>& f, double lo, double hi);

}  // namespace iss
