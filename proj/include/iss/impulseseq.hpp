#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "iss/cmpfun.hpp"

namespace iss {

/// Impulse times on a finite working horizon [t0, horizon].
class ImpulseSequence {
 public:
  static constexpr double kMinGap = 1e-12;

  ImpulseSequence() = default;
  /// Throws std::invalid_argument unless t0 < times[0] < ... <= horizon with
  /// consecutive gaps >= kMinGap.
  ImpulseSequence(double t0, std::vector<double> times, double horizon);

  double t0() const { return t0_; }
  double horizon() const { return horizon_; }
  const std::vector<double>& times() const { return times_; }
  std::size_t size() const { return times_.size(); }

  /// Number of impulse times in (s, t] (closed = false) or [s, t] (closed = true).
  /// Throws std::out_of_range unless t0 <= s <= t <= horizon.
  std::size_t count(double s, double t, bool closed = false) const;

  /// Smallest / largest gap between consecutive impulse times; +inf / 0 when
  /// there are fewer than two.
  double min_gap() const;
  double max_gap() const;

 private:
  double t0_ = 0.0;
  std::vector<double> times_;
  double horizon_ = 0.0;
};

inline std::size_t count_jumps(const ImpulseSequence& seq, double s, double t, bool closed) {
  return seq.count(s, t, closed);
}

struct FdtMinGap {
  double theta;
};
struct FdtMaxGap {
  double theta;
};
/// -d N(t,s) - (c - lambda)(t - s) <= mu
struct Adt {
  double mu, lambda, c, d;
};
/// -d N(t,s) - c (t - s) <= ln h(t - s)
struct Gadt {
  ScalarFn h;
  double c, d;
};

using DwellTimeClass = std::variant<FdtMinGap, FdtMaxGap, Adt, Gadt>;

/// Throws std::invalid_argument if parameters are out of range (theta, lambda,
/// mu must be positive; h must admit an L-majorant).
void validate_dwell_class(const DwellTimeClass& cls);
std::string describe(const DwellTimeClass& cls);

struct Membership {
  bool holds = true;
  /// Largest value of lhs - rhs over the critical pairs (for FDT: theta - gap
  /// or gap - theta).  -inf when nothing was constrained.
  double worst_margin = 0.0;
  double s = 0.0, t = 0.0;  // witness pair attaining worst_margin
  std::size_t pairs_checked = 0;
};

/// Membership on the finite horizon.  ADT/gADT are evaluated on every cell of
/// (s, t) pairs sharing the same counted jumps, using the exact closure of each
/// cell's length range; gADT cells are additionally sampled at 33 points.
Membership member(const ImpulseSequence& seq, const DwellTimeClass& cls, double tol = 1e-9);

/// -d / (c - lambda); requires d < 0 and 0 < lambda < c.
double theta_star(double c, double d, double lambda);

/// ADT membership evaluated with N (half-open) and with N* (closed) on the
/// points {t0, t_i - eps, t_i, t_i + eps, horizon}; true when the verdicts agree.
bool equivalence_check_NstarN(const ImpulseSequence& seq, double mu, double lambda, double c, double d,
                              double eps = 1e-9, double tol = 1e-7);

struct PeriodicGen {
  double delta;
};
struct UniformRandomGen {
  double min_gap, max_gap;
};
struct DensestGen {
  DwellTimeClass cls;
};
using GeneratorKind = std::variant<PeriodicGen, UniformRandomGen, DensestGen>;

/// Deterministic for a given seed.  Densest-admissible places each jump at the
/// earliest time (to 1e-10) keeping the class inequality satisfied.
ImpulseSequence generate(const GeneratorKind& kind, double t0, double horizon, std::uint64_t seed = 0);

}  // namespace iss
