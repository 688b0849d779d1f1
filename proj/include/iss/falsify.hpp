#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "iss/cmpfun.hpp"
#include "iss/hybridsim.hpp"
#include "iss/impulseseq.hpp"

namespace iss {

struct SweepOptions {
  std::size_t trials = 500;
  std::uint64_t seed = 1;
  double t0 = 0.0;
  double horizon = 50.0;
  double state_radius = 5.0;   // |x0| log-uniform on [1e-3, state_radius], plus x0 = 0 trials
  double input_radius = 1.0;   // 0: every input is zero
  double blowup = 1e6;
  double beta_cap = 1e3;       // exponential template accepted only with M <= beta_cap
  int samples_per_segment = 20;
  /// Optional pinned trial: x0 and input used by every trial when set.
  std::optional<Vec> fixed_x0;
  std::optional<InputSignal> fixed_input;
};

/// Monotone step function: value at the largest knot <= w (0 below the first).
struct StepEnvelope {
  std::vector<double> knots, values;
  double operator()(double w) const;
};

/// beta(r, t) as a table over (r, t) bins; nondecreasing in r, nonincreasing in t.
struct KLTable {
  std::vector<double> r_edges;  // upper bin edges, ascending
  std::vector<double> t_edges;  // lower bin edges, ascending, t_edges[0] == 0
  std::vector<std::vector<double>> values;
  double operator()(double r, double t) const;
};

struct TrialSummary {
  std::uint64_t seed = 0;
  double x0_norm = 0.0;
  double input_norm = 0.0;
  std::size_t impulses = 0;
  double peak = 0.0;
  bool diverged = false;
  double diverged_at = 0.0;
  std::string sequence;  // generator description
};

struct EnvelopeViolation {
  std::size_t trial;
  double t, norm, bound;
};

struct DivergenceWitness {
  std::size_t trial;
  std::uint64_t seed;
  Vec x0;
  std::vector<double> impulse_times;
  InputSignal input;
  double diverged_at;
};

struct EnvelopeFit {
  bool exponential = true;  // false: beta is the KL table
  double M = 0.0, lambda = 0.0;
  KLTable beta_table;
  StepEnvelope gamma;
  /// Per-trial M for the pooled lambda (zero-input trials with x0 != 0).
  std::vector<double> per_sequence_M;
  std::vector<TrialSummary> trials;
  std::size_t diverged = 0;
  double diverged_fraction = 0.0;
  bool not_iss = false;
  std::optional<DivergenceWitness> witness;
  bool dominates = true;  // re-scan of every recorded sample
  std::vector<EnvelopeViolation> candidate_violations;
  std::size_t samples = 0;
  double beta(double r, double t) const;
};

struct CandidateEnvelope {
  KLCandidate beta;
  ScalarFn gamma;
};

/// Monte Carlo trajectories over sequences drawn from `cls` (densest
/// admissible, periodic and random members), joint envelope fit
/// |x(t)| <= beta(|x0|, t - t0) + gamma(sup_{[t0,t]} |u|).
EnvelopeFit iss_sweep(const SystemDef& sys, const DwellTimeClass& cls, const SweepOptions& opts,
                      const std::optional<CandidateEnvelope>& candidate = std::nullopt);

struct GsResult {
  bool holds = true;
  StepEnvelope xi, gamma;
  std::vector<TrialSummary> trials;
  std::size_t diverged = 0;
  double diverged_fraction = 0.0;
  std::optional<DivergenceWitness> witness;
  bool dominates = true;
};

/// Time-independent bound |x(t)| <= xi(|x0|) + gamma(sup |u|).
GsResult gs_check(const SystemDef& sys, const DwellTimeClass& cls, const SweepOptions& opts);

/// Sequence members used by the sweeps for trial k.
ImpulseSequence class_member(const DwellTimeClass& cls, double t0, double horizon, std::size_t k, std::uint64_t seed,
                             std::string* description = nullptr);

struct GapRun {
  double gap = 0.0;
  double factor = 0.0;               // exp(-d - c gap), per-period factor
  std::vector<double> peaks;         // post-jump |x| per period
  std::string trend;                 // "decreasing", "constant", "growing"
  double peak_spread = 0.0;          // max - min of peaks
  std::optional<double> exceeded_at; // first sample with |x| > 1e3
  double max_closed_form_error = 0.0;
};

struct TightnessReport {
  double c = 0.0, d = 0.0, horizon = 0.0;
  double critical_gap = 0.0;  // -d / c
  // gADT part: h(x) = exp(mu - lambda x)
  double lambda = 0.0, mu = 0.0;
  std::size_t gadt_impulses = 0;
  bool gadt_member = false;
  double gadt_max_ratio = 0.0;  // max |x(t)| / h(t - t0) over samples
  bool gadt_bounded = false;
  std::vector<GapRun> runs;
};

/// x' = -c x, x = exp(-d) x^- with d < 0 < c.  Default gaps are 1.2, 0.8 and
/// 1.0 times -d/c.
TightnessReport gadt_tightness_demo(double c, double d, double horizon, std::vector<double> gaps = {});

}  // namespace iss
