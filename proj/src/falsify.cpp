#include "iss/falsify.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "iss/numeric.hpp"

namespace iss {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vec random_vector(Rng& rng, std::size_t n, double norm) {
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
  for (auto& c : v) c *= norm / s;
  return v;
}

struct Sample {
  double tau, norm, w;
};

struct TrialData {
  TrialSummary summary;
  std::vector<Sample> samples;
  Vec x0;
  ImpulseSequence seq;
  InputSignal input;
};

bool is_zero_input(const TrialData& t) { return t.summary.input_norm == 0.0; }

InputSignal random_input(Rng& rng, std::size_t m, double t0, double horizon, double radius) {
  std::vector<double> starts;
  std::vector<Vec> values;
  double t = t0;
  while (t < horizon) {
    starts.push_back(t);
    values.push_back(rng.uniform() < 0.15 ? Vec(m, 0.0) : random_vector(rng, m, rng.log_uniform(1e-3 * radius, radius)));
    t += rng.uniform(0.5, 3.0);
  }
  return InputSignal(std::move(starts), std::move(values));
}

TrialData run_trial(const SystemDef& sys, const DwellTimeClass& cls, const SweepOptions& opts, std::size_t k) {
  TrialData td;
  Rng rng = Rng(opts.seed).split(k);
  const std::uint64_t seed = rng.next();
  td.summary.seed = seed;
  td.seq = class_member(cls, opts.t0, opts.t0 + opts.horizon, k, seed, &td.summary.sequence);

  if (opts.fixed_x0) {
    td.x0 = *opts.fixed_x0;
  } else if (k == 1) {
    td.x0 = Vec(sys.n(), 0.0);
  } else {
    td.x0 = random_vector(rng, sys.n(), rng.log_uniform(1e-3 * opts.state_radius, opts.state_radius));
  }
  if (opts.fixed_input) {
    td.input = *opts.fixed_input;
  } else if (k % 2 == 0 || opts.input_radius <= 0 || sys.m() == 0) {
    td.input = InputSignal::zero(sys.m());
  } else {
    td.input = random_input(rng, sys.m(), opts.t0, opts.t0 + opts.horizon, opts.input_radius);
  }

  SimOptions so;
  so.blowup = opts.blowup;
  so.samples_per_segment = opts.samples_per_segment;
  const auto traj = simulate(sys, td.seq, td.input, td.x0, opts.t0, opts.t0 + opts.horizon, so);

  td.summary.x0_norm = norm2(td.x0);
  td.summary.input_norm = td.input.sup_norm();
  td.summary.impulses = td.seq.size();
  td.summary.diverged = traj.diverged();
  td.summary.diverged_at = traj.diverged() ? traj.diverged_at() : 0.0;

  // sup of |u| over [t0, t], piecewise constant
  const auto& starts = td.input.starts();
  std::vector<double> running;
  double acc = 0.0;
  for (std::size_t p = 0; p < starts.size(); ++p) {
    acc = std::max(acc, norm2(td.input.values()[p]));
    running.push_back(acc);
  }
  auto w_at = [&](double t) {
    if (starts.empty()) return 0.0;
    auto it = std::upper_bound(starts.begin(), starts.end(), t);
    const std::size_t idx = it == starts.begin() ? 0 : static_cast<std::size_t>(it - starts.begin()) - 1;
    return running[idx];
  };
  const std::size_t n = sys.n();
  for (const auto& seg : traj.segments()) {
    for (std::size_t s = 0; s < seg.t.size(); ++s) {
      const double nv = norm2(std::span<const double>(seg.x.data() + s * n, n));
      td.samples.push_back({seg.t[s] - opts.t0, nv, w_at(seg.t[s])});
      td.summary.peak = std::max(td.summary.peak, nv);
    }
  }
  for (const auto& j : traj.jumps()) {
    const double nv = norm2(j.post);
    td.samples.push_back({j.t - opts.t0, nv, w_at(j.t)});
    td.summary.peak = std::max(td.summary.peak, nv);
  }
  return td;
}

std::vector<TrialData> run_trials(const SystemDef& sys, const DwellTimeClass& cls, const SweepOptions& opts) {
  if (opts.trials < 100) throw std::invalid_argument("sweep: at least 100 trials required");
  if (!(opts.horizon > 0)) throw std::invalid_argument("sweep: horizon must be positive");
  validate_dwell_class(cls);
  std::vector<TrialData> out(opts.trials);
  parallel_for(opts.trials, [&](std::size_t k) { out[k] = run_trial(sys, cls, opts, k); });
  return out;
}

StepEnvelope step_envelope(std::vector<std::pair<double, double>> pts) {
  std::sort(pts.begin(), pts.end());
  StepEnvelope env;
  double acc = 0.0;
  for (const auto& [w, v] : pts) {
    acc = std::max(acc, v);
    if (!env.knots.empty() && env.knots.back() == w) {
      env.values.back() = acc;
    } else {
      env.knots.push_back(w);
      env.values.push_back(acc);
    }
  }
  return env;
}

std::optional<DivergenceWitness> first_witness(const std::vector<TrialData>& trials) {
  for (std::size_t k = 0; k < trials.size(); ++k) {
    const auto& t = trials[k];
    if (t.summary.diverged)
      return DivergenceWitness{k, t.summary.seed, t.x0, t.seq.times(), t.input, t.summary.diverged_at};
  }
  return std::nullopt;
}

}  // namespace

double StepEnvelope::operator()(double w) const {
  auto it = std::upper_bound(knots.begin(), knots.end(), w);
  if (it == knots.begin()) return 0.0;
  return values[static_cast<std::size_t>(it - knots.begin()) - 1];
}

double KLTable::operator()(double r, double t) const {
  if (r <= 0.0 || r_edges.empty()) return 0.0;
  auto it = std::lower_bound(r_edges.begin(), r_edges.end(), r);
  double scale = 1.0;
  std::size_t i;
  if (it == r_edges.end()) {
    i = r_edges.size() - 1;
    scale = r / r_edges.back();
  } else {
    i = static_cast<std::size_t>(it - r_edges.begin());
  }
  auto jt = std::upper_bound(t_edges.begin(), t_edges.end(), t);
  const std::size_t j = jt == t_edges.begin() ? 0 : static_cast<std::size_t>(jt - t_edges.begin()) - 1;
  return scale * values[i][j];
}

double EnvelopeFit::beta(double r, double t) const {
  return exponential ? M * r * std::exp(-lambda * t) : beta_table(r, t);
}

ImpulseSequence class_member(const DwellTimeClass& cls, double t0, double horizon, std::size_t k, std::uint64_t seed,
                             std::string* description) {
  Rng rng(seed);
  auto label = [&](std::string s) {
    if (description) *description = std::move(s);
  };
  auto uniform = [&](double lo, double hi) {
    label("uniform[" + format_double(lo) + "," + format_double(hi) + "]");
    return generate(UniformRandomGen{lo, hi}, t0, horizon, seed);
  };
  auto densest = [&] {
    label("densest");
    return generate(DensestGen{cls}, t0, horizon, seed);
  };
  return std::visit(
      [&](const auto& c) -> ImpulseSequence {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, FdtMinGap>) {
          if (k % 3 == 0) return densest();
          if (k % 3 == 1) {
            const double g = c.theta * rng.uniform(1.0, 2.0);
            label("periodic:" + format_double(g));
            return generate(PeriodicGen{g}, t0, horizon, seed);
          }
          return uniform(c.theta, 3 * c.theta);
        } else if constexpr (std::is_same_v<T, FdtMaxGap>) {
          if (k % 3 == 0) {
            label("periodic:" + format_double(c.theta));
            return generate(PeriodicGen{c.theta}, t0, horizon, seed);
          }
          return k % 3 == 1 ? uniform(0.25 * c.theta, c.theta) : uniform(0.5 * c.theta, c.theta);
        } else {
          double rate_c = c.c;
          if constexpr (std::is_same_v<T, Adt>) rate_c = c.c - c.lambda;
          if (c.d < 0) {
            if (k % 3 == 0) return densest();
            const double g = rate_c > 0 ? -c.d / rate_c : 1.0;
            auto seq = uniform(g, 3 * g);
            if (member(seq, cls).holds) return seq;
            return densest();
          }
          double g = rate_c < 0 ? std::min(10.0, c.d / -rate_c) : 10.0;
          if (!(g > 0)) g = 1.0;
          auto seq = uniform(0.25 * g, g);
          if (member(seq, cls).holds) return seq;
          for (int it = 0; it < 40; ++it, g *= 0.5) {
            label("periodic:" + format_double(g));
            seq = generate(PeriodicGen{g}, t0, horizon, seed);
            if (member(seq, cls).holds) return seq;
          }
          throw std::runtime_error("no member of " + describe(cls) + " found for the sweep");
        }
      },
      cls);
}

EnvelopeFit iss_sweep(const SystemDef& sys, const DwellTimeClass& cls, const SweepOptions& opts,
                      const std::optional<CandidateEnvelope>& candidate) {
  const auto trials = run_trials(sys, cls, opts);
  EnvelopeFit fit;
  for (const auto& t : trials) {
    fit.trials.push_back(t.summary);
    if (t.summary.diverged) ++fit.diverged;
  }
  fit.diverged_fraction = static_cast<double>(fit.diverged) / static_cast<double>(trials.size());
  fit.not_iss = fit.diverged_fraction > 0.01;
  fit.witness = first_witness(trials);

  std::vector<const TrialData*> used, zero;
  for (const auto& t : trials) {
    if (t.summary.diverged) continue;
    used.push_back(&t);
    if (is_zero_input(t)) zero.push_back(&t);
  }
  if (zero.empty()) zero = used;

  // beta: exponential template M r exp(-lambda t), lambda minimizing M/lambda.
  auto M_of = [&](double lam, const TrialData& t) {
    double M = 0.0;
    if (t.summary.x0_norm == 0.0) {
      for (const auto& s : t.samples)
        if (s.norm > 0) return kInf;
      return 0.0;
    }
    for (const auto& s : t.samples) M = std::max(M, s.norm * std::exp(lam * s.tau) / t.summary.x0_norm);
    return M;
  };
  double best_obj = kInf;
  for (double lam : log_grid(1e-3, 10.0, 81)) {
    double M = 0.0;
    for (const auto* t : zero) M = std::max(M, M_of(lam, *t));
    if (M <= opts.beta_cap && M / lam < best_obj) {
      best_obj = M / lam;
      fit.M = M;
      fit.lambda = lam;
    }
  }
  fit.exponential = std::isfinite(best_obj);
  if (fit.exponential) {
    fit.M *= 1.0 + 1e-12;
    for (const auto* t : zero)
      if (t->summary.x0_norm > 0) fit.per_sequence_M.push_back(M_of(fit.lambda, *t));
  } else {
    auto& T = fit.beta_table;
    double rmin = kInf, rmax = 0.0;
    for (const auto* t : zero)
      if (t->summary.x0_norm > 0) {
        rmin = std::min(rmin, t->summary.x0_norm);
        rmax = std::max(rmax, t->summary.x0_norm);
      }
    if (rmax > 0) {
      T.r_edges = rmin < rmax ? log_grid(rmin, rmax, 16) : std::vector<double>{rmax};
      T.t_edges = linear_grid(0.0, opts.horizon, 48);
      T.t_edges.pop_back();
      T.values.assign(T.r_edges.size(), std::vector<double>(T.t_edges.size(), 0.0));
      for (const auto* t : zero) {
        if (t->summary.x0_norm == 0) continue;
        auto it = std::lower_bound(T.r_edges.begin(), T.r_edges.end(), t->summary.x0_norm);
        const auto i = std::min<std::size_t>(static_cast<std::size_t>(it - T.r_edges.begin()), T.r_edges.size() - 1);
        for (const auto& s : t->samples) {
          auto jt = std::upper_bound(T.t_edges.begin(), T.t_edges.end(), s.tau);
          const std::size_t j = jt == T.t_edges.begin() ? 0 : static_cast<std::size_t>(jt - T.t_edges.begin()) - 1;
          T.values[i][j] = std::max(T.values[i][j], s.norm);
        }
      }
      for (std::size_t i = 0; i < T.values.size(); ++i) {
        if (i > 0)
          for (std::size_t j = 0; j < T.t_edges.size(); ++j) T.values[i][j] = std::max(T.values[i][j], T.values[i - 1][j]);
        for (std::size_t j = T.t_edges.size() - 1; j-- > 0;) T.values[i][j] = std::max(T.values[i][j], T.values[i][j + 1]);
      }
    }
  }

  // gamma: monotone step envelope of the residual over the causal input norm.
  std::vector<std::pair<double, double>> residuals;
  for (const auto* t : used)
    for (const auto& s : t->samples) {
      const double res = s.norm - fit.beta(t->summary.x0_norm, s.tau);
      if (res > 0) residuals.emplace_back(s.w, res * (1.0 + 1e-12));
    }
  fit.gamma = step_envelope(std::move(residuals));

  for (const auto* t : used)
    for (const auto& s : t->samples) {
      ++fit.samples;
      if (s.norm > fit.beta(t->summary.x0_norm, s.tau) + fit.gamma(s.w) + 1e-12 * s.norm) fit.dominates = false;
    }

  if (candidate) {
    for (std::size_t k = 0; k < trials.size(); ++k)
      for (const auto& s : trials[k].samples) {
        const double bound = eval(candidate->beta.body, {{candidate->beta.rvar, trials[k].summary.x0_norm},
                                                         {candidate->beta.tvar, s.tau}}) +
                             candidate->gamma(s.w);
        if (s.norm > bound * (1.0 + 1e-9) + 1e-12 && fit.candidate_violations.size() < 1000)
          fit.candidate_violations.push_back({k, s.tau + opts.t0, s.norm, bound});
      }
  }
  return fit;
}

GsResult gs_check(const SystemDef& sys, const DwellTimeClass& cls, const SweepOptions& opts) {
  const auto trials = run_trials(sys, cls, opts);
  GsResult res;
  for (const auto& t : trials) {
    res.trials.push_back(t.summary);
    if (t.summary.diverged) ++res.diverged;
  }
  res.diverged_fraction = static_cast<double>(res.diverged) / static_cast<double>(trials.size());
  res.witness = first_witness(trials);

  std::vector<const TrialData*> used, zero;
  for (const auto& t : trials) {
    if (t.summary.diverged) continue;
    used.push_back(&t);
    if (is_zero_input(t)) zero.push_back(&t);
  }
  if (zero.empty()) zero = used;
  std::vector<std::pair<double, double>> peaks;
  for (const auto* t : zero) peaks.emplace_back(t->summary.x0_norm, t->summary.peak * (1.0 + 1e-12));
  res.xi = step_envelope(std::move(peaks));

  std::vector<std::pair<double, double>> residuals;
  for (const auto* t : used)
    for (const auto& s : t->samples) {
      const double r = s.norm - res.xi(t->summary.x0_norm);
      if (r > 0) residuals.emplace_back(s.w, r * (1.0 + 1e-12));
    }
  res.gamma = step_envelope(std::move(residuals));
  for (const auto* t : used)
    for (const auto& s : t->samples)
      if (s.norm > res.xi(t->summary.x0_norm) + res.gamma(s.w) + 1e-12 * s.norm) res.dominates = false;
  res.holds = res.diverged_fraction <= 0.01 && res.dominates;
  return res;
}

TightnessReport gadt_tightness_demo(double c, double d, double horizon, std::vector<double> gaps) {
  if (!(d < 0 && c > 0)) throw std::invalid_argument("tightness demo: need d < 0 < c");
  if (!(horizon > 0)) throw std::invalid_argument("tightness demo: horizon must be positive");
  TightnessReport rep;
  rep.c = c;
  rep.d = d;
  rep.horizon = horizon;
  rep.critical_gap = -d / c;
  const SystemDef sys("tightness", {"x"}, {}, {Expr::binary(BinaryOp::Mul, Expr::number(-c), Expr::variable("x"))},
                      {Expr::binary(BinaryOp::Mul, Expr::number(std::exp(-d)), Expr::variable("x"))});
  SimOptions so;
  so.blowup = 1e12;
  // the state spans many decades; control the relative error only
  so.atol = 1e-300;
  so.rtol = 1e-10;
  const InputSignal u0 = InputSignal::zero(0);

  rep.lambda = 0.5 * c;
  rep.mu = -d;
  const double lam = rep.lambda, mu = rep.mu;
  const Gadt cls{ScalarFn::from_callable([mu, lam](double x) { return std::exp(mu - lam * x); },
                                         "exp(" + format_double(mu) + "-" + format_double(lam) + "*x)", FnClass::L),
                 c, d};
  const auto seq = generate(DensestGen{cls}, 0.0, horizon);
  rep.gadt_impulses = seq.size();
  rep.gadt_member = member(seq, cls).holds;
  const auto traj = simulate(sys, seq, u0, {1.0}, 0.0, horizon, so);
  for (const auto& seg : traj.segments())
    for (std::size_t s = 0; s < seg.t.size(); ++s)
      rep.gadt_max_ratio = std::max(rep.gadt_max_ratio, std::fabs(seg.x[s]) / cls.h(seg.t[s]));
  rep.gadt_bounded = !traj.diverged() && rep.gadt_max_ratio <= 1.0 + 1e-6;

  if (gaps.empty()) gaps = {1.2 * rep.critical_gap, 0.8 * rep.critical_gap, rep.critical_gap};
  for (double g : gaps) {
    if (!(g > 0)) throw std::invalid_argument("tightness demo: gaps must be positive");
    GapRun run;
    run.gap = g;
    run.factor = std::exp(-d - c * g);
    const auto ps = generate(PeriodicGen{g}, 0.0, horizon);
    const auto tr = simulate(sys, ps, u0, {1.0}, 0.0, horizon, so);
    for (const auto& j : tr.jumps()) run.peaks.push_back(std::fabs(j.post[0]));
    for (const auto& seg : tr.segments())
      for (std::size_t s = 0; s < seg.t.size(); ++s) {
        const double t = seg.t[s];
        const double v = std::fabs(seg.x[s]);
        if (!run.exceeded_at && v > 1e3) run.exceeded_at = t;
        const double N = static_cast<double>(ps.count(0.0, seg.a));
        const double exact = std::exp(-d * N - c * t);
        run.max_closed_form_error = std::max(run.max_closed_form_error, std::fabs(seg.x[s] - exact) / exact);
      }
    if (!run.peaks.empty()) {
      const auto [lo, hi] = std::minmax_element(run.peaks.begin(), run.peaks.end());
      run.peak_spread = *hi - *lo;
    }
    bool dec = run.peaks.size() >= 2, inc = run.peaks.size() >= 2;
    for (std::size_t k = 1; k < run.peaks.size(); ++k) {
      if (!(run.peaks[k] < run.peaks[k - 1])) dec = false;
      if (!(run.peaks[k] > run.peaks[k - 1])) inc = false;
    }
    run.trend = run.peak_spread <= 1e-6 * std::max(1.0, run.peaks.empty() ? 1.0 : run.peaks.front())
                    ? "constant"
                    : dec ? "decreasing" : inc ? "growing" : "mixed";
    rep.runs.push_back(std::move(run));
  }
  return rep;
}

}  // namespace iss
