#include "iss/impulseseq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "iss/numeric.hpp"

namespace iss {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;
}  // namespace

ImpulseSequence::ImpulseSequence(double t0, std::vector<double> times, double horizon)
    : t0_(t0), times_(std::move(times)), horizon_(horizon) {
  if (!std::isfinite(t0_) || !std::isfinite(horizon_) || horizon_ < t0_)
    throw std::invalid_argument("impulse sequence: need finite t0 <= horizon");
  double prev = t0_;
  for (std::size_t i = 0; i < times_.size(); ++i) {
    const double t = times_[i];
    if (!std::isfinite(t)) throw std::invalid_argument("impulse sequence: non-finite time");
    if (i == 0 ? !(t > t0_) : !(t - prev >= kMinGap))
      throw std::invalid_argument("impulse sequence: times must be strictly increasing after t0 (index " +
                                  std::to_string(i) + ")");
    prev = t;
  }
  if (!times_.empty() && times_.back() > horizon_)
    throw std::invalid_argument("impulse sequence: last time exceeds the horizon");
}

std::size_t ImpulseSequence::count(double s, double t, bool closed) const {
  if (s < t0_ || t > horizon_ || s > t) throw std::out_of_range("count: need t0 <= s <= t <= horizon");
  auto lo = closed ? std::lower_bound(times_.begin(), times_.end(), s) : std::upper_bound(times_.begin(), times_.end(), s);
  auto hi = std::upper_bound(times_.begin(), times_.end(), t);
  return hi > lo ? static_cast<std::size_t>(hi - lo) : 0;
}

double ImpulseSequence::min_gap() const {
  double g = kInf;
  for (std::size_t i = 1; i < times_.size(); ++i) g = std::min(g, times_[i] - times_[i - 1]);
  return g;
}

double ImpulseSequence::max_gap() const {
  double g = 0.0;
  for (std::size_t i = 1; i < times_.size(); ++i) g = std::max(g, times_[i] - times_[i - 1]);
  return g;
}

void validate_dwell_class(const DwellTimeClass& cls) {
  std::visit(overloaded{
                 [](const FdtMinGap& c) {
                   if (!(c.theta > 0)) throw std::invalid_argument("FDT: theta must be positive");
                 },
                 [](const FdtMaxGap& c) {
                   if (!(c.theta > 0)) throw std::invalid_argument("FDT: theta must be positive");
                 },
                 [](const Adt& c) {
                   if (!(c.mu > 0)) throw std::invalid_argument("ADT: mu must be positive");
                   if (!(c.lambda > 0)) throw std::invalid_argument("ADT: lambda must be positive");
                   if (!std::isfinite(c.c) || !std::isfinite(c.d)) throw std::invalid_argument("ADT: c, d must be finite");
                 },
                 [](const Gadt& c) {
                   if (!std::isfinite(c.c) || !std::isfinite(c.d)) throw std::invalid_argument("gADT: c, d must be finite");
                   if (!majorize_by_L(c.h, default_class_grid()))
                     throw std::invalid_argument("gADT: h admits no L-majorant on the default grid");
                 },
             },
             cls);
}

std::string describe(const DwellTimeClass& cls) {
  std::ostringstream os;
  os.precision(12);
  std::visit(overloaded{
                 [&](const FdtMinGap& c) { os << "FDT_min_gap(theta=" << c.theta << ")"; },
                 [&](const FdtMaxGap& c) { os << "FDT_max_gap(theta=" << c.theta << ")"; },
                 [&](const Adt& c) {
                   os << "ADT(mu=" << c.mu << ", lambda=" << c.lambda << "; c=" << c.c << ", d=" << c.d << ")";
                 },
                 [&](const Gadt& c) { os << "gADT(h=" << c.h.description() << "; c=" << c.c << ", d=" << c.d << ")"; },
             },
             cls);
  return os.str();
}

namespace {

// Margin of the averaged inequality for k counted jumps and length L.
struct PairMargin {
  const DwellTimeClass& cls;
  double operator()(std::size_t k, double L) const {
    const double kd = static_cast<double>(k);
    if (const auto* a = std::get_if<Adt>(&cls)) return -a->d * kd - (a->c - a->lambda) * L - a->mu;
    const auto& g = std::get<Gadt>(cls);
    const double h = g.h(L);
    const double lnh = h > 0 ? std::log(h) : -kInf;
    return -g.d * kd - g.c * L - lnh;
  }
};

struct Cells {
  double t0, horizon;
  const std::vector<double>& T;
  const DwellTimeClass& cls;
  bool sample;  // gADT

  double prev(std::size_t i) const { return i == 0 ? t0 : T[i - 1]; }
  double next(std::size_t j) const { return j + 1 == T.size() ? horizon : T[j + 1]; }

  void update(Membership& m, double margin, double s, double t) const {
    ++m.pairs_checked;
    if (margin > m.worst_margin) {
      m.worst_margin = margin;
      m.s = s;
      m.t = t;
    }
  }

  // Cell of pairs (s, t) counting exactly the jumps i..j.
  void cell(std::size_t i, std::size_t j, Membership& m) const {
    PairMargin pm{cls};
    const std::size_t k = j - i + 1;
    const double lmin = T[j] - T[i];
    const double lmax = next(j) - prev(i);
    update(m, pm(k, lmin), T[i], T[j]);
    update(m, pm(k, lmax), prev(i), next(j));
    if (sample) {
      for (int q = 1; q < 32; ++q) {
        const double L = lmin + (lmax - lmin) * q / 32.0;
        const double s = std::max(prev(i), T[i] - L + lmin);
        update(m, pm(k, L), s, s + L);
      }
    }
  }

  // Zero-count pairs inside one gap of length len starting at a.
  void empty_cell(double a, double len, Membership& m) const {
    PairMargin pm{cls};
    update(m, pm(0, 0.0), a, a);
    update(m, pm(0, len), a, a + len);
    if (sample)
      for (int q = 1; q < 32; ++q) update(m, pm(0, len * q / 32.0), a, a + len * q / 32.0);
  }

  // All cells whose last counted jump is j, plus the empty gap ending at T[j].
  void ending_at(std::size_t j, Membership& m) const {
    for (std::size_t i = 0; i <= j; ++i) cell(i, j, m);
    empty_cell(prev(j), T[j] - prev(j), m);
  }
};

Membership averaged_membership(const ImpulseSequence& seq, const DwellTimeClass& cls, double tol) {
  Membership m;
  m.worst_margin = -kInf;
  Cells cells{seq.t0(), seq.horizon(), seq.times(), cls, std::holds_alternative<Gadt>(cls)};
  const auto& T = seq.times();
  for (std::size_t j = 0; j < T.size(); ++j) cells.ending_at(j, m);
  const double tail_start = T.empty() ? seq.t0() : T.back();
  cells.empty_cell(tail_start, seq.horizon() - tail_start, m);
  m.holds = m.worst_margin <= tol;
  return m;
}

}  // namespace

Membership member(const ImpulseSequence& seq, const DwellTimeClass& cls, double tol) {
  if (const auto* f = std::get_if<FdtMinGap>(&cls)) {
    Membership m;
    m.worst_margin = -kInf;
    const auto& T = seq.times();
    for (std::size_t i = 1; i < T.size(); ++i) {
      ++m.pairs_checked;
      const double margin = f->theta - (T[i] - T[i - 1]);
      if (margin > m.worst_margin) m = {true, margin, T[i - 1], T[i], m.pairs_checked};
    }
    m.holds = m.worst_margin <= tol;
    return m;
  }
  if (const auto* f = std::get_if<FdtMaxGap>(&cls)) {
    Membership m;
    m.worst_margin = -kInf;
    const auto& T = seq.times();
    for (std::size_t i = 1; i < T.size(); ++i) {
      ++m.pairs_checked;
      const double margin = (T[i] - T[i - 1]) - f->theta;
      if (margin > m.worst_margin) m = {true, margin, T[i - 1], T[i], m.pairs_checked};
    }
    m.holds = m.worst_margin <= tol;
    return m;
  }
  return averaged_membership(seq, cls, tol);
}

double theta_star(double c, double d, double lambda) {
  if (!(d < 0)) throw std::invalid_argument("theta_star: need d < 0");
  if (!(lambda > 0) || !(lambda < c)) throw std::invalid_argument("theta_star: need 0 < lambda < c");
  return -d / (c - lambda);
}

bool equivalence_check_NstarN(const ImpulseSequence& seq, double mu, double lambda, double c, double d, double eps,
                              double tol) {
  if (d == 0.0) throw std::invalid_argument("equivalence check: need d != 0");
  std::vector<double> pts{seq.t0(), seq.horizon()};
  for (double t : seq.times()) {
    pts.push_back(t);
    pts.push_back(t - eps);
    pts.push_back(t + eps);
  }
  std::erase_if(pts, [&](double p) { return p < seq.t0() || p > seq.horizon(); });
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

  double worst_n = -kInf, worst_star = -kInf;
  for (std::size_t a = 0; a < pts.size(); ++a) {
    for (std::size_t b = a; b < pts.size(); ++b) {
      const double L = pts[b] - pts[a];
      const auto n = static_cast<double>(seq.count(pts[a], pts[b], false));
      const auto ns = static_cast<double>(seq.count(pts[a], pts[b], true));
      worst_n = std::max(worst_n, -d * n - (c - lambda) * L);
      worst_star = std::max(worst_star, -d * ns - (c - lambda) * L);
    }
  }
  return (worst_n <= mu + tol) == (worst_star <= mu + tol);
}

namespace {

std::vector<double> periodic_times(double t0, double horizon, double delta) {
  if (!(delta > 0)) throw std::invalid_argument("periodic generator: delta must be positive");
  std::vector<double> out;
  for (std::size_t k = 1;; ++k) {
    double t = t0 + static_cast<double>(k) * delta;
    if (t > horizon + 1e-9 * delta) break;
    out.push_back(std::min(t, horizon));
  }
  return out;
}

std::vector<double> densest(const DwellTimeClass& cls, double t0, double horizon) {
  validate_dwell_class(cls);
  if (const auto* f = std::get_if<FdtMinGap>(&cls)) return periodic_times(t0, horizon, f->theta);
  if (std::holds_alternative<FdtMaxGap>(cls))
    throw std::invalid_argument("densest generator: FDT_max_gap places no lower bound on gaps");
  const double d = std::holds_alternative<Adt>(cls) ? std::get<Adt>(cls).d : std::get<Gadt>(cls).d;
  if (!(d < 0)) throw std::invalid_argument("densest generator: with d >= 0 the admissible density is unbounded");

  std::vector<double> T;
  auto feasible = [&](double tau) {
    T.push_back(tau);
    Membership m;
    m.worst_margin = -kInf;
    Cells cells{t0, tau, T, cls, std::holds_alternative<Gadt>(cls)};
    cells.ending_at(T.size() - 1, m);
    if (T.size() >= 2) {
      for (std::size_t i = 0; i + 1 < T.size(); ++i) cells.cell(i, T.size() - 2, m);
    }
    T.pop_back();
    return m.worst_margin <= 0.0;
  };

  constexpr double kResolution = 1e-10;
  while (true) {
    const double last = T.empty() ? t0 : T.back();
    const double lo0 = last + ImpulseSequence::kMinGap;
    if (lo0 > horizon) break;
    if (feasible(lo0)) {
      T.push_back(lo0);
      continue;
    }
    double lo = lo0, hi = -1.0;
    for (double step = 1e-3 * std::max(1.0, horizon - t0);; step *= 2.0) {
      const double cand = std::min(last + step, horizon);
      if (feasible(cand)) {
        hi = cand;
        break;
      }
      lo = cand;
      if (cand >= horizon) break;
    }
    if (hi < 0) break;
    while (hi - lo > kResolution) {
      const double mid = 0.5 * (lo + hi);
      if (feasible(mid)) hi = mid;
      else lo = mid;
    }
    T.push_back(hi);
    if (T.size() > 10'000'000) throw std::runtime_error("densest generator: too many jumps");
  }
  return T;
}

}  // namespace

ImpulseSequence generate(const GeneratorKind& kind, double t0, double horizon, std::uint64_t seed) {
  if (!(horizon >= t0)) throw std::invalid_argument("generate: need horizon >= t0");
  return std::visit(
      overloaded{
          [&](const PeriodicGen& p) { return ImpulseSequence(t0, periodic_times(t0, horizon, p.delta), horizon); },
          [&](const UniformRandomGen& g) {
            if (!(g.min_gap > 0) || !(g.max_gap >= g.min_gap))
              throw std::invalid_argument("random generator: need 0 < min_gap <= max_gap");
            Rng rng(seed);
            std::vector<double> T;
            double t = t0;
            while (true) {
              t += rng.uniform(g.min_gap, g.max_gap);
              if (t > horizon) break;
              T.push_back(t);
            }
            return ImpulseSequence(t0, std::move(T), horizon);
          },
          [&](const DensestGen& g) { return ImpulseSequence(t0, densest(g.cls, t0, horizon), horizon); },
      },
      kind);
}

}  // namespace iss
