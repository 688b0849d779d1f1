#include "iss/hybridsim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "iss/numeric.hpp"

namespace iss {

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double norm_inf(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s = std::max(s, std::fabs(x));
  return s;
}

SystemDef::SystemDef(std::string name, std::vector<std::string> states, std::vector<std::string> inputs,
                     std::vector<Expr> f, std::vector<Expr> g)
    : name_(std::move(name)), states_(std::move(states)), inputs_(std::move(inputs)), f_(std::move(f)), g_(std::move(g)) {
  if (states_.empty()) throw std::invalid_argument("system '" + name_ + "': no states declared");
  if (f_.size() != states_.size() || g_.size() != states_.size())
    throw std::invalid_argument("system '" + name_ + "': f and g need one expression per state");
  std::vector<std::string> slots = states_;
  slots.insert(slots.end(), inputs_.begin(), inputs_.end());
  if (std::set<std::string>(slots.begin(), slots.end()).size() != slots.size())
    throw std::invalid_argument("system '" + name_ + "': duplicate state/input names");
  auto compile = [&](const std::vector<Expr>& exprs, const char* which) {
    std::vector<CompiledExpr> out;
    for (std::size_t i = 0; i < exprs.size(); ++i) {
      try {
        out.emplace_back(exprs[i], slots);
      } catch (const EvalError& e) {
        throw std::invalid_argument("system '" + name_ + "': " + which + "[" + std::to_string(i) + "]: " + e.what());
      }
    }
    return out;
  };
  fc_ = compile(f_, "f");
  gc_ = compile(g_, "g");

  const Vec zx(n(), 0.0), zu(m(), 0.0);
  const Vec f0 = flow(zx, zu), g0 = jump(zx, zu);
  for (std::size_t i = 0; i < n(); ++i) {
    if (std::fabs(f0[i]) > 1e-12)
      throw std::invalid_argument("system '" + name_ + "': f(0,0) != 0 in component " + std::to_string(i));
    if (std::fabs(g0[i]) > 1e-12)
      throw std::invalid_argument("system '" + name_ + "': g(0,0) != 0 in component " + std::to_string(i));
  }
}

void SystemDef::eval_all(const std::vector<CompiledExpr>& code, std::span<const double> x, std::span<const double> u,
                         std::span<double> out) const {
  const std::size_t nn = n(), mm = m();
  std::array<double, 64> small;
  std::vector<double> big;
  double* buf = small.data();
  if (nn + mm > small.size()) {
    big.resize(nn + mm);
    buf = big.data();
  }
  std::copy_n(x.data(), nn, buf);
  for (std::size_t j = 0; j < mm; ++j) buf[nn + j] = j < u.size() ? u[j] : 0.0;
  const std::span<const double> vals(buf, nn + mm);
  for (std::size_t i = 0; i < nn; ++i) out[i] = code[i](vals);
}

void SystemDef::flow(std::span<const double> x, std::span<const double> u, std::span<double> out) const {
  eval_all(fc_, x, u, out);
}
void SystemDef::jump(std::span<const double> x, std::span<const double> u, std::span<double> out) const {
  eval_all(gc_, x, u, out);
}
Vec SystemDef::flow(const Vec& x, const Vec& u) const {
  Vec out(n());
  flow(std::span<const double>(x), std::span<const double>(u), std::span<double>(out));
  return out;
}
Vec SystemDef::jump(const Vec& x, const Vec& u) const {
  Vec out(n());
  jump(std::span<const double>(x), std::span<const double>(u), std::span<double>(out));
  return out;
}

InputSignal::InputSignal(std::vector<double> starts, std::vector<Vec> values)
    : starts_(std::move(starts)), values_(std::move(values)) {
  if (starts_.empty() || starts_.size() != values_.size())
    throw std::invalid_argument("input signal: need matching, non-empty breakpoints and values");
  for (std::size_t i = 1; i < starts_.size(); ++i)
    if (!(starts_[i] > starts_[i - 1])) throw std::invalid_argument("input signal: breakpoints must increase");
  for (const auto& v : values_) {
    if (v.size() != values_.front().size()) throw std::invalid_argument("input signal: inconsistent dimensions");
    for (double c : v)
      if (!std::isfinite(c)) throw std::invalid_argument("input signal: non-finite value");
    sup_norm_ = std::max(sup_norm_, norm2(v));
  }
}

InputSignal InputSignal::constant(Vec value) { return InputSignal({-std::numeric_limits<double>::infinity()}, {std::move(value)}); }

const Vec& InputSignal::value(double t) const {
  auto it = std::upper_bound(starts_.begin(), starts_.end(), t);
  const std::size_t k = it == starts_.begin() ? 0 : static_cast<std::size_t>(it - starts_.begin()) - 1;
  return values_[k];
}

const Vec& InputSignal::left_value(double t) const {
  auto it = std::lower_bound(starts_.begin(), starts_.end(), t);
  const std::size_t k = it == starts_.begin() ? 0 : static_cast<std::size_t>(it - starts_.begin()) - 1;
  return values_[k];
}

InputSignal InputSignal::shifted(double s) const {
  auto st = starts_;
  for (auto& v : st) v += s;
  return InputSignal(std::move(st), values_);
}

namespace {

constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784, a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200, e6 = 22.0 / 525,
                 e7 = -1.0 / 40;
constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                 d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                 d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;

struct Diverged {
  double t;
};

class Dopri {
 public:
  Dopri(const SystemDef& sys, const SimOptions& o, SolverStats& st) : sys_(sys), o_(o), st_(st), n_(sys.n()) {
    for (auto& k : k_) k.resize(n_);
    y1_.resize(n_);
    yt_.resize(n_);
  }

  void rhs(const Vec& x, const Vec& u, Vec& out) {
    ++st_.rhs_evals;
    sys_.flow(std::span<const double>(x), std::span<const double>(u), std::span<double>(out));
  }

  double initial_step(const Vec& x, const Vec& u, double span) {
    Vec f(n_);
    rhs(x, u, f);
    double d0 = 0, df = 0;
    for (std::size_t i = 0; i < n_; ++i) {
      const double sc = o_.atol + o_.rtol * std::fabs(x[i]);
      d0 += (x[i] / sc) * (x[i] / sc);
      df += (f[i] / sc) * (f[i] / sc);
    }
    d0 = std::sqrt(d0 / n_);
    df = std::sqrt(df / n_);
    double h = (d0 < 1e-5 || df < 1e-5) ? 1e-6 : 0.01 * d0 / df;
    return std::min(h, span);
  }

  // Integrates x from a to b under constant u, emitting dense samples at the
  // requested times (ascending, first == a, last == b).  Throws Diverged.
  void run(const Vec& u, double a, double b, Vec& x, double& h, const std::vector<double>& sample_t, Segment& seg) {
    seg.a = a;
    seg.b = b;
    std::size_t next = 0;
    rhs(x, u, k_[0]);
    auto emit = [&](double t, const Vec& xs, const Vec& dxs) {
      seg.t.push_back(t);
      seg.x.insert(seg.x.end(), xs.begin(), xs.end());
      seg.dx.insert(seg.dx.end(), dxs.begin(), dxs.end());
    };
    if (!sample_t.empty() && sample_t.front() <= a) {
      emit(a, x, k_[0]);
      next = 1;
    }
    double t = a;
    if (!(h > 0)) h = initial_step(x, u, b - a);
    std::size_t steps = 0;
    while (t < b) {
      if (++steps > o_.max_steps) throw std::runtime_error("simulate: step limit exceeded");
      double hs = h;
      if (o_.max_step > 0) hs = std::min(hs, o_.max_step);
      bool last = false;
      if (t + hs >= b || b - (t + hs) < 1e-12 * std::max(1.0, std::fabs(b))) {
        hs = b - t;
        last = true;
      }
      const double err = attempt(x, u, hs);
      if (err <= 1.0) {
        ++st_.accepted;
        const double tn = last ? b : t + hs;
        while (next < sample_t.size() && (sample_t[next] <= tn || last)) {
          const double ts = sample_t[next];
          if (ts >= tn) {
            emit(tn, y1_, k_[6]);
          } else {
            Vec xs = dense(x, hs, (ts - t) / hs);
            Vec dxs(n_);
            rhs(xs, u, dxs);
            emit(ts, xs, dxs);
          }
          ++next;
        }
        t = tn;
        x = y1_;
        std::swap(k_[0], k_[6]);
        if (!std::isfinite(norm2(x)) || norm2(x) > o_.blowup) {
          seg.b = t;
          if (seg.t.empty() || seg.t.back() < t) emit(t, x, k_[0]);
          throw Diverged{t};
        }
        const double fac = err == 0.0 ? 10.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 10.0);
        if (!last || fac < 1.0) h = hs * fac;
      } else {
        ++st_.rejected;
        const double fac = std::isfinite(err) ? std::max(0.2, 0.9 * std::pow(err, -0.2)) : 0.2;
        h = hs * fac;
        if (h < 1e-14 * std::max(1.0, std::fabs(t)))
          throw std::runtime_error("simulate: step size underflow at t=" + format_double(t));
      }
    }
  }

 private:
  // One trial step from x with stage k_[0] = f(x); returns the scaled error.
  double attempt(const Vec& x, const Vec& u, double h) {
    auto stage = [&](Vec& out, std::initializer_list<std::pair<int, double>> terms) {
      for (std::size_t i = 0; i < n_; ++i) {
        double acc = 0.0;
        for (auto [k, a] : terms) acc += a * k_[k][i];
        out[i] = x[i] + h * acc;
      }
    };
    stage(yt_, {{0, a21}});
    rhs(yt_, u, k_[1]);
    stage(yt_, {{0, a31}, {1, a32}});
    rhs(yt_, u, k_[2]);
    stage(yt_, {{0, a41}, {1, a42}, {2, a43}});
    rhs(yt_, u, k_[3]);
    stage(yt_, {{0, a51}, {1, a52}, {2, a53}, {3, a54}});
    rhs(yt_, u, k_[4]);
    stage(yt_, {{0, a61}, {1, a62}, {2, a63}, {3, a64}, {4, a65}});
    rhs(yt_, u, k_[5]);
    stage(y1_, {{0, a71}, {2, a73}, {3, a74}, {4, a75}, {5, a76}});
    rhs(y1_, u, k_[6]);
    double acc = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      const double e = h * (e1 * k_[0][i] + e3 * k_[2][i] + e4 * k_[3][i] + e5 * k_[4][i] + e6 * k_[5][i] +
                            e7 * k_[6][i]);
      const double sc = o_.atol + o_.rtol * std::max(std::fabs(x[i]), std::fabs(y1_[i]));
      acc += (e / sc) * (e / sc);
    }
    const double err = std::sqrt(acc / static_cast<double>(n_));
    return std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
  }

  Vec dense(const Vec& x, double h, double th) const {
    Vec out(n_);
    const double th1 = 1.0 - th;
    for (std::size_t i = 0; i < n_; ++i) {
      const double ydiff = y1_[i] - x[i];
      const double bspl = h * k_[0][i] - ydiff;
      const double r4 = ydiff - h * k_[6][i] - bspl;
      const double r5 = h * (d1 * k_[0][i] + d3 * k_[2][i] + d4 * k_[3][i] + d5 * k_[4][i] + d6 * k_[5][i] +
                             d7 * k_[6][i]);
      out[i] = x[i] + th * (ydiff + th1 * (bspl + th * (r4 + th1 * r5)));
    }
    return out;
  }

  const SystemDef& sys_;
  const SimOptions& o_;
  SolverStats& st_;
  std::size_t n_;
  std::array<Vec, 7> k_;
  Vec y1_, yt_;
};

}  // namespace

HybridTrajectory simulate(const SystemDef& sys, const ImpulseSequence& seq, const InputSignal& u, const Vec& x0,
                          double t0, double tf, const SimOptions& opts) {
  if (x0.size() != sys.n()) throw std::invalid_argument("simulate: x0 has wrong dimension");
  for (double v : x0)
    if (!std::isfinite(v)) throw std::invalid_argument("simulate: x0 must be finite");
  if (!(tf >= t0)) throw std::invalid_argument("simulate: need tf >= t0");
  if (tf > seq.horizon() + 1e-12 * std::max(1.0, std::fabs(tf)))
    throw std::invalid_argument("simulate: tf exceeds the sequence horizon");
  if (u.dim() != sys.m()) throw std::invalid_argument("simulate: input dimension mismatch");
  if (opts.samples_per_segment < 1) throw std::invalid_argument("simulate: samples_per_segment must be >= 1");

  HybridTrajectory tr;
  tr.n_ = sys.n();
  tr.t0_ = t0;
  tr.tf_ = tf;
  tr.x0_ = x0;

  std::vector<double> impulses;
  for (double t : seq.times())
    if (t > t0 && t <= tf) impulses.push_back(t);
  std::vector<double> bounds = impulses;
  for (double t : u.starts())
    if (t > t0 && t < tf) bounds.push_back(t);
  bounds.push_back(tf);
  std::sort(bounds.begin(), bounds.end());
  bounds.erase(std::unique(bounds.begin(), bounds.end()), bounds.end());

  Dopri rk(sys, opts, tr.stats_);
  Vec x = x0;
  double h = 0.0;
  double a = t0;
  std::size_t next_imp = 0;
  try {
    for (double b : bounds) {
      if (b > a) {
        std::vector<double> st(static_cast<std::size_t>(opts.samples_per_segment) + 1);
        for (std::size_t k = 0; k < st.size(); ++k)
          st[k] = a + (b - a) * static_cast<double>(k) / static_cast<double>(opts.samples_per_segment);
        st.back() = b;
        tr.segments_.emplace_back();
        const Vec& uv = u.value(a);
        rk.run(uv, a, b, x, h, st, tr.segments_.back());
      }
      if (next_imp < impulses.size() && impulses[next_imp] == b) {
        JumpRecord j{b, x, Vec(sys.n())};
        try {
          sys.jump(std::span<const double>(x), std::span<const double>(u.left_value(b)), std::span<double>(j.post));
        } catch (const OverflowError&) {
          throw Diverged{b};
        }
        x = j.post;
        tr.jumps_.push_back(std::move(j));
        ++next_imp;
        if (!std::isfinite(norm2(x)) || norm2(x) > opts.blowup) throw Diverged{b};
      }
      a = b;
    }
  } catch (const Diverged& d) {
    tr.diverged_ = true;
    tr.diverged_at_ = d.t;
  } catch (const OverflowError&) {
    tr.diverged_ = true;
    tr.diverged_at_ = tr.segments_.empty() ? t0 : tr.segments_.back().t.empty() ? a : tr.segments_.back().t.back();
  }
  if (tr.diverged_ && !tr.segments_.empty()) {
    auto& seg = tr.segments_.back();
    if (seg.t.empty()) tr.segments_.pop_back();
    else seg.b = seg.t.back();
  }
  return tr;
}

Vec HybridTrajectory::interpolate(const Segment& seg, double t) const {
  const auto& T = seg.t;
  Vec out(n_);
  if (T.size() == 1 || t <= T.front()) {
    std::copy_n(seg.x.begin(), n_, out.begin());
    return out;
  }
  if (t >= T.back()) {
    std::copy_n(seg.x.end() - static_cast<std::ptrdiff_t>(n_), n_, out.begin());
    return out;
  }
  const std::size_t i = static_cast<std::size_t>(std::upper_bound(T.begin(), T.end(), t) - T.begin()) - 1;
  const double h = T[i + 1] - T[i];
  const double s = (t - T[i]) / h;
  const double h00 = (2 * s - 3) * s * s + 1, h10 = ((s - 2) * s + 1) * s, h01 = (3 - 2 * s) * s * s,
               h11 = (s - 1) * s * s;
  for (std::size_t k = 0; k < n_; ++k) {
    out[k] = h00 * seg.x[i * n_ + k] + h10 * h * seg.dx[i * n_ + k] + h01 * seg.x[(i + 1) * n_ + k] +
             h11 * h * seg.dx[(i + 1) * n_ + k];
  }
  return out;
}

Vec HybridTrajectory::final_state() const {
  if (!jumps_.empty() && (segments_.empty() || jumps_.back().t >= segments_.back().b)) return jumps_.back().post;
  if (segments_.empty()) return x0_;
  const auto& seg = segments_.back();
  return Vec(seg.x.end() - static_cast<std::ptrdiff_t>(n_), seg.x.end());
}

Vec HybridTrajectory::state_at(double t) const {
  const double end = t_end();
  if (t < t0_ || t > end) throw std::out_of_range("state_at: time outside the simulated range");
  if (t == end) return final_state();
  auto it = std::upper_bound(segments_.begin(), segments_.end(), t, [](double v, const Segment& s) { return v < s.a; });
  if (it == segments_.begin()) return x0_;
  return interpolate(*(it - 1), t);
}

Vec HybridTrajectory::left_limit(double t) const {
  if (t < t0_ || t > t_end()) throw std::out_of_range("left_limit: time outside the simulated range");
  if (t == t0_ || segments_.empty()) return x0_;
  auto it = std::lower_bound(segments_.begin(), segments_.end(), t, [](const Segment& s, double v) { return s.b < v; });
  if (it == segments_.end()) --it;
  return interpolate(*it, t);
}

double HybridTrajectory::sup_norm() const {
  double s = norm2(x0_);
  for (const auto& seg : segments_)
    for (std::size_t i = 0; i < seg.t.size(); ++i)
      s = std::max(s, norm2(std::span<const double>(seg.x.data() + i * n_, n_)));
  for (const auto& j : jumps_) s = std::max({s, norm2(j.pre), norm2(j.post)});
  return s;
}

Vec flow_map(const SystemDef& sys, const Vec& x, const Vec& u, double duration, double atol, double rtol) {
  SimOptions o;
  o.atol = atol;
  o.rtol = rtol;
  o.blowup = std::numeric_limits<double>::infinity();
  SolverStats st;
  Dopri rk(sys, o, st);
  Vec y = x;
  if (duration <= 0) return y;
  double h = 0.0;
  Segment seg;
  try {
    rk.run(u, 0.0, duration, y, h, {}, seg);
  } catch (const Diverged&) {
    throw OverflowError("flow_map: state became non-finite");
  }
  return y;
}

double shift_invariance_check(const SystemDef& sys, const ImpulseSequence& seq, const InputSignal& u, const Vec& x0,
                              double s, const SimOptions& opts) {
  if (!(s > -seq.t0()) && s != 0.0) throw std::invalid_argument("shift_invariance_check: need s > -t0");
  auto times = seq.times();
  for (auto& t : times) t += s;
  const ImpulseSequence shifted(seq.t0() + s, std::move(times), seq.horizon() + s);
  const auto a = simulate(sys, seq, u, x0, seq.t0(), seq.horizon(), opts);
  const auto b = simulate(sys, shifted, u.shifted(s), x0, seq.t0() + s, seq.horizon() + s, opts);
  if (a.segments().size() != b.segments().size() || a.jumps().size() != b.jumps().size())
    throw std::runtime_error("shift_invariance_check: shifted trajectory has a different segment structure");
  double dev = 0.0;
  for (std::size_t k = 0; k < a.segments().size(); ++k) {
    const auto& xa = a.segments()[k].x;
    const auto& xb = b.segments()[k].x;
    const std::size_t m = std::min(xa.size(), xb.size());
    for (std::size_t i = 0; i < m; ++i) dev = std::max(dev, std::fabs(xa[i] - xb[i]));
  }
  for (std::size_t k = 0; k < a.jumps().size(); ++k)
    for (std::size_t i = 0; i < sys.n(); ++i)
      dev = std::max(dev, std::fabs(a.jumps()[k].post[i] - b.jumps()[k].post[i]));
  return dev;
}

std::string trajectory_csv(const SystemDef& sys, const HybridTrajectory& traj) {
  std::ostringstream os;
  const std::size_t n = sys.n();
  os << "t";
  for (const auto& s : sys.states()) os << ',' << s;
  os << ",is_jump";
  for (const auto& s : sys.states()) os << ",pre_" << s;
  os << '\n';
  auto row = [&](double t, const double* x, const JumpRecord* j) {
    os << format_double(t);
    for (std::size_t i = 0; i < n; ++i) os << ',' << format_double(x[i]);
    os << ',' << (j ? 1 : 0);
    for (std::size_t i = 0; i < n; ++i) {
      os << ',';
      if (j) os << format_double(j->pre[i]);
    }
    os << '\n';
  };
  const auto& segs = traj.segments();
  const auto& jumps = traj.jumps();
  std::size_t jn = 0;
  for (std::size_t k = 0; k < segs.size(); ++k) {
    const auto& seg = segs[k];
    const bool final_seg = k + 1 == segs.size();
    const bool jump_at_end = final_seg && !jumps.empty() && jumps.back().t == seg.b;
    const std::size_t count = seg.t.size() - ((final_seg && !jump_at_end) ? 0 : 1);
    for (std::size_t i = 0; i < count; ++i) {
      const JumpRecord* j = nullptr;
      if (i == 0 && jn < jumps.size() && jumps[jn].t == seg.a) j = &jumps[jn++];
      row(seg.t[i], seg.x.data() + i * n, j);
    }
  }
  while (jn < jumps.size()) {
    row(jumps[jn].t, jumps[jn].post.data(), &jumps[jn]);
    ++jn;
  }
  return os.str();
}

}  // namespace iss
