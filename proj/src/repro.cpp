#include "iss/repro.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "iss/config.hpp"
#include "iss/falsify.hpp"
#include "iss/linearize.hpp"
#include "iss/numeric.hpp"

namespace iss {

namespace {

std::string fmt(double v, int digits = 10) {
  if (!std::isfinite(v)) return format_double(v);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

class Rows {
 public:
  explicit Rows(std::vector<ReproRow>& rows) : rows_(rows) {}

  void near(const std::string& name, double expected, double observed, double tol) {
    rows_.push_back({name, fmt(expected) + " +- " + fmt(tol, 3), fmt(observed),
                     std::isfinite(observed) && std::fabs(observed - expected) <= tol});
  }
  void at_most(const std::string& name, double observed, double bound) {
    rows_.push_back({name, "<= " + fmt(bound, 3), fmt(observed), observed <= bound});
  }
  void flag(const std::string& name, const std::string& expected, const std::string& observed, bool pass) {
    rows_.push_back({name, expected, observed, pass});
  }
  template <class F>
  void guarded(const std::string& name, F&& body) {
    try {
      body();
    } catch (const std::exception& e) {
      rows_.push_back({name, "runs", std::string("error: ") + e.what(), false});
    }
  }

 private:
  std::vector<ReproRow>& rows_;
};

SystemDef example_system() {
  return SystemDef("example", {"x"}, {"u"}, {parse("-x^3 + u")}, {parse("x + x^3 + u")});
}

SystemDef interconnection_system() {
  return SystemDef("interconnection", {"x1", "x2"}, {},
                   {parse("-x1 + x2^2"), parse("-x2 + 3*sqrt(abs(x1))")},
                   {parse("exp(-1)*x1"), parse("exp(-1)*x2")});
}

GainNetwork interconnection_network(double a, double b) {
  GainNetwork net(2);
  net.set_gain(0, 1, ScalarFn::parse("r^2/" + format_double(a), "r", FnClass::Kinf));
  net.set_gain(1, 0, ScalarFn::parse("sqrt(r)/" + format_double(b), "r", FnClass::Kinf));
  net.states = {"x1", "x2"};
  net.certs.push_back({StateFunction(parse("abs(x1)"), net.states), FlowRate::exponential(1 - a),
                       JumpRate::exponential(1)});
  net.certs.push_back({StateFunction(parse("abs(x2)"), net.states), FlowRate::exponential(1 - 3 * b),
                       JumpRate::exponential(1)});
  return net;
}

LyapunovCandidate cubic_certificate(double a) {
  LyapunovCandidate L;
  L.V = StateFunction(parse("abs(x)"), {"x"});
  L.gain = ScalarFn::parse("(r/" + format_double(a) + ")^(1/3)", "r", FnClass::Kinf);
  L.flow = FlowRate::general(ScalarFn::parse(format_double(1 - a) + "*s^3", "s", FnClass::PD));
  L.jump = JumpRate::general(ScalarFn::parse("s + " + format_double(1 + a) + "*s^3", "s", FnClass::PD));
  return L;
}

void fdt_rows(Rows& rows) {
  for (double a : {0.5, 0.1}) {
    rows.guarded("fdt bound, cubic example a=" + fmt(a), [&] {
      const auto L = cubic_certificate(a);
      const auto r = fdt_threshold(L.flow.phi, L.jump.alpha, default_class_grid(), FdtDirection::StabilizingFlow);
      rows.near("fdt bound, cubic example a=" + fmt(a), (1 + a) / (1 - a), r.bound, 1e-4);
    });
  }
  rows.guarded("integral closed form vs quadrature", [&] {
    double worst = 0.0;
    for (double y : {0.1, 1.0, 10.0})
      for (double a : {0.1, 0.5, 0.9}) {
        const auto q = integrate([a](double x) { return 1.0 / ((1 - a) * x * x * x); }, y, y + (1 + a) * y * y * y);
        worst = std::max(worst, std::fabs(q.value - cubic_example_integral(y, a)));
      }
    rows.at_most("integral closed form vs quadrature (9 points)", worst, 1e-6);
  });
  rows.guarded("fdt bound, exponential rates", [&] {
    const auto r = fdt_threshold(ScalarFn::linear(2.0), ScalarFn::linear(std::exp(1.0)), default_class_grid(),
                                 FdtDirection::StabilizingFlow);
    const auto [lo, hi] = std::minmax_element(r.values.begin(), r.values.end());
    rows.near("fdt bound, exponential rates c=2 d=-1", 0.5, r.bound, 1e-8);
    rows.at_most("fdt bound spread over a-grid", *hi - *lo, 1e-8);
  });
}

void certificate_rows(Rows& rows, std::uint64_t seed) {
  rows.guarded("cubic example certificate", [&] {
    SamplePlan plan;
    plan.seed = seed;
    const auto rep = check_implication_form(example_system(), cubic_certificate(0.5), plan);
    rows.flag("cubic example certificate a=0.5 (implication form)", "certified",
              rep.certified ? "certified" : "violated (" + std::to_string(rep.flow.violations + rep.jump.violations) + ")",
              rep.certified);
  });
}

void smallgain_rows(Rows& rows, std::uint64_t seed) {
  rows.guarded("example trade-off", [&] {
    const auto t = solve_example_tradeoff();
    rows.near("trade-off b", 0.612, t.b, 1e-3);
    rows.near("trade-off flow growth 2(3b-1)", 1.672, t.growth, 1e-2);
    rows.at_most("trade-off root residual", t.residual, 1e-9);
  });
  rows.guarded("small-gain boundary", [&] {
    const auto pass = small_gain_check(interconnection_network(1.5, 1.0));
    const auto fail = small_gain_check(interconnection_network(0.9, 1.0));
    rows.flag("small-gain a b^2 = 1.5", "holds", pass.holds ? "holds" : "fails", pass.holds);
    rows.flag("small-gain a b^2 = 0.9", "fails at 64/64", "fails at " + std::to_string(fail.violations.size()) + "/64",
              !fail.holds && fail.violations.size() == small_gain_grid().size());
  });
  rows.guarded("composite certificate", [&] {
    const auto net = interconnection_network(2.72, 0.62);
    const auto e = compose_exponential(net, std::vector<PowerMax>{PowerMax({{1.0, 1.0}}), PowerMax({{1.631, 0.5}})});
    rows.near("composite flow growth (explicit path)", 1.72, -e.c, 1e-12);
    rows.near("composite jump rate d (explicit path)", 1.0, e.d, 1e-12);
    SamplePlan plan;
    plan.seed = seed;
    plan.interior = 4096;
    const auto rep = check_max_form(interconnection_system(), e.cert, plan);
    rows.flag("composite certificate, max form, " + std::to_string(rep.samples) + " samples", "certified",
              rep.certified ? "certified" : "violated", rep.certified);
    const auto q = compose_exponential(net);
    rows.near("composite jump rate d (Q-path, a=(1,1))", 0.5, q.d, 1e-12);
  });
}

void dwell_rows(Rows& rows, std::uint64_t seed) {
  rows.guarded("theta*", [&] { rows.near("theta* for c=2 d=-1 lambda=0.5", 2.0 / 3.0, theta_star(2.0, -1.0, 0.5), 1e-12); });
  rows.guarded("adt cluster", [&] {
    const ImpulseSequence seq(0.0, {1.0, 1.05, 5.0, 9.0}, 10.0);
    const auto m = member(seq, Adt{1.0, 0.5, 2.0, -1.0});
    rows.flag("adt membership of {1, 1.05, 5, 9}", "violated", m.holds ? "holds" : "violated", !m.holds);
  });
  rows.guarded("gadt tightness", [&] {
    const auto rep = gadt_tightness_demo(2.0, -1.0, 60.0, {0.6, 0.4, 0.5});
    rows.flag("gadt tightness gap 0.6", "decreasing", rep.runs[0].trend, rep.runs[0].trend == "decreasing");
    const bool exceeded = rep.runs[1].exceeded_at && *rep.runs[1].exceeded_at < 60.0;
    rows.flag("gadt tightness gap 0.4", "exceeds 1e3 before t=60",
              exceeded ? "exceeds at t=" + fmt(*rep.runs[1].exceeded_at) : "bounded", exceeded);
    rows.at_most("gadt tightness gap 0.5 peak spread", rep.runs[2].peak_spread, 1e-6);
    rows.flag("gadt densest sequence below h", "bounded", rep.gadt_bounded ? "bounded" : "exceeds", rep.gadt_bounded);
  });
  rows.guarded("scalar closed form", [&] {
    const SystemDef sys("linear_scalar", {"x"}, {}, {parse("-2*x")}, {parse("exp(1)*x")});
    double worst = 0.0;
    for (std::uint64_t k = 0; k < 10; ++k) {
      const auto seq = generate(UniformRandomGen{0.3, 1.5}, 0.0, 50.0, Rng(seed).split(k).next());
      SimOptions so;
      so.atol = 1e-300;
      so.rtol = 1e-11;
      const auto tr = simulate(sys, seq, InputSignal::zero(0), {1.0}, 0.0, 50.0, so);
      for (double t : linear_grid(0.0, 50.0, 501)) {
        const double exact = std::exp(static_cast<double>(seq.count(0.0, t)) - 2.0 * t);
        worst = std::max(worst, std::fabs(tr.state_at(t)[0] - exact) / std::max(exact, 1e-300));
      }
    }
    rows.at_most("scalar linear closed form, relative error", worst, 1e-6);
  });
}

void falsify_rows(Rows& rows, std::uint64_t seed) {
  rows.guarded("iss sweep", [&] {
    SweepOptions o;
    o.trials = 500;
    o.seed = seed;
    o.horizon = 30.0;
    o.state_radius = 2.0;
    o.input_radius = 0.5;
    const auto fit = iss_sweep(example_system(), FdtMinGap{1.25}, o);
    rows.flag("iss sweep, cubic example, min gap 1.25, 500 trials", "no divergence",
              std::to_string(fit.diverged) + " diverged", fit.diverged == 0 && fit.dominates);
  });
  rows.guarded("gs failure", [&] {
    SweepOptions o;
    o.trials = 100;
    o.seed = seed;
    o.horizon = 60.0;
    o.input_radius = 0.0;
    const SystemDef sys("linear_scalar", {"x"}, {}, {parse("-2*x")}, {parse("exp(1)*x")});
    const auto gs = gs_check(sys, FdtMinGap{0.4}, o);
    rows.flag("gs check, linear scalar, min gap 0.4", "fails with witness",
              gs.holds ? "holds" : (gs.witness ? "fails with witness" : "fails"), !gs.holds && gs.witness);
  });
}

void linearize_rows(Rows& rows) {
  rows.guarded("linearization", [&] {
    const SystemDef sys("quad", {"x"}, {}, {parse("-x + x^2")}, {parse("0.5*x")});
    const auto lin = numeric_jacobians(sys);
    rows.near("linearization R", -1.0, lin.R(0, 0), 1e-8);
    rows.near("linearization D", 0.5, lin.D(0, 0), 1e-8);
    const auto P = solve_lyapunov_equation(lin.R);
    rows.near("Lyapunov equation P", 0.5, P(0, 0), 1e-8);
  });
}

void config_rows(Rows& rows, const std::string& dir, std::uint64_t seed) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  if (fs::is_directory(dir))
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const std::string label = "config " + f.filename().string();
    rows.guarded(label, [&] {
      const auto cfg = load_config(f.string());
      rows.flag(label + " loads", "loads", "loads", true);
      for (const auto& [name, decl] : cfg.certificates) {
        auto plan = decl.plan;
        plan.seed = seed;
        const auto rep = check_certificate(cfg.systems.at(decl.system), decl.candidate, plan, decl.tol);
        rows.flag(label + " certificate " + name, "certified", rep.certified ? "certified" : "violated", rep.certified);
      }
      for (const auto& [name, decl] : cfg.networks) {
        const auto sg = small_gain_check(decl.net);
        std::string obs = sg.holds ? "small-gain holds" : "small-gain fails";
        bool ok = sg.holds;
        if (sg.holds && decl.net.certs.size() == decl.net.n()) {
          const auto e = compose_exponential(decl.net, decl.path, decl.direction);
          obs += ", c=" + fmt(e.c, 6) + " d=" + fmt(e.d, 6);
          SamplePlan plan;
          plan.seed = seed;
          const auto rep = check_certificate(cfg.systems.at(decl.system), e.cert, plan);
          obs += rep.certified ? ", composite certified" : ", composite violated";
          ok = ok && rep.certified;
        }
        rows.flag(label + " network " + name, "small-gain holds, composite certified", obs, ok);
      }
    });
  }
}

}  // namespace

double cubic_example_integral(double y, double a) {
  const double k = 1 + a;
  const double den = 1 + k * y * y;
  return k / (2 * (1 - a)) * (2 + k * y * y) / (den * den);
}

bool ReproReport::all_pass() const {
  return std::all_of(rows.begin(), rows.end(), [](const ReproRow& r) { return r.pass; });
}

std::string ReproReport::table() const {
  std::size_t w0 = 4, w1 = 8, w2 = 8;
  for (const auto& r : rows) {
    w0 = std::max(w0, r.name.size());
    w1 = std::max(w1, r.expected.size());
    w2 = std::max(w2, r.observed.size());
  }
  std::ostringstream os;
  auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w - s.size(), ' '); };
  os << "seed: " << seed << "\n";
  os << pad("check", w0) << "  " << pad("expected", w1) << "  " << pad("observed", w2) << "  result\n";
  os << std::string(w0 + w1 + w2 + 14, '-') << "\n";
  std::size_t passed = 0;
  for (const auto& r : rows) {
    os << pad(r.name, w0) << "  " << pad(r.expected, w1) << "  " << pad(r.observed, w2) << "  "
       << (r.pass ? "PASS" : "FAIL") << "\n";
    passed += r.pass ? 1 : 0;
  }
  os << passed << "/" << rows.size() << " passed\n";
  return os.str();
}

json ReproReport::to_json() const {
  json j;
  j["seed"] = seed;
  json a = json::array();
  for (const auto& r : rows)
    a.push_back({{"check", r.name}, {"expected", r.expected}, {"observed", r.observed}, {"pass", r.pass}});
  j["rows"] = a;
  j["all_pass"] = all_pass();
  return j;
}

ReproReport run_repro(std::uint64_t seed, const std::string& config_dir) {
  ReproReport rep;
  rep.seed = seed;
  Rows rows(rep.rows);
  fdt_rows(rows);
  certificate_rows(rows, seed);
  smallgain_rows(rows, seed);
  dwell_rows(rows, seed);
  linearize_rows(rows);
  falsify_rows(rows, seed);
  config_rows(rows, config_dir, seed);
  return rep;
}

}  // namespace iss
