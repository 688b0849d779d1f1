#include "iss/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "iss/config.hpp"
#include "iss/falsify.hpp"
#include "iss/linearize.hpp"
#include "iss/numeric.hpp"
#include "iss/repro.hpp"
#include "iss/serialize.hpp"

#ifndef ISS_CONFIG_DIR
#define ISS_CONFIG_DIR "configs"
#endif

namespace iss {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<double> parse_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(what + ": '" + item + "' is not a number");
    }
  }
  return out;
}

std::vector<std::vector<double>> parse_matrix(const std::string& s) {
  std::vector<std::vector<double>> rows;
  std::stringstream ss(s);
  std::string row;
  while (std::getline(ss, row, ';')) rows.push_back(parse_list(row, "--chi"));
  for (const auto& r : rows)
    if (r.size() != rows.size()) throw UsageError("--chi must be square, rows separated by ';'");
  return rows;
}

// Effective seed: flag, then ISS_SEED, then the config, then 1.
std::uint64_t effective_seed(const std::optional<std::uint64_t>& flag, std::optional<std::uint64_t> cfg) {
  if (flag) return *flag;
  if (const char* env = std::getenv("ISS_SEED")) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (env[used] != '\0') throw std::invalid_argument(env);
      return v;
    } catch (const std::exception&) {
      throw UsageError(std::string("ISS_SEED is not an unsigned integer: '") + env + "'");
    }
  }
  return cfg.value_or(1);
}

void write_report(const std::string& target, const std::string& content, std::ostream& out) {
  if (target.empty()) return;
  if (target == "-") {
    out << content;
    return;
  }
  std::ofstream f(target, std::ios::binary);
  if (!f) throw UsageError("cannot write '" + target + "'");
  f << content;
}

template <class M>
const typename M::mapped_type& lookup(const M& map, const std::string& name, const std::string& kind) {
  auto it = map.find(name);
  if (it == map.end()) {
    std::string known;
    for (const auto& [k, v] : map) known += (known.empty() ? "" : ", ") + k;
    throw UsageError("unknown " + kind + " '" + name + "'" + (known.empty() ? "" : " (known: " + known + ")"));
  }
  return it->second;
}

ImpulseSequence resolve_sequence(const ProjectConfig& cfg, const std::string& spec, double t0, double horizon,
                                 std::uint64_t seed) {
  if (spec.empty() || spec == "none") return ImpulseSequence(t0, {}, horizon);
  if (auto it = cfg.sequences.find(spec); it != cfg.sequences.end()) return it->second;
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw UsageError("unknown sequence '" + spec + "'");
  const std::string kind = spec.substr(0, colon), arg = spec.substr(colon + 1);
  if (kind == "periodic") {
    const auto v = parse_list(arg, "periodic");
    if (v.size() != 1) throw UsageError("periodic:<gap>");
    return generate(PeriodicGen{v[0]}, t0, horizon, seed);
  }
  if (kind == "uniform") {
    const auto v = parse_list(arg, "uniform");
    if (v.size() != 2) throw UsageError("uniform:<min_gap>,<max_gap>");
    return generate(UniformRandomGen{v[0], v[1]}, t0, horizon, seed);
  }
  if (kind == "densest") return generate(DensestGen{lookup(cfg.classes, arg, "class")}, t0, horizon, seed);
  throw UsageError("sequence spec must be a name, none, periodic:<gap>, uniform:<lo>,<hi> or densest:<class>");
}

std::vector<double> parse_a_grid(const std::string& s) {
  if (s == "default") return default_class_grid();
  std::stringstream ss(s);
  std::string lo, hi, n;
  if (!std::getline(ss, lo, ':') || !std::getline(ss, hi, ':') || !std::getline(ss, n))
    throw UsageError("--a-grid must be 'default' or <lo>:<hi>:<n>");
  const double l = parse_list(lo, "--a-grid")[0], h = parse_list(hi, "--a-grid")[0];
  const double cnt = parse_list(n, "--a-grid")[0];
  if (!(l > 0 && h > l && cnt >= 2)) throw UsageError("--a-grid needs 0 < lo < hi and n >= 2");
  return log_grid(l, h, static_cast<std::size_t>(cnt));
}

void print_branch(std::ostream& out, const char* name, const BranchStats& b) {
  out << "  " << name << ": " << b.checked << " checked, " << b.violations << " violations, worst margin "
      << format_double(b.worst_margin) << "\n";
  if (b.violations > 0) {
    out << "    witness x = " << dump(to_json(b.witness_x));
    if (!b.witness_xi.empty()) out << "    witness xi = " << dump(to_json(b.witness_xi));
    out << "    lhs " << format_double(b.lhs) << " > rhs " << format_double(b.rhs) << "\n";
  }
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string json_out;
};

void add_common(CLI::App* sub, Common& c, bool config_required = true) {
  auto* opt = sub->add_option("--config", c.config, "JSON config file");
  if (config_required) opt->required();
  sub->add_option("--seed", c.seed, "random seed (overrides ISS_SEED and the config)");
  sub->add_option("--json", c.json_out, "write the JSON report to a file ('-' for standard output)");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Impulsive-system ISS toolkit: simulation, Lyapunov certificates, dwell-time classes, small-gain "
               "composition"};
  app.name("iss");
  app.require_subcommand(1);

  Common common;
  std::function<int()> action;

  // simulate
  auto* sim = app.add_subcommand("simulate", "simulate a system along an impulse sequence");
  std::string sim_system, sim_seq, sim_x0, sim_input, sim_format = "csv", sim_out;
  double sim_t0 = 0.0, sim_tf = 10.0;
  add_common(sim, common);
  sim->add_option("--system", sim_system, "system name")->required();
  sim->add_option("--seq", sim_seq, "sequence: name, none, periodic:<gap>, uniform:<lo>,<hi>, densest:<class>");
  sim->add_option("--x0", sim_x0, "initial state, comma separated (default all ones)");
  sim->add_option("--input", sim_input, "constant input, comma separated (default zero)");
  sim->add_option("--t0", sim_t0, "initial time");
  sim->add_option("--tf", sim_tf, "final time");
  sim->add_option("--format", sim_format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  sim->add_option("--out", sim_out, "output file (default standard output)");
  sim->callback([&] {
    action = [&]() -> int {
      const auto cfg = load_config(common.config);
      const auto seed = effective_seed(common.seed, cfg.seed);
      const auto& sys = lookup(cfg.systems, sim_system, "system");
      Vec x0 = sim_x0.empty() ? Vec(sys.n(), 1.0) : parse_list(sim_x0, "--x0");
      if (x0.size() != sys.n()) throw UsageError("--x0 needs " + std::to_string(sys.n()) + " values");
      Vec u = sim_input.empty() ? Vec(sys.m(), 0.0) : parse_list(sim_input, "--input");
      if (u.size() != sys.m()) throw UsageError("--input needs " + std::to_string(sys.m()) + " values");
      if (!(sim_tf > sim_t0)) throw UsageError("--tf must exceed --t0");
      const auto seq = resolve_sequence(cfg, sim_seq, sim_t0, sim_tf, seed);
      const auto traj = simulate(sys, seq, InputSignal::constant(u), x0, sim_t0, sim_tf);
      const std::string content =
          sim_format == "csv" ? trajectory_csv(sys, traj) : dump(trajectory_json(sys, traj));
      if (sim_out.empty()) {
        out << content;
      } else {
        write_report(sim_out, content, out);
        out << "seed: " << seed << "\nwrote " << sim_out << (traj.diverged() ? " (diverged)" : "") << "\n";
      }
      return kExitOk;
    };
  });

  // check-certificate
  auto* chk = app.add_subcommand("check-certificate", "sample-check an ISS-Lyapunov certificate");
  std::string chk_name;
  std::optional<double> chk_radius, chk_tol;
  std::optional<std::size_t> chk_samples;
  add_common(chk, common);
  chk->add_option("--certificate", chk_name, "certificate name")->required();
  chk->add_option("--local-radius", chk_radius, "restrict states and inputs to the closed ball of this radius");
  chk->add_option("--samples", chk_samples, "interior sample count");
  chk->add_option("--tol", chk_tol, "relative tolerance");
  chk->callback([&] {
    action = [&]() -> int {
      const auto cfg = load_config(common.config);
      const auto& decl = lookup(cfg.certificates, chk_name, "certificate");
      auto plan = decl.plan;
      plan.seed = effective_seed(common.seed, cfg.seed);
      if (chk_radius) {
        if (!(*chk_radius > 0)) throw UsageError("--local-radius must be positive");
        plan.radius = *chk_radius;
        plan.input_radius = *chk_radius;
        plan.ball = true;
      }
      if (chk_samples) plan.interior = *chk_samples;
      const auto rep = check_certificate(cfg.systems.at(decl.system), decl.candidate, plan, chk_tol.value_or(decl.tol));
      out << "seed: " << plan.seed << "\n";
      out << "certificate " << chk_name << " (" << (rep.form == CertForm::Max ? "max" : "implication")
          << " form): " << (rep.certified ? "CERTIFIED" : "VIOLATED") << "\n";
      out << "  samples " << rep.samples << ", guarded " << rep.guarded << "\n";
      print_branch(out, "flow", rep.flow);
      print_branch(out, "jump", rep.jump);
      if (rep.sandwich.checked) print_branch(out, "sandwich", rep.sandwich);
      for (const auto& c : rep.class_failures) out << "  class: " << c << "\n";
      json j = {{"seed", plan.seed}, {"certificate", chk_name}, {"report", to_json(rep)}};
      write_report(common.json_out, dump(j), out);
      return rep.certified ? kExitOk : kExitViolated;
    };
  });

  // fdt
  auto* fdt = app.add_subcommand("fdt", "fixed dwell-time threshold of a certificate");
  std::string fdt_name, fdt_grid = "default", fdt_dir = "auto";
  add_common(fdt, common);
  fdt->add_option("--certificate", fdt_name, "certificate name")->required();
  fdt->add_option("--a-grid", fdt_grid, "'default' or <lo>:<hi>:<n>");
  fdt->add_option("--direction", fdt_dir, "auto, flow (flow-stabilizing) or jumps (jump-stabilizing)")
      ->check(CLI::IsMember({"auto", "flow", "jumps"}));
  fdt->callback([&] {
    action = [&]() -> int {
      const auto cfg = load_config(common.config);
      const auto& L = lookup(cfg.certificates, fdt_name, "certificate").candidate;
      const auto grid = parse_a_grid(fdt_grid);
      FdtDirection dir = FdtDirection::StabilizingFlow;
      if (fdt_dir == "jumps") {
        dir = FdtDirection::StabilizingJumps;
      } else if (fdt_dir == "auto") {
        const double a = grid[grid.size() / 2];
        const double phi = L.flow.coeff ? *L.flow.coeff * a : L.flow.phi(a);
        dir = phi > 0 ? FdtDirection::StabilizingFlow : FdtDirection::StabilizingJumps;
      }
      const ScalarFn phi = L.flow.coeff ? ScalarFn::linear(*L.flow.coeff) : L.flow.phi;
      const ScalarFn alpha = L.jump.coeff ? ScalarFn::linear(std::exp(-*L.jump.coeff)) : L.jump.alpha;
      const auto r = fdt_threshold(phi, alpha, grid, dir);
      const bool flow = dir == FdtDirection::StabilizingFlow;
      out << "certificate " << fdt_name << ", " << (flow ? "flow-stabilizing" : "jump-stabilizing") << "\n";
      if (r.divergent()) {
        out << "  integral diverges at a = " << format_double(r.divergent_at.front()) << "; no dwell time certified\n";
      } else {
        out << "  threshold " << format_double(r.bound) << " at a = " << format_double(r.argument) << "\n";
        out << (flow ? "  certified: min gap theta with theta - delta >= " : "  certified: max gap theta with theta + delta <= ")
            << format_double(r.bound) << " for some delta > 0 (ISS), delta = 0 (GS)\n";
      }
      json j = {{"certificate", fdt_name}, {"direction", flow ? "flow" : "jumps"}, {"result", to_json(r)}};
      write_report(common.json_out, dump(j), out);
      return r.divergent() ? kExitViolated : kExitOk;
    };
  });

  // gadt
  auto* gadt = app.add_subcommand("gadt", "generalized averaged dwell-time hypothesis for a sequence");
  std::string gadt_cert, gadt_h = "exp(1 - 0.5*x)", gadt_seq;
  std::optional<double> gadt_c, gadt_d;
  double gadt_horizon = 20.0;
  add_common(gadt, common);
  gadt->add_option("--certificate", gadt_cert, "exponential certificate supplying c and d");
  gadt->add_option("--c", gadt_c, "flow rate c");
  gadt->add_option("--d", gadt_d, "jump rate d");
  gadt->add_option("--hfun", gadt_h, "h(x) as an expression in x");
  gadt->add_option("--sequence", gadt_seq, "sequence name or spec")->required();
  gadt->add_option("--horizon", gadt_horizon, "horizon for generated sequences");
  gadt->callback([&] {
    action = [&]() -> int {
      const auto cfg = load_config(common.config);
      double c = 0, d = 0;
      if (!gadt_cert.empty()) {
        const auto& L = lookup(cfg.certificates, gadt_cert, "certificate").candidate;
        if (!L.flow.coeff || !L.jump.coeff) throw UsageError("certificate '" + gadt_cert + "' is not exponential");
        c = *L.flow.coeff;
        d = *L.jump.coeff;
      }
      if (gadt_c) c = *gadt_c;
      if (gadt_d) d = *gadt_d;
      if (gadt_cert.empty() && (!gadt_c || !gadt_d)) throw UsageError("give --certificate or both --c and --d");
      const ScalarFn h = parse_function(json(gadt_h), "--hfun", "x");
      const auto seed = effective_seed(common.seed, cfg.seed);
      const auto seq = resolve_sequence(cfg, gadt_seq, 0.0, gadt_horizon, seed);
      const auto m = gadt_check(c, d, h, seq);
      out << "seed: " << seed << "\n";
      out << "gADT with c=" << format_double(c) << ", d=" << format_double(d) << ", h=" << gadt_h << ": "
          << (m.holds ? "HOLDS" : "VIOLATED") << " (worst margin " << format_double(m.worst_margin) << " at s="
          << format_double(m.s) << ", t=" << format_double(m.t) << ")\n";
      json j = {{"seed", seed}, {"c", c}, {"d", d}, {"h", gadt_h}, {"sequence", to_json(seq)}, {"membership", to_json(m)}};
      write_report(common.json_out, dump(j), out);
      return m.holds ? kExitOk : kExitViolated;
    };
  });

  // sequence-class
  auto* sc = app.add_subcommand("sequence-class", "membership of a sequence in a dwell-time class");
  std::string sc_seq, sc_class;
  double sc_horizon = 20.0;
  add_common(sc, common);
  sc->add_option("--sequence", sc_seq, "sequence name or spec")->required();
  sc->add_option("--class", sc_class, "class name")->required();
  sc->add_option("--horizon", sc_horizon, "horizon for generated sequences");
  sc->callback([&] {
    action = [&]() -> int {
      const auto cfg = load_config(common.config);
      const auto seed = effective_seed(common.seed, cfg.seed);
      const auto& cls = lookup(cfg.classes, sc_class, "class");
      const auto seq = resolve_sequence(cfg, sc_seq, 0.0, sc_horizon, seed);
      const auto m = member(seq, cls);
      out << "seed: " << seed << "\n";
      out << "sequence " << sc_seq << " (" << seq.size() << " impulses) in " << describe(cls) << ": "
          << (m.holds ? "MEMBER" : "NOT A MEMBER") << " (worst margin " << format_double(m.worst_margin) << " at s="
          << format_double(m.s) << ", t=" << format_double(m.t) << ")\n";
      json j = {{"seed", seed}, {"class", describe(cls)}, {"sequence", to_json(seq)}, {"membership", to_json(m)}};
      write_report(common.json_out, dump(j), out);
      return m.holds ? kExitOk : kExitViolated;
    };
  });

  // compose
  auto* comp = app.add_subcommand("compose", "small-gain composition of subsystem certificates");
  std::string comp_net, comp_out;
  bool comp_check = false;
  add_common(comp, common);
  comp->add_option("--network", comp_net, "network name")->required();
  comp->add_option("--out", comp_out, "write the composite certificate JSON here");
  comp->add_flag("--check", comp_check, "sample-check the composite on the interconnected system");
  comp->callback([&] {
    action = [&]() -> int {
      const auto cfg = load_config(common.config);
      const auto& decl = lookup(cfg.networks, comp_net, "network");
      const auto seed = effective_seed(common.seed, cfg.seed);
      const auto sg = small_gain_check(decl.net);
      json j = {{"seed", seed}, {"network", comp_net}, {"small_gain", to_json(sg)}};
      out << "seed: " << seed << "\n";
      out << "small-gain condition: " << (sg.holds ? "holds" : "FAILS") << " (" << sg.cycles
          << " cycles, worst cycle ratio " << format_double(sg.worst_ratio) << ")\n";
      if (!sg.holds) {
        const auto& v = sg.violations.front();
        out << "  witness s=" << format_double(v.s) << ": cycle composition " << format_double(v.composed)
            << " >= s; Gamma(w) >= w for w = " << dump(to_json(v.witness));
        write_report(common.json_out, dump(j), out);
        return kExitViolated;
      }
      if (decl.net.certs.size() != decl.net.n()) {
        write_report(common.json_out, dump(j), out);
        out << "  no subsystem certificates declared; nothing to compose\n";
        return kExitOk;
      }
      LyapunovCandidate cert;
      if (decl.net.power_gains()) {
        const auto e = compose_exponential(decl.net, decl.path, decl.direction);
        out << "Omega-path (" << e.path.construction << ", " << (e.path.strict ? "strict" : "non-strict") << "):\n";
        for (std::size_t i = 0; i < e.sigma.size(); ++i)
          out << "  sigma_" << i + 1 << "(r) = " << e.sigma[i].describe("r") << "\n";
        out << "composite rates: c = " << format_double(e.c) << ", d = " << format_double(e.d) << "\n";
        for (const auto& n : e.notes) out << "  note: " << n << "\n";
        j["path"] = to_json(e.path);
        j["c"] = e.c;
        j["d"] = e.d;
        cert = e.cert;
      } else {
        const auto path = decl.path ? omega_path_power(decl.net, *decl.path)
                                    : omega_path(decl.net, decl.direction.empty() ? Vec(decl.net.n(), 1.0) : decl.direction);
        const auto cc = compose_certificate(decl.net, path);
        out << "Omega-path (" << path.construction << ", " << (path.strict ? "strict" : "non-strict") << ")\n";
        for (const auto& n : cc.notes) out << "  note: " << n << "\n";
        j["path"] = to_json(path);
        cert = cc.cert;
      }
      j["certificate"] = certificate_json(cert, decl.system);
      if (!comp_out.empty()) write_report(comp_out, dump(certificate_json(cert, decl.system)), out);
      int code = kExitOk;
      if (comp_check) {
        SamplePlan plan;
        plan.seed = seed;
        const auto rep = check_certificate(cfg.systems.at(decl.system), cert, plan);
        out << "composite check: " << (rep.certified ? "CERTIFIED" : "VIOLATED") << "\n";
        print_branch(out, "flow", rep.flow);
        print_branch(out, "jump", rep.jump);
        j["check"] = to_json(rep);
        if (!rep.certified) code = kExitViolated;
      }
      write_report(common.json_out, dump(j), out);
      return code;
    };
  });

  // tradeoff
  auto* tr = app.add_subcommand("tradeoff", "rate trade-off for linear gains, or the two-state example");
  std::string tr_chi, tr_k;
  double tr_ct = 0.0, tr_d = 0.0;
  bool tr_example = false;
  tr->add_option("--chi", tr_chi, "gain matrix, rows separated by ';'");
  tr->add_option("--c-tilde", tr_ct, "common flow rate");
  tr->add_option("--d", tr_d, "jump rate (negative)");
  tr->add_option("--k", tr_k, "comma-separated k values");
  tr->add_flag("--example", tr_example, "solve the two-state interconnection trade-off");
  tr->add_option("--json", common.json_out, "write the JSON report to a file ('-' for standard output)");
  tr->callback([&] {
    action = [&]() -> int {
      if (tr_example) {
        const auto t = solve_example_tradeoff();
        out << "b = " << format_double(t.b) << ", a = " << format_double(t.a) << ", flow growth 2(3b-1) = "
            << format_double(t.growth) << ", residual " << format_double(t.residual) << "\n";
        write_report(common.json_out,
                     dump({{"b", t.b}, {"a", t.a}, {"growth", t.growth}, {"residual", t.residual}}), out);
        return kExitOk;
      }
      if (tr_chi.empty() || tr_k.empty()) throw UsageError("give --chi, --c-tilde, --d and --k, or --example");
      const auto curve = tradeoff_curve(parse_matrix(tr_chi), tr_ct, tr_d, parse_list(tr_k, "--k"));
      out << "rho(chi) = " << format_double(curve.rho) << "\n";
      for (const auto& p : curve.points)
        out << "  k=" << format_double(p.k) << "  rho(chi/k)=" << format_double(p.rho_k) << "  c_k=" << format_double(p.c_k)
            << "  omega=" << format_double(p.omega) << "\n";
      write_report(common.json_out, dump(to_json(curve)), out);
      return curve.all_small_gain ? kExitOk : kExitViolated;
    };
  });

  // linearize
  auto* lz = app.add_subcommand("linearize", "local quadratic certificate from the linearization");
  std::string lz_system;
  bool lz_check = false;
  std::size_t lz_samples = 2048;
  add_common(lz, common);
  lz->add_option("--system", lz_system, "system name")->required();
  lz->add_option("--samples", lz_samples, "samples per radius");
  lz->add_flag("--check", lz_check, "re-check the certificate on its radius ball");
  lz->callback([&] {
    action = [&]() -> int {
      const auto cfg = load_config(common.config);
      const auto& sys = lookup(cfg.systems, lz_system, "system");
      const auto seed = effective_seed(common.seed, cfg.seed);
      const auto lin = numeric_jacobians(sys);
      json j = {{"seed", seed}, {"system", lz_system}, {"linearization", to_json(lin)}};
      out << "seed: " << seed << "\n";
      for (const auto& w : lin.warnings) out << "warning: " << w << "\n";
      Eigen::MatrixXd P;
      try {
        P = solve_lyapunov_equation(lin.R);
      } catch (const LyapunovEquationError& e) {
        out << "no quadratic certificate: " << e.what() << "\n";
        j["error"] = e.what();
        write_report(common.json_out, dump(j), out);
        return kExitViolated;
      }
      LocalSearchOptions lo;
      lo.samples = lz_samples;
      lo.seed = seed;
      QuadraticCertificate q;
      try {
        q = build_local_certificate(sys, lin, P, lo);
      } catch (const std::runtime_error& e) {
        out << "no quadratic certificate: " << e.what() << "\n";
        j["error"] = e.what();
        write_report(common.json_out, dump(j), out);
        return kExitViolated;
      }
      out << "V(x) = " << to_string(*q.candidate.V.expr()) << "\n";
      out << "radius " << format_double(q.rho) << ", c_local " << format_double(q.c_local) << ", jump factor "
          << format_double(q.jump_factor) << " (d = " << format_double(q.d) << ")\n";
      j["certificate"] = to_json(q);
      j["candidate"] = certificate_json(q.candidate, lz_system);
      int code = kExitOk;
      if (lz_check) {
        const auto rep = check_implication_form(sys, q.candidate, local_sample_plan(q, seed));
        out << "check on the radius ball: " << (rep.certified ? "CERTIFIED" : "VIOLATED") << "\n";
        j["check"] = to_json(rep);
        if (!rep.certified) code = kExitViolated;
      }
      write_report(common.json_out, dump(j), out);
      return code;
    };
  });

  // falsify
  auto* fz = app.add_subcommand("falsify", "Monte Carlo ISS / GS estimation, or the gADT tightness demo");
  std::string fz_system, fz_class, fz_mode = "iss", fz_csv, fz_gaps;
  SweepOptions fz_opts;
  double fz_c = 2.0, fz_d = -1.0;
  add_common(fz, common, false);
  fz->add_option("--system", fz_system, "system name");
  fz->add_option("--class", fz_class, "dwell-time class name");
  fz->add_option("--mode", fz_mode, "iss, gs or tightness")->check(CLI::IsMember({"iss", "gs", "tightness"}));
  fz->add_option("--trials", fz_opts.trials, "trial count (>= 100)");
  fz->add_option("--horizon", fz_opts.horizon, "simulation horizon");
  fz->add_option("--state-radius", fz_opts.state_radius, "largest initial-state norm");
  fz->add_option("--input-radius", fz_opts.input_radius, "largest input norm (0: zero input)");
  fz->add_option("--csv", fz_csv, "write per-trial peak norms as CSV");
  fz->add_option("--c", fz_c, "tightness: flow rate");
  fz->add_option("--d", fz_d, "tightness: jump rate");
  fz->add_option("--gaps", fz_gaps, "tightness: comma-separated periodic gaps");
  fz->callback([&] {
    action = [&]() -> int {
      if (fz_mode == "tightness") {
        const auto rep = gadt_tightness_demo(fz_c, fz_d, fz_opts.horizon,
                                             fz_gaps.empty() ? std::vector<double>{} : parse_list(fz_gaps, "--gaps"));
        out << "x' = -" << format_double(fz_c) << " x, x = exp(" << format_double(-fz_d) << ") x^-; critical gap "
            << format_double(rep.critical_gap) << "\n";
        out << "  gADT densest sequence (" << rep.gadt_impulses << " impulses): "
            << (rep.gadt_bounded ? "bounded by h" : "exceeds h") << "\n";
        for (const auto& r : rep.runs)
          out << "  gap " << format_double(r.gap) << ": per-period factor " << format_double(r.factor) << ", peaks "
              << r.trend << (r.exceeded_at ? ", exceeds 1e3 at t=" + format_double(*r.exceeded_at) : "") << "\n";
        write_report(common.json_out, dump(to_json(rep)), out);
        return kExitOk;
      }
      if (common.config.empty() || fz_system.empty() || fz_class.empty())
        throw UsageError("--config, --system and --class are required for iss and gs modes");
      const auto cfg = load_config(common.config);
      const auto& sys = lookup(cfg.systems, fz_system, "system");
      const auto& cls = lookup(cfg.classes, fz_class, "class");
      fz_opts.seed = effective_seed(common.seed, cfg.seed);
      if (fz_opts.trials < 100) throw UsageError("--trials must be at least 100");
      out << "seed: " << fz_opts.seed << "\n";
      if (fz_mode == "gs") {
        const auto gs = gs_check(sys, cls, fz_opts);
        out << "GS over " << describe(cls) << ": " << (gs.holds ? "plausible" : "NOT GS (empirical)") << ", "
            << gs.diverged << "/" << gs.trials.size() << " trials diverged\n";
        if (!fz_csv.empty()) write_report(fz_csv, trials_csv(gs.trials), out);
        json j = {{"seed", fz_opts.seed}, {"mode", "gs"}, {"result", to_json(gs)}};
        write_report(common.json_out, dump(j), out);
        return gs.holds ? kExitOk : kExitViolated;
      }
      const auto fit = iss_sweep(sys, cls, fz_opts);
      out << "ISS over " << describe(cls) << ": " << (fit.not_iss ? "NOT ISS (empirical)" : "no falsification") << ", "
          << fit.diverged << "/" << fit.trials.size() << " trials diverged\n";
      if (fit.exponential) {
        out << "  beta(r,t) = " << format_double(fit.M) << " r exp(-" << format_double(fit.lambda) << " t)\n";
      } else {
        out << "  beta: KL table (" << fit.beta_table.r_edges.size() << " x " << fit.beta_table.t_edges.size() << ")\n";
      }
      out << "  gamma: step envelope with " << fit.gamma.knots.size() << " knots\n";
      if (!fz_csv.empty()) write_report(fz_csv, trials_csv(fit.trials), out);
      json j = {{"seed", fz_opts.seed}, {"mode", "iss"}, {"result", to_json(fit)}};
      write_report(common.json_out, dump(j), out);
      return fit.not_iss ? kExitViolated : kExitOk;
    };
  });

  // repro-paper
  auto* rp = app.add_subcommand("repro-paper", "run every bundled reproduction and print a pass/fail table");
  std::string rp_dir = ISS_CONFIG_DIR;
  rp->add_option("--seed", common.seed, "random seed (overrides ISS_SEED)");
  rp->add_option("--config-dir", rp_dir, "directory of bundled configs");
  rp->add_option("--json", common.json_out, "write the JSON report to a file ('-' for standard output)");
  rp->callback([&] {
    action = [&]() -> int {
      const auto rep = run_repro(effective_seed(common.seed, std::nullopt), rp_dir);
      out << rep.table();
      write_report(common.json_out, dump(rep.to_json()), out);
      return rep.all_pass() ? kExitOk : kExitViolated;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  if (!action) {
    err << "error: no subcommand\n";
    return kExitUsage;
  }
  try {
    return action();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "invalid argument: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace iss
