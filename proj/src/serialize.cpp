#include "iss/serialize.hpp"

#include <sstream>

#include "iss/numeric.hpp"

namespace iss {

namespace {

json num(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

json nums(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

const char* form_name(CertForm f) { return f == CertForm::Max ? "max" : "implication"; }

json branch_json(const BranchStats& b) {
  json j;
  j["checked"] = b.checked;
  j["violations"] = b.violations;
  j["worst_margin"] = num(b.worst_margin);
  if (b.violations > 0) {
    j["witness"] = {{"x", nums(b.witness_x)}, {"xi", nums(b.witness_xi)}, {"lhs", num(b.lhs)}, {"rhs", num(b.rhs)}};
  }
  return j;
}

}  // namespace

json to_json(const ImpulseSequence& seq) {
  return {{"t0", num(seq.t0())}, {"horizon", num(seq.horizon())}, {"times", nums(seq.times())}};
}

ImpulseSequence sequence_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("sequence must be an object");
  for (const char* key : {"t0", "horizon", "times"})
    if (!j.contains(key)) throw std::invalid_argument(std::string("sequence is missing '") + key + "'");
  if (!j["t0"].is_number() || !j["horizon"].is_number() || !j["times"].is_array())
    throw std::invalid_argument("sequence: t0 and horizon must be numbers and times an array");
  std::vector<double> times;
  for (const auto& t : j["times"]) {
    if (!t.is_number()) throw std::invalid_argument("sequence: times must be numbers");
    times.push_back(t.get<double>());
  }
  return ImpulseSequence(j["t0"].get<double>(), std::move(times), j["horizon"].get<double>());
}

json to_json(const Vec& v) { return nums(v); }

json to_json(const InputSignal& u) {
  json vals = json::array();
  for (const auto& v : u.values()) vals.push_back(nums(v));
  return {{"starts", nums(u.starts())}, {"values", vals}};
}

json trajectory_json(const SystemDef& sys, const HybridTrajectory& traj) {
  json j;
  j["system"] = sys.name();
  j["states"] = sys.states();
  j["t0"] = num(traj.t0());
  j["tf"] = num(traj.tf());
  j["diverged"] = traj.diverged();
  if (traj.diverged()) j["diverged_at"] = num(traj.diverged_at());
  json segs = json::array();
  const std::size_t n = traj.n();
  for (const auto& s : traj.segments()) {
    json rows = json::array();
    for (std::size_t k = 0; k < s.t.size(); ++k)
      rows.push_back(nums(std::vector<double>(s.x.begin() + static_cast<long>(k * n),
                                              s.x.begin() + static_cast<long>((k + 1) * n))));
    segs.push_back({{"a", num(s.a)}, {"b", num(s.b)}, {"t", nums(s.t)}, {"x", rows}});
  }
  j["segments"] = segs;
  json jumps = json::array();
  for (const auto& jr : traj.jumps()) jumps.push_back({{"t", num(jr.t)}, {"pre", nums(jr.pre)}, {"post", nums(jr.post)}});
  j["jumps"] = jumps;
  j["stats"] = {{"accepted", traj.stats().accepted},
                {"rejected", traj.stats().rejected},
                {"rhs_evals", traj.stats().rhs_evals}};
  return j;
}

json fn_json(const ScalarFn& f) {
  json j;
  if (f.expr()) {
    j["expr"] = to_string(*f.expr());
    j["var"] = f.variable();
  } else {
    j["expr"] = nullptr;
    j["description"] = f.description();
  }
  j["class"] = class_name(f.declared());
  return j;
}

json certificate_json(const LyapunovCandidate& L, const std::string& system) {
  json j;
  j["system"] = system;
  if (L.V.expr()) {
    j["V"] = to_string(*L.V.expr());
  } else {
    j["V"] = nullptr;
    j["V_description"] = L.V.description();
  }
  j["form"] = form_name(L.form);
  j["gain"] = fn_json(L.gain);
  if (L.psi1) j["psi1"] = fn_json(*L.psi1);
  if (L.psi2) j["psi2"] = fn_json(*L.psi2);
  if (L.flow.coeff) {
    j["flow"] = {{"c", num(*L.flow.coeff)}};
  } else {
    j["flow"] = {{"phi", fn_json(L.flow.phi)}};
  }
  if (L.jump.coeff) {
    j["jump"] = {{"d", num(*L.jump.coeff)}};
  } else {
    j["jump"] = {{"alpha", fn_json(L.jump.alpha)}};
  }
  return j;
}

json to_json(const CertificateReport& rep) {
  json j;
  j["certified"] = rep.certified;
  j["form"] = form_name(rep.form);
  j["tol"] = num(rep.tol);
  j["samples"] = rep.samples;
  j["guarded"] = rep.guarded;
  j["flow"] = branch_json(rep.flow);
  j["jump"] = branch_json(rep.jump);
  j["sandwich"] = branch_json(rep.sandwich);
  j["class_failures"] = rep.class_failures;
  j["notes"] = rep.notes;
  return j;
}

json to_json(const FdtResult& r) {
  json j;
  j["bound"] = num(r.bound);
  j["argument"] = num(r.argument);
  j["divergent"] = r.divergent();
  if (r.divergent()) j["divergent_at"] = nums(r.divergent_at);
  j["grid"] = nums(r.grid);
  j["values"] = nums(r.values);
  return j;
}

json to_json(const Membership& m) {
  return {{"holds", m.holds},
          {"worst_margin", num(m.worst_margin)},
          {"s", num(m.s)},
          {"t", num(m.t)},
          {"pairs_checked", m.pairs_checked}};
}

json to_json(const SmallGainResult& r) {
  json j;
  j["holds"] = r.holds;
  j["cycles"] = r.cycles;
  j["worst_ratio"] = num(r.worst_ratio);
  j["violation_count"] = r.violations.size();
  json v = json::array();
  for (std::size_t k = 0; k < r.violations.size() && k < 8; ++k) {
    const auto& c = r.violations[k];
    json cyc = json::array();
    for (auto i : c.cycle) cyc.push_back(i + 1);
    v.push_back({{"cycle", cyc}, {"s", num(c.s)}, {"composed", num(c.composed)}, {"witness", nums(c.witness)}});
  }
  j["violations"] = v;
  return j;
}

json to_json(const PowerMax& p) {
  json a = json::array();
  for (const auto& t : p.terms()) a.push_back({{"coeff", num(t.coeff)}, {"exponent", num(t.exponent)}});
  return a;
}

json to_json(const OmegaPath& p) {
  json j;
  j["construction"] = p.construction;
  j["direction"] = nums(p.direction);
  j["strict"] = p.strict;
  j["worst_ratio"] = num(p.worst_ratio);
  json s = json::array();
  for (const auto& f : p.sigma) s.push_back(f.description());
  j["sigma"] = s;
  if (p.power) {
    json pw = json::array();
    for (const auto& pm : *p.power) pw.push_back(to_json(pm));
    j["power"] = pw;
  }
  j["grid_points"] = p.grid.size();
  return j;
}

json to_json(const TradeoffCurve& c) {
  json pts = json::array();
  for (const auto& p : c.points)
    pts.push_back({{"k", num(p.k)}, {"rho_k", num(p.rho_k)}, {"c_k", num(p.c_k)}, {"omega", num(p.omega)}});
  return {{"rho", num(c.rho)},
          {"omega_decreasing", c.omega_decreasing},
          {"all_small_gain", c.all_small_gain},
          {"points", pts}};
}

json to_json(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index k = 0; k < M.cols(); ++k) r.push_back(num(M(i, k)));
    rows.push_back(r);
  }
  return rows;
}

json to_json(const Linearization& lin) {
  return {{"R", to_json(lin.R)},
          {"C", to_json(lin.C)},
          {"D", to_json(lin.D)},
          {"F", to_json(lin.F)},
          {"rho_grid", nums(lin.rho_grid)},
          {"w_flow", nums(lin.w_flow)},
          {"w_jump", nums(lin.w_jump)},
          {"warnings", lin.warnings}};
}

json to_json(const QuadraticCertificate& q) {
  json radii = json::array();
  for (const auto& r : q.radii)
    radii.push_back({{"rho", num(r.rho)}, {"q", num(r.q)}, {"c", num(r.c)}, {"r2", num(r.r2)}, {"certified", r.certified}});
  return {{"P", to_json(q.P)},
          {"eps", num(q.eps)},
          {"norm_P", num(q.norm_P)},
          {"rho", num(q.rho)},
          {"c_local", num(q.c_local)},
          {"r2", num(q.r2)},
          {"jump_factor", num(q.jump_factor)},
          {"d", num(q.d)},
          {"radii", radii},
          {"warnings", q.warnings}};
}

namespace {

json step_json(const StepEnvelope& e) { return {{"knots", nums(e.knots)}, {"values", nums(e.values)}}; }

json witness_json(const std::optional<DivergenceWitness>& w) {
  if (!w) return nullptr;
  return {{"trial", w->trial},
          {"seed", w->seed},
          {"x0", nums(w->x0)},
          {"impulse_times", nums(w->impulse_times)},
          {"input", to_json(w->input)},
          {"diverged_at", num(w->diverged_at)}};
}

}  // namespace

json to_json(const EnvelopeFit& fit) {
  json j;
  j["trials"] = fit.trials.size();
  j["samples"] = fit.samples;
  j["diverged"] = fit.diverged;
  j["diverged_fraction"] = num(fit.diverged_fraction);
  j["not_iss"] = fit.not_iss;
  j["witness"] = witness_json(fit.witness);
  if (fit.exponential) {
    j["beta"] = {{"template", "M*r*exp(-lambda*t)"}, {"M", num(fit.M)}, {"lambda", num(fit.lambda)}};
  } else {
    json vals = json::array();
    for (const auto& row : fit.beta_table.values) vals.push_back(nums(row));
    j["beta"] = {{"template", "table"},
                 {"r_edges", nums(fit.beta_table.r_edges)},
                 {"t_edges", nums(fit.beta_table.t_edges)},
                 {"values", vals}};
  }
  j["gamma"] = step_json(fit.gamma);
  j["per_sequence_M"] = nums(fit.per_sequence_M);
  j["dominates"] = fit.dominates;
  json v = json::array();
  for (const auto& e : fit.candidate_violations)
    v.push_back({{"trial", e.trial}, {"t", num(e.t)}, {"norm", num(e.norm)}, {"bound", num(e.bound)}});
  j["candidate_violations"] = v;
  return j;
}

json to_json(const GsResult& gs) {
  return {{"holds", gs.holds},
          {"trials", gs.trials.size()},
          {"diverged", gs.diverged},
          {"diverged_fraction", num(gs.diverged_fraction)},
          {"dominates", gs.dominates},
          {"xi", step_json(gs.xi)},
          {"gamma", step_json(gs.gamma)},
          {"witness", witness_json(gs.witness)}};
}

json to_json(const TightnessReport& rep) {
  json runs = json::array();
  for (const auto& r : rep.runs)
    runs.push_back({{"gap", num(r.gap)},
                    {"factor", num(r.factor)},
                    {"trend", r.trend},
                    {"peak_spread", num(r.peak_spread)},
                    {"periods", r.peaks.size()},
                    {"exceeded_1e3_at", r.exceeded_at ? num(*r.exceeded_at) : json(nullptr)},
                    {"max_closed_form_error", num(r.max_closed_form_error)}});
  return {{"c", num(rep.c)},
          {"d", num(rep.d)},
          {"horizon", num(rep.horizon)},
          {"critical_gap", num(rep.critical_gap)},
          {"gadt", {{"h", "exp(mu - lambda*x)"},
                    {"mu", num(rep.mu)},
                    {"lambda", num(rep.lambda)},
                    {"impulses", rep.gadt_impulses},
                    {"member", rep.gadt_member},
                    {"max_ratio", num(rep.gadt_max_ratio)},
                    {"bounded", rep.gadt_bounded}}},
          {"runs", runs}};
}

std::string trials_csv(const std::vector<TrialSummary>& trials) {
  std::ostringstream os;
  os << "trial,seed,x0_norm,input_norm,impulses,peak,diverged,diverged_at,sequence\n";
  for (std::size_t k = 0; k < trials.size(); ++k) {
    const auto& t = trials[k];
    os << k << ',' << t.seed << ',' << format_double(t.x0_norm) << ',' << format_double(t.input_norm) << ','
       << t.impulses << ',' << format_double(t.peak) << ',' << (t.diverged ? 1 : 0) << ','
       << format_double(t.diverged_at) << ",\"" << t.sequence << "\"\n";
  }
  return os.str();
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace iss
