#include "iss/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "iss/numeric.hpp"

namespace iss {

namespace {

std::string child(const std::string& base, const std::string& key) {
  std::string esc;
  for (char c : key) {
    if (c == '~') {
      esc += "~0";
    } else if (c == '/') {
      esc += "~1";
    } else {
      esc += c;
    }
  }
  return base + "/" + esc;
}

std::string child(const std::string& base, std::size_t idx) { return base + "/" + std::to_string(idx); }

void expect_object(const json& j, const std::string& p) {
  if (!j.is_object()) throw ConfigError(p, "expected an object");
}

void allow_keys(const json& j, const std::string& p, std::initializer_list<const char*> keys) {
  expect_object(j, p);
  std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw ConfigError(child(p, k), "unknown key '" + k + "'");
}

const json& require(const json& j, const std::string& p, const char* key) {
  if (!j.contains(key)) throw ConfigError(p, std::string("missing key '") + key + "'");
  return j[key];
}

double get_number(const json& j, const std::string& p) {
  if (!j.is_number()) throw ConfigError(p, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(p, "expected a finite number");
  return v;
}

double number_at(const json& j, const std::string& p, const char* key) {
  return get_number(require(j, p, key), child(p, key));
}

double number_or(const json& j, const std::string& p, const char* key, double def) {
  return j.contains(key) ? get_number(j[key], child(p, key)) : def;
}

std::string get_string(const json& j, const std::string& p) {
  if (!j.is_string()) throw ConfigError(p, "expected a string");
  return j.get<std::string>();
}

std::uint64_t get_uint(const json& j, const std::string& p) {
  if (!j.is_number_integer() || (j.is_number_integer() && j.get<long long>() < 0 && !j.is_number_unsigned()))
    throw ConfigError(p, "expected a nonnegative integer");
  return j.get<std::uint64_t>();
}

std::vector<std::string> string_list(const json& j, const std::string& p) {
  if (!j.is_array()) throw ConfigError(p, "expected an array of names");
  std::vector<std::string> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(get_string(j[k], child(p, k)));
  return out;
}

Expr parse_expr(const json& j, const std::string& p) {
  const std::string src = get_string(j, p);
  try {
    return parse(src);
  } catch (const ParseError& e) {
    throw ConfigError(p, std::string("expression error: ") + e.what());
  }
}

std::vector<Expr> expr_list(const json& j, const std::string& p) {
  if (!j.is_array()) throw ConfigError(p, "expected an array of expressions");
  std::vector<Expr> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(parse_expr(j[k], child(p, k)));
  return out;
}

FnClass parse_fn_class(const json& j, const std::string& p) {
  try {
    return class_from_name(get_string(j, p));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(p, e.what());
  }
}

FlowRate parse_flow(const json& j, const std::string& p) {
  allow_keys(j, p, {"c", "phi"});
  if (j.contains("c") == j.contains("phi")) throw ConfigError(p, "give exactly one of 'c' or 'phi'");
  if (j.contains("c")) return FlowRate::exponential(number_at(j, p, "c"));
  return FlowRate::general(parse_function(j["phi"], child(p, "phi"), "s"));
}

JumpRate parse_jump(const json& j, const std::string& p) {
  allow_keys(j, p, {"d", "alpha"});
  if (j.contains("d") == j.contains("alpha")) throw ConfigError(p, "give exactly one of 'd' or 'alpha'");
  if (j.contains("d")) return JumpRate::exponential(number_at(j, p, "d"));
  return JumpRate::general(parse_function(j["alpha"], child(p, "alpha"), "s"));
}

StateFunction parse_state_fn(const json& j, const std::string& p, const std::vector<std::string>& states) {
  Expr e = parse_expr(j, p);
  try {
    return StateFunction(e, states);
  } catch (const std::exception& ex) {
    throw ConfigError(p, ex.what());
  }
}

SamplePlan parse_plan(const json& j, const std::string& p, std::uint64_t seed) {
  SamplePlan plan;
  plan.seed = seed;
  if (j.is_null()) return plan;
  allow_keys(j, p, {"radius", "input_radius", "interior", "boundary", "near_zero", "ball", "seed"});
  plan.radius = number_or(j, p, "radius", plan.radius);
  if (!(plan.radius > 0)) throw ConfigError(child(p, "radius"), "radius must be positive");
  plan.input_radius = number_or(j, p, "input_radius", plan.input_radius);
  if (j.contains("interior")) plan.interior = get_uint(j["interior"], child(p, "interior"));
  if (j.contains("boundary")) plan.boundary = get_uint(j["boundary"], child(p, "boundary"));
  if (j.contains("near_zero")) plan.near_zero = get_uint(j["near_zero"], child(p, "near_zero"));
  if (j.contains("ball")) {
    if (!j["ball"].is_boolean()) throw ConfigError(child(p, "ball"), "expected true or false");
    plan.ball = j["ball"].get<bool>();
  }
  if (j.contains("seed")) plan.seed = get_uint(j["seed"], child(p, "seed"));
  return plan;
}

PowerMax parse_power(const json& j, const std::string& p) {
  if (!j.is_array() || j.empty()) throw ConfigError(p, "expected a nonempty array of {coeff, exponent}");
  std::vector<PowerFn> terms;
  for (std::size_t k = 0; k < j.size(); ++k) {
    const auto q = child(p, k);
    allow_keys(j[k], q, {"coeff", "exponent"});
    terms.push_back({number_at(j[k], q, "coeff"), number_at(j[k], q, "exponent")});
  }
  try {
    return PowerMax(std::move(terms));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(p, e.what());
  }
}

ImpulseSequence parse_sequence(const json& j, const std::string& p, const ProjectConfig& cfg) {
  expect_object(j, p);
  try {
    if (!j.contains("generator")) {
      allow_keys(j, p, {"t0", "horizon", "times"});
      number_at(j, p, "t0");
      number_at(j, p, "horizon");
      return sequence_from_json(j);
    }
    allow_keys(j, p, {"generator", "t0", "horizon", "delta", "min_gap", "max_gap", "class", "seed"});
    const std::string gen = get_string(j["generator"], child(p, "generator"));
    const double t0 = number_or(j, p, "t0", 0.0);
    const double horizon = number_at(j, p, "horizon");
    const std::uint64_t seed = j.contains("seed") ? get_uint(j["seed"], child(p, "seed")) : cfg.seed;
    if (gen == "periodic") return generate(PeriodicGen{number_at(j, p, "delta")}, t0, horizon, seed);
    if (gen == "uniform")
      return generate(UniformRandomGen{number_at(j, p, "min_gap"), number_at(j, p, "max_gap")}, t0, horizon, seed);
    if (gen == "densest") {
      const std::string cname = get_string(require(j, p, "class"), child(p, "class"));
      auto it = cfg.classes.find(cname);
      if (it == cfg.classes.end()) throw ConfigError(child(p, "class"), "unknown class '" + cname + "'");
      return generate(DensestGen{it->second}, t0, horizon, seed);
    }
    throw ConfigError(child(p, "generator"), "unknown generator '" + gen + "' (periodic, uniform, densest)");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(p, e.what());
  }
}

}  // namespace

ScalarFn parse_function(const json& j, const std::string& p, const std::string& default_var, FnClass default_class) {
  std::string var = default_var;
  FnClass cls = default_class;
  Expr body;
  if (j.is_string()) {
    body = parse_expr(j, p);
  } else {
    allow_keys(j, p, {"expr", "var", "class"});
    body = parse_expr(require(j, p, "expr"), child(p, "expr"));
    if (j.contains("var")) var = get_string(j["var"], child(p, "var"));
    if (j.contains("class")) cls = parse_fn_class(j["class"], child(p, "class"));
  }
  for (const auto& v : free_vars(body))
    if (v != var) throw ConfigError(p, "unknown variable '" + v + "' (the argument is '" + var + "')");
  ScalarFn f = ScalarFn::from_expr(body, var, cls);
  if (cls != FnClass::None) {
    ClassCheck chk;
    try {
      chk = validate_class(f, cls, default_class_grid());
    } catch (const std::exception& e) {
      throw ConfigError(p, std::string("class check failed: ") + e.what());
    }
    if (!chk.ok) {
      std::string where = chk.counterexample ? " at " + var + "=" + format_double(*chk.counterexample) : "";
      throw ConfigError(p, std::string("declared ") + class_name(cls) + " but fails the class check" + where + ": " +
                               chk.reason);
    }
  }
  return f;
}

DwellTimeClass parse_class(const json& j, const std::string& p) {
  expect_object(j, p);
  const std::string type = get_string(require(j, p, "type"), child(p, "type"));
  DwellTimeClass cls;
  if (type == "fdt_min_gap" || type == "fdt_max_gap") {
    allow_keys(j, p, {"type", "theta"});
    const double theta = number_at(j, p, "theta");
    cls = type == "fdt_min_gap" ? DwellTimeClass{FdtMinGap{theta}} : DwellTimeClass{FdtMaxGap{theta}};
  } else if (type == "adt") {
    allow_keys(j, p, {"type", "mu", "lambda", "c", "d"});
    cls = Adt{number_at(j, p, "mu"), number_at(j, p, "lambda"), number_at(j, p, "c"), number_at(j, p, "d")};
  } else if (type == "gadt") {
    allow_keys(j, p, {"type", "h", "c", "d"});
    cls = Gadt{parse_function(require(j, p, "h"), child(p, "h"), "x"), number_at(j, p, "c"), number_at(j, p, "d")};
  } else {
    throw ConfigError(child(p, "type"), "unknown class type '" + type + "' (fdt_min_gap, fdt_max_gap, adt, gadt)");
  }
  try {
    validate_dwell_class(cls);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(p, e.what());
  }
  return cls;
}

ProjectConfig parse_config(const json& doc, const std::string& source) {
  ProjectConfig cfg;
  cfg.source = source;
  allow_keys(doc, "", {"seed", "systems", "certificates", "sequences", "classes", "networks", "description"});
  if (doc.contains("seed")) cfg.seed = get_uint(doc["seed"], "/seed");

  if (doc.contains("systems")) {
    expect_object(doc["systems"], "/systems");
    for (const auto& [name, s] : doc["systems"].items()) {
      const auto p = child("/systems", name);
      allow_keys(s, p, {"states", "inputs", "flow", "jump"});
      auto states = string_list(require(s, p, "states"), child(p, "states"));
      auto inputs = s.contains("inputs") ? string_list(s["inputs"], child(p, "inputs")) : std::vector<std::string>{};
      auto f = expr_list(require(s, p, "flow"), child(p, "flow"));
      auto g = expr_list(require(s, p, "jump"), child(p, "jump"));
      auto check_vars = [&](const std::vector<Expr>& es, const char* key) {
        for (std::size_t k = 0; k < es.size(); ++k)
          for (const auto& v : free_vars(es[k]))
            if (std::find(states.begin(), states.end(), v) == states.end() &&
                std::find(inputs.begin(), inputs.end(), v) == inputs.end())
              throw ConfigError(child(child(p, key), k), "undeclared variable '" + v + "'");
      };
      check_vars(f, "flow");
      check_vars(g, "jump");
      try {
        cfg.systems.emplace(name, SystemDef(name, states, inputs, f, g));
      } catch (const std::exception& e) {
        throw ConfigError(p, e.what());
      }
    }
  }

  if (doc.contains("classes")) {
    expect_object(doc["classes"], "/classes");
    for (const auto& [name, c] : doc["classes"].items()) cfg.classes.emplace(name, parse_class(c, child("/classes", name)));
  }

  if (doc.contains("sequences")) {
    expect_object(doc["sequences"], "/sequences");
    for (const auto& [name, s] : doc["sequences"].items())
      cfg.sequences.emplace(name, parse_sequence(s, child("/sequences", name), cfg));
  }

  auto find_system = [&](const json& j, const std::string& p) -> const SystemDef& {
    const std::string sname = get_string(require(j, p, "system"), child(p, "system"));
    auto it = cfg.systems.find(sname);
    if (it == cfg.systems.end()) throw ConfigError(child(p, "system"), "unknown system '" + sname + "'");
    return it->second;
  };

  if (doc.contains("certificates")) {
    expect_object(doc["certificates"], "/certificates");
    for (const auto& [name, c] : doc["certificates"].items()) {
      const auto p = child("/certificates", name);
      allow_keys(c, p, {"system", "V", "form", "gain", "psi1", "psi2", "flow", "jump", "plan", "tol"});
      const SystemDef& sys = find_system(c, p);
      CertificateDecl decl;
      decl.system = sys.name();
      auto& L = decl.candidate;
      L.V = parse_state_fn(require(c, p, "V"), child(p, "V"), sys.states());
      if (c.contains("form")) {
        const auto form = get_string(c["form"], child(p, "form"));
        if (form == "implication") {
          L.form = CertForm::Implication;
        } else if (form == "max") {
          L.form = CertForm::Max;
        } else {
          throw ConfigError(child(p, "form"), "form must be 'implication' or 'max'");
        }
      }
      L.gain = c.contains("gain") ? parse_function(c["gain"], child(p, "gain")) : ScalarFn();
      if (c.contains("psi1")) L.psi1 = parse_function(c["psi1"], child(p, "psi1"));
      if (c.contains("psi2")) L.psi2 = parse_function(c["psi2"], child(p, "psi2"));
      L.flow = parse_flow(require(c, p, "flow"), child(p, "flow"));
      L.jump = parse_jump(require(c, p, "jump"), child(p, "jump"));
      decl.plan = parse_plan(c.contains("plan") ? c["plan"] : json(), child(p, "plan"), cfg.seed);
      decl.tol = number_or(c, p, "tol", decl.tol);
      if (!(decl.tol >= 0)) throw ConfigError(child(p, "tol"), "tolerance must be nonnegative");
      cfg.certificates.emplace(name, std::move(decl));
    }
  }

  if (doc.contains("networks")) {
    expect_object(doc["networks"], "/networks");
    for (const auto& [name, nj] : doc["networks"].items()) {
      const auto p = child("/networks", name);
      allow_keys(nj, p, {"system", "gains", "external", "subsystems", "jumps_coupled", "path", "direction"});
      const SystemDef& sys = find_system(nj, p);
      NetworkDecl decl;
      decl.system = sys.name();
      const auto& G = require(nj, p, "gains");
      const auto gp = child(p, "gains");
      if (!G.is_array() || G.empty()) throw ConfigError(gp, "expected a square array of gains");
      const std::size_t n = G.size();
      decl.net = GainNetwork(n);
      decl.net.states = sys.states();
      for (std::size_t i = 0; i < n; ++i) {
        const auto rp = child(gp, i);
        if (!G[i].is_array() || G[i].size() != n) throw ConfigError(rp, "row must have " + std::to_string(n) + " entries");
        for (std::size_t k = 0; k < n; ++k) {
          if (G[i][k].is_null()) continue;
          if (i == k) throw ConfigError(child(rp, k), "diagonal gains must be null");
          decl.net.set_gain(i, k, parse_function(G[i][k], child(rp, k), "r", FnClass::Kinf));
        }
      }
      if (nj.contains("external")) {
        const auto& E = nj["external"];
        const auto ep = child(p, "external");
        if (!E.is_array() || E.size() != n) throw ConfigError(ep, "expected " + std::to_string(n) + " entries");
        for (std::size_t i = 0; i < n; ++i)
          if (!E[i].is_null()) decl.net.set_external(i, parse_function(E[i], child(ep, i), "r", FnClass::Kinf));
      }
      if (nj.contains("subsystems")) {
        const auto& S = nj["subsystems"];
        const auto sp = child(p, "subsystems");
        if (!S.is_array() || S.size() != n) throw ConfigError(sp, "expected " + std::to_string(n) + " subsystems");
        for (std::size_t i = 0; i < n; ++i) {
          const auto q = child(sp, i);
          allow_keys(S[i], q, {"V", "flow", "jump"});
          decl.net.certs.push_back({parse_state_fn(require(S[i], q, "V"), child(q, "V"), sys.states()),
                                    parse_flow(require(S[i], q, "flow"), child(q, "flow")),
                                    parse_jump(require(S[i], q, "jump"), child(q, "jump"))});
        }
      }
      if (nj.contains("jumps_coupled")) {
        if (!nj["jumps_coupled"].is_boolean()) throw ConfigError(child(p, "jumps_coupled"), "expected true or false");
        decl.net.jumps_coupled = nj["jumps_coupled"].get<bool>();
      }
      if (nj.contains("path")) {
        const auto& P = nj["path"];
        const auto pp = child(p, "path");
        if (!P.is_array() || P.size() != n) throw ConfigError(pp, "expected " + std::to_string(n) + " path components");
        std::vector<PowerMax> path;
        for (std::size_t i = 0; i < n; ++i) path.push_back(parse_power(P[i], child(pp, i)));
        decl.path = std::move(path);
      }
      if (nj.contains("direction")) {
        const auto& D = nj["direction"];
        const auto dp = child(p, "direction");
        if (!D.is_array() || D.size() != n) throw ConfigError(dp, "expected " + std::to_string(n) + " entries");
        for (std::size_t i = 0; i < n; ++i) {
          const double v = get_number(D[i], child(dp, i));
          if (!(v > 0)) throw ConfigError(child(dp, i), "direction entries must be positive");
          decl.direction.push_back(v);
        }
      }
      cfg.networks.emplace(name, std::move(decl));
    }
  }
  return cfg;
}

ProjectConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  json doc;
  try {
    doc = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(doc, path);
}

}  // namespace iss
