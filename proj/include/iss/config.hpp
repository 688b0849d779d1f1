#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include "iss/hybridsim.hpp"
#include "iss/impulseseq.hpp"
#include "iss/lyapcheck.hpp"
#include "iss/serialize.hpp"
#include "iss/smallgain.hpp"

namespace iss {

/// Load or validation failure; `pointer()` is the JSON pointer of the
/// offending value ("" for the document itself).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string pointer, const std::string& message)
      : std::runtime_error((pointer.empty() ? std::string("/") : pointer) + ": " + message),
        pointer_(std::move(pointer)) {}
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

struct CertificateDecl {
  std::string system;
  LyapunovCandidate candidate;
  SamplePlan plan;
  double tol = 1e-6;
};

struct NetworkDecl {
  std::string system;
  GainNetwork net;
  std::optional<std::vector<PowerMax>> path;
  std::vector<double> direction;
};

struct ProjectConfig {
  std::string source;
  std::uint64_t seed = 1;
  std::map<std::string, SystemDef> systems;
  std::map<std::string, CertificateDecl> certificates;
  std::map<std::string, ImpulseSequence> sequences;
  std::map<std::string, DwellTimeClass> classes;
  std::map<std::string, NetworkDecl> networks;
};

/// Reads and validates a config file.  Throws ConfigError.
ProjectConfig load_config(const std::string& path);
ProjectConfig parse_config(const json& doc, const std::string& source = "<memory>");

/// A function given as an expression string or {"expr", "var", "class"}.
/// Declared classes are validated on the default grid.
ScalarFn parse_function(const json& j, const std::string& pointer, const std::string& default_var = "r",
                        FnClass default_class = FnClass::None);

DwellTimeClass parse_class(const json& j, const std::string& pointer);

}  // namespace iss
