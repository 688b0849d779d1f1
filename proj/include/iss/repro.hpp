#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iss/serialize.hpp"

namespace iss {

struct ReproRow {
  std::string name;
  std::string expected;
  std::string observed;
  bool pass = false;
};

struct ReproReport {
  std::uint64_t seed = 0;
  std::vector<ReproRow> rows;
  bool all_pass() const;
  std::string table() const;
  json to_json() const;
};

/// Every reproduction of the bundled examples, plus load-and-run of each
/// *.json config in `config_dir` (sorted by file name).
ReproReport run_repro(std::uint64_t seed, const std::string& config_dir);

/// Closed form of int_y^{y+(1+a)y^3} dx / ((1-a) x^3).
double cubic_example_integral(double y, double a);

}  // namespace iss
