#pragma once

#include <iosfwd>

namespace iss {

enum ExitCode : int { kExitOk = 0, kExitViolated = 1, kExitUsage = 2 };

/// Parses argv and runs one subcommand.  Reports go to `out`, diagnostics to
/// `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace iss
