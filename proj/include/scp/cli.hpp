#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace scp {

inline constexpr const char* kToolkitVersion = "0.1.0";

/// Process exit codes of the `scp` tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,         // bad flags, bad parameters, missing inputs
  kExitData = 3,          // malformed or inconsistent files
  kExitNumerical = 4,     // divergence, failed decompositions
  kExitUnknownClass = 5,  // mask class without bank statistics
};

/// Runs one subcommand. `args` excludes the program name. Logs go to `out`,
/// diagnostics to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv);

}  // namespace scp
