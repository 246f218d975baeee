#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace srm::cli {

/// Process exit codes.
enum ExitCode : int {
  kSuccess = 0,
  kFailure = 1,
  kUsage = 2,
  kStrictDiagnostics = 3,
  kDataValidation = 4,
};

/// Runs the tool with argv-style arguments (args[0] is the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace srm::cli
