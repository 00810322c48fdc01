#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace audit::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kBackendFailure = 3,
  kEmptyData = 4,
};

// Runs one command line (args[0] is the program name). Output goes to
// `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Stops a `serve` command running on another thread.
void stop_serving();

}  // namespace audit::cli
