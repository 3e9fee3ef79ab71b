#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace riskctl::cli {

enum ExitCode : int {
    kOk = 0,
    kConfigError = 1,
    kVerdictFail = 2,
    kNumericalFailure = 3,
};

/// Full command-line entry point. `args` excludes the program name.
/// Human-readable output goes to `out`; diagnostics and log lines to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace riskctl::cli
