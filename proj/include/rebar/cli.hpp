#pragma once

#include <string>
#include <vector>

namespace rebar {

/// Exit codes by error category.
enum ExitCode : int {
    kExitOk = 0,
    kExitUnexpected = 1,
    kExitConfig = 2,
    kExitFormat = 3,
    kExitInvalid = 4,
    kExitMissing = 5,
    kExitIo = 6,
    kExitNumeric = 7,
};

/// Runs one command line (without the program name). Errors are printed to
/// stderr and mapped to an exit code.
int run_cli(const std::vector<std::string>& args);

}  // namespace rebar
