#pragma once

#include <exception>
#include <iosfwd>

namespace unitsynth::pipeline {

enum ExitCode : int {
    kExitOk = 0,
    kExitInternal = 1,
    kExitConfig = 2,
    kExitInput = 3,
    kExitProvider = 4,
    kExitBudget = 5,
};

/// Maps an exception escaping a stage to the CLI exit code.
int exit_code_for(std::exception_ptr error);

/// The `unitsynth` command line. Reports go to `out`, diagnostics to `err`.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace unitsynth::pipeline
