#pragma once

#include <iosfwd>

namespace brpatch {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
    kExitOk = 0,
    kExitOther = 1,
    kExitConfig = 2,
    kExitInfeasible = 3,
    kExitBackend = 4,
    kExitIo = 5,
    kExitTraining = 6,
};

/// Entry point of the `brpatch` tool. Failures print exactly one line,
/// `brpatch: error[<category>]: <message>`, to `err`.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace brpatch
