#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mangle::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1, // verification failure, or the program trapped
    kUsage = 2,   // bad flags, unreadable or unparsable input
    kDeadlock = 3,
};

/// Entry point for the `mangle` tool. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace mangle::cli
