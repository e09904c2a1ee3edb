#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fewtreat::cli {

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kInputError = 1;
inline constexpr int kInternalError = 2;

/// Runs the command line `args` (args[0] is the program name). Results go to
/// files named by --output, or to `out`; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

}  // namespace fewtreat::cli
