#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace microast::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 2,
    kIo = 3,
    kSchema = 4,
};

/// Runs the command line tool with `args` (excluding the program name).
/// Regular output goes to `out`, diagnostics and usage to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace microast::cli
