#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ngfreg {

enum ExitCode : int { exit_ok = 0, exit_usage = 2, exit_io = 3, exit_numerical = 4 };

// Runs one command. `args` excludes the program name. Diagnostics go to
// `err`, progress and help text to `out`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ngfreg
