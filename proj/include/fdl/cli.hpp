#pragma once

#include <string>
#include <vector>

namespace fdl {

/// Runs one CLI invocation. `args` excludes the program name. Exit codes:
/// 0 success, 1 runtime failure, 2 usage/config error.
int run_cli(std::vector<std::string> args);
int run_cli(int argc, const char* const* argv);

}  // namespace fdl
