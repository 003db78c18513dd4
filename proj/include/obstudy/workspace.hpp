#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "obstudy/error.hpp"

namespace obstudy {

/// Process exit statuses of the command-line tool.
namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int input = 2;
inline constexpr int balance_fail = 3;
inline constexpr int blinding = 4;
inline constexpr int numerical = 5;
}  // namespace exit_code

int exit_code_for(ErrorKind kind);

/// Runs one command line (without the program name). Reports go to `out`,
/// diagnostics to `err`; the return value is the process exit status.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace obstudy
