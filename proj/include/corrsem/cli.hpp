#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace corrsem {

/// Exit statuses of the command-line front end.
enum ExitStatus : int { exit_ok = 0, exit_user_error = 1, exit_numerical_failure = 2 };

/// Runs `validate <model>`, `fit <model> <data>` or `simulate <config>`.
/// `args` excludes the program name. Reports go to `out` unless --out names a
/// directory, in which case report.json and report.txt are written there.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace corrsem
