#pragma once

#include <iosfwd>

namespace rsctl {

// Exit codes, also listed in the README.
enum ExitCode : int {
  exit_ok = 0,
  exit_internal = 1,
  exit_usage = 2,
  exit_unknown_fixture = 3,
  exit_bad_config = 4,
  exit_solver_failure = 5,
  exit_verification_failed = 6,
};

inline constexpr int schema_version = 1;

// Parses argv (argv[0] is the program name), runs one subcommand and writes
// its artifacts. The JSON summary also goes to out; diagnostics to err.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rsctl
