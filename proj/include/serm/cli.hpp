#pragma once

#include <ostream>

namespace serm {

// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitUnsafeOverwrite = 3,
  kExitBackend = 4,
  kExitCorrupt = 5,
};

// Entry point shared by tools/serm and the in-process tests.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace serm
