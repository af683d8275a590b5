#pragma once

#include <iosfwd>

namespace pei::cli {

enum ExitCode : int {
  kOk = 0,
  kOther = 1,
  kConfig = 2,
  kPrerequisite = 3,
  kTransport = 4,
  kTraining = 5,
};

/// Parses argv, runs one subcommand and maps failures to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pei::cli
