#pragma once

#include <iosfwd>

namespace msmt::cli {

// Exit statuses of the command-line tool.
enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kIo = 3,
  kData = 4,
  kNumerical = 5,
};

// Runs `msmt <subcommand> ...`. Results go to `out` (or files named by --out),
// errors to `err` as one JSON object per line.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace msmt::cli
