#pragma once

// Command implementations behind the moncirc executable.

#include <ostream>
#include <string>
#include <vector>

namespace moncirc::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kDataError = 3, kNumeric = 4 };

/// Runs one command line (args excludes the program name). Results go to
/// `out`; failures print a single "error: <kind>: <message>" line to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace moncirc::cli
