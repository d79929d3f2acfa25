#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace elkg {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRejected = 3;

/// Runs one command line (`args` excludes the program name). Results go to
/// `out`, diagnostics to `err`. `serve` blocks until SIGINT or SIGTERM.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace elkg
