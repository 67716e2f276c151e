#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace rot::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsageOrIo = 1;
inline constexpr int kNotConverged = 2;
inline constexpr int kDiverged = 3;

/// Runs one subcommand. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rot::cli
