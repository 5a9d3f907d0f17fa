#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace agebranch::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;  ///< a check failed under --ci
inline constexpr int kExitUsage = 2;        ///< bad flags or config
inline constexpr int kExitRuntime = 3;      ///< solver, simulator or I/O failure

/// Runs one subcommand; `args` excludes the program name. Output files are
/// written only after the whole run succeeded, and only below --out.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace agebranch::cli
