#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace curator::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Parses `args` (without the program name) and runs one subcommand.
/// Human output goes to `out`; the resolved configuration and any error (a
/// single JSON object line) go to `err`. Returns 0, 1 (operational failure)
/// or 2 (usage or configuration error).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace curator::cli
