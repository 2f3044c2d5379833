#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ceiling::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// The `ceiling` command line: train, eval and benchmark subcommands. args[0] is the
// program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ceiling::cli
