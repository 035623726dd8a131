#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cellsense::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

// Runs one subcommand. `args` excludes the program name. Machine output goes
// to `out` (or to the files named by the flags), diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cellsense::cli
