#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace refrec::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command line (args excludes the program name). Machine-readable
/// output goes to `out`, diagnostics to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Nearest known subcommand names for a mistyped one.
std::vector<std::string> suggest_subcommands(const std::string& typed);

}  // namespace refrec::cli
