#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace oraclebo::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

/// Subcommands: bench, audio-sim, serve, profile-check. `args` excludes the program name.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

}  // namespace oraclebo::cli
