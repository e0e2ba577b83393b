#pragma once

#include <ostream>

namespace p2p2g {

/// Exit codes of the command-line front end.
inline constexpr int kExitConverged = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitMaxIters = 2;

/// Environment variable that replaces the default output directory.
inline constexpr const char* kOutEnv = "P2P2G_OUT";

/// Subcommands: run, compare, validate.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace p2p2g
