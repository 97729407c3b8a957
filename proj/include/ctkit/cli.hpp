#pragma once

#include <ostream>
#include <stdexcept>

namespace ctkit {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;    // bad flags or configuration
inline constexpr int kExitRuntime = 2;  // data, I/O or numerical failure

/// Bad combination of command-line flags.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/**
 * Entry point of the ctkit tool: generate, train, reconstruct, evaluate and
 * config subcommands. Normal output goes to `out` (also the target of
 * `--out -`), diagnostics to `err`. Returns the process exit code.
 */
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ctkit
