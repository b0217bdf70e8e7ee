#pragma once

#include <iosfwd>

namespace wfm {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr const char* kOutputDirEnv = "WFM_OUTPUT_DIR";

enum ExitCode : int {
  kExitSuccess = 0,
  kExitUsage = 1,
  kExitDataError = 2,
  kExitNumericalFailure = 3,
};

/// Entry point behind the `wfm` executable. Subcommands: simulate, optimize,
/// evaluate, gen-synthetic. Returns one of ExitCode.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace wfm
