#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tsc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 2; // bad arguments, config, files or weights
inline constexpr int kExitRuntime = 3; // failure while simulating or writing

/// Runs `tscbench` with `args` (program name excluded).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace tsc::cli
