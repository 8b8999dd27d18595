#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace scoremean::cli {

/// Environment variable holding the default for --threads.
inline constexpr const char* kThreadsEnv = "SCOREMEAN_THREADS";

/// Runs one command. `args` excludes the program name. Returns 0 on success,
/// 1 for invalid input or domain errors, 2 for numerical failures.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace scoremean::cli
