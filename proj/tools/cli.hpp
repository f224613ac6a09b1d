#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace eioctl::cli {

// Exit codes.
inline constexpr int kPass = 0;
inline constexpr int kFailure = 1;
inline constexpr int kUsage = 2;

/// Runs one command line (args[0] is the program name) against the given
/// streams and returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace eioctl::cli
