#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace thermal::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;  // bad flags, config file, unreadable input, unwritable output
inline constexpr int kExitData = 2;    // input parsed but unusable

/// Runs the command line `args` (without the program name) and returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace thermal::cli
