#pragma once

// Command-line driver. Subcommands: sim, fit-homography, fit-planes,
// benchmark, gen-fixtures. Exit codes: 0 success, 2 bad flags or unreadable
// input, 1 any other failure.

#include <iosfwd>
#include <string>
#include <vector>

namespace coral::cli {

inline constexpr int kSchemaVersion = 1;

/// Runs one command line, program name excluded.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace coral::cli
