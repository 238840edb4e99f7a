#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace lumamba::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

// args excludes the program name. Verb output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lumamba::cli
