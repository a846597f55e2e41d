#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace lit {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFault = 1;
inline constexpr int kExitUsage = 2;

// Runs one `lit` invocation; args excludes the program name. Reports go to
// `out`, diagnostics to `err`. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// 210173952 -> "210,173,952"
std::string with_thousands(std::int64_t value);

}  // namespace lit
