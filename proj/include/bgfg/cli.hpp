#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bgfg {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

/// `args` excludes the program name. Results go to `out`, the resolved
/// configuration and diagnostics to `err`.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_command(int argc, const char* const* argv);

}  // namespace bgfg
