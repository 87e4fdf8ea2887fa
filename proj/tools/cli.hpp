#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vigil::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs the `vigil` command line. Diagnostics go to `err`; reports and
/// generated traces written to "-" go to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vigil::cli
