#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lbdp::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_usage = 2;
inline constexpr int exit_resource_cap = 3;
inline constexpr int exit_nonconvergence = 4;

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lbdp::cli
