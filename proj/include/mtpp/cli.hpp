#pragma once

#include <string>
#include <vector>

namespace mtpp::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Entry point of the `mtpp` tool. Returns 0 on success, 1 on input errors
/// and 2 on numerical failures.
int run(int argc, const char* const* argv);
/// args[0] is the program name, as in argv.
int run(const std::vector<std::string>& args);

}  // namespace mtpp::cli
