#pragma once

#include <string>
#include <vector>

namespace gradsurgeon::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumerical = 2;

/// Runs one invocation; `args` excludes the program name. Never throws.
int run(const std::vector<std::string>& args);

}  // namespace gradsurgeon::cli
