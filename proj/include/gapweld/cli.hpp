#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace gapweld {

// Exit codes: 0 success, 1 validation error, 2 I/O error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;

// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gapweld
