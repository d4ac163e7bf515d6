#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kgh::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kInternal = 1;
inline constexpr int kInvalid = 2;
inline constexpr int kService = 3;
inline constexpr int kProtocol = 4;

// Runs `kgh <args...>` (args excludes the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace kgh::cli
