#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace patchproto {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Entry point of the patchproto command-line tool. Machine-readable JSON goes
// to `out` (or the --out file), human-readable progress and errors to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace patchproto
