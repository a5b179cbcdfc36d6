#pragma once

#include <string>
#include <vector>

namespace proxtune {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDiverged = 3;
inline constexpr int kExitIo = 4;
inline constexpr int kExitArchiveMismatch = 5;

// Full CLI entry point; `args` excludes the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace proxtune
