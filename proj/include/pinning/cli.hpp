#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "pinning/config.hpp"

namespace pinning {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInvalid = 2;
inline constexpr int kExitBudget = 3;

// Runs one subcommand on a resolved configuration and writes its reports
// into out_dir. Throws on failure; run_cli maps exceptions to exit codes.
std::vector<std::filesystem::path> run_command(const std::string& command, const RunConfig& config,
                                               const std::filesystem::path& out_dir, std::ostream& log);

// Full command line (without argv[0]). Returns the process exit status.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

const std::vector<std::string>& command_names();

}  // namespace pinning
