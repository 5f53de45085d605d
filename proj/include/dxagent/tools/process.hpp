#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dxagent::tools {

/// Replaces {name} placeholders in each argv element. No shell is involved,
/// so substituted values can never inject extra arguments or commands.
/// Unknown or unterminated placeholders throw ConfigInvalid.
std::vector<std::string> render_command(const std::vector<std::string>& argv_template,
                                        const std::map<std::string, std::string>& values);

struct ProcessResult {
    int exit_code = 0;
    bool timed_out = false;
    std::string log;  // combined stdout/stderr, truncated
};

/// Spawns argv[0] (PATH lookup) with stdout/stderr captured to log_path.
ProcessResult run_process(const std::vector<std::string>& argv, const std::filesystem::path& log_path,
                          std::chrono::milliseconds timeout);

}  // namespace dxagent::tools
