#include "dxagent/tools/process.hpp"

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <thread>

#include "dxagent/core/error.hpp"

extern char** environ;

namespace dxagent::tools {

std::vector<std::string> render_command(const std::vector<std::string>& argv_template,
                                        const std::map<std::string, std::string>& values) {
    if (argv_template.empty()) fail(ErrorCode::ConfigInvalid, "empty command template");
    std::vector<std::string> out;
    for (const auto& arg : argv_template) {
        std::string rendered;
        for (std::size_t i = 0; i < arg.size();) {
            if (arg[i] != '{') {
                rendered += arg[i++];
                continue;
            }
            const auto close = arg.find('}', i);
            if (close == std::string::npos) fail(ErrorCode::ConfigInvalid, "unterminated placeholder in '" + arg + "'");
            const std::string key = arg.substr(i + 1, close - i - 1);
            auto it = values.find(key);
            if (it == values.end()) fail(ErrorCode::ConfigInvalid, "unknown placeholder {" + key + "}");
            rendered += it->second;
            i = close + 1;
        }
        out.push_back(std::move(rendered));
    }
    return out;
}

ProcessResult run_process(const std::vector<std::string>& argv, const std::filesystem::path& log_path,
                          std::chrono::milliseconds timeout) {
    if (argv.empty()) fail(ErrorCode::InvalidArgument, "empty argv");
    std::vector<char*> cargv;
    for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    const std::string log = log_path.string();
    posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    posix_spawn_file_actions_adddup2(&actions, STDOUT_FILENO, STDERR_FILENO);
    posix_spawn_file_actions_addopen(&actions, STDIN_FILENO, "/dev/null", O_RDONLY, 0);

    pid_t pid = 0;
    const int rc = posix_spawnp(&pid, cargv[0], &actions, nullptr, cargv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0) fail(ErrorCode::BackendProcessFailed, "cannot start '" + argv[0] + "': " + std::strerror(rc));

    ProcessResult result;
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    int status = 0;
    while (true) {
        const pid_t w = waitpid(pid, &status, WNOHANG);
        if (w == pid) break;
        if (w < 0 && errno != EINTR) fail(ErrorCode::BackendProcessFailed, "waitpid failed");
        if (std::chrono::steady_clock::now() >= deadline) {
            kill(pid, SIGKILL);
            waitpid(pid, &status, 0);
            result.timed_out = true;
            break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    if (result.timed_out) result.exit_code = -1;
    else if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
    else result.exit_code = 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);

    std::ifstream in(log_path, std::ios::binary);
    result.log.assign(std::istreambuf_iterator<char>(in), {});
    if (result.log.size() > 4000) result.log = result.log.substr(result.log.size() - 4000);
    return result;
}

}  // namespace dxagent::tools
