#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dxagent/core/events.hpp"

namespace dxagent::tools {

enum class BackendKind { external_process, fixture, native, stub };

std::string_view to_string(BackendKind kind) noexcept;
BackendKind parse_backend_kind(std::string_view text);

struct ToolSpec {
    std::string name;
    std::string purpose;
    nlohmann::json input_schema;
    nlohmann::json output_schema;
    nlohmann::json parameter_space = nlohmann::json::object();  // documented ranges/defaults
    BackendKind backend = BackendKind::native;
};

void to_json(nlohmann::json& j, const ToolSpec& spec);

struct ToolContext {
    std::filesystem::path work_dir;  // scratch space for external backends
};

class ToolBackend {
public:
    virtual ~ToolBackend() = default;
    /// Returns the payload or throws dxagent::Error. Must be reentrant.
    virtual nlohmann::json run(const nlohmann::json& parameters, const ToolContext& ctx) = 0;
};

/// Write-once during startup, then shared read-only.
class ToolRegistry {
public:
    /// Throws DuplicateName, or InvalidSchema if either schema fails its self-check.
    void register_tool(ToolSpec spec, std::shared_ptr<ToolBackend> backend);

    const ToolSpec* find(std::string_view name) const;
    std::shared_ptr<ToolBackend> backend(std::string_view name) const;
    std::vector<const ToolSpec*> specs() const;  // registration order
    std::size_t size() const noexcept { return order_.size(); }

    /// The usage set: one document per tool.
    nlohmann::json manifest() const;

private:
    struct Entry {
        ToolSpec spec;
        std::shared_ptr<ToolBackend> backend;
    };
    std::map<std::string, Entry, std::less<>> tools_;
    std::vector<std::string> order_;
};

/// A validated tool call ready for dispatch.
struct ResolvedAction {
    std::string tool;
    nlohmann::json parameters = nlohmann::json::object();
    std::string fingerprint;  // stable hash of tool + canonical parameters

    bool operator==(const ResolvedAction&) const = default;
};

std::string action_fingerprint(std::string_view tool, const nlohmann::json& parameters);
ResolvedAction make_action(std::string tool, nlohmann::json parameters);

void to_json(nlohmann::json& j, const ResolvedAction& a);
void from_json(const nlohmann::json& j, ResolvedAction& a);

struct RetryPolicy {
    int max_attempts = 3;
    std::optional<double> cost_budget_usd;  // tool backends here carry no per-call cost
    std::optional<std::chrono::milliseconds> time_budget;
    std::chrono::milliseconds backoff{0};
};

enum class OutcomeStatus { ok, failed, skipped };

std::string_view to_string(OutcomeStatus s) noexcept;

struct ToolOutcome {
    std::string tool;
    OutcomeStatus status = OutcomeStatus::skipped;
    nlohmann::json payload = nlohmann::json::object();
    std::string diagnostics;
    int attempts = 0;
    double wall_time_s = 0.0;
    std::string fingerprint;
    nlohmann::json parameters = nlohmann::json::object();
};

void to_json(nlohmann::json& j, const ToolOutcome& o);
void from_json(const nlohmann::json& j, ToolOutcome& o);

/// Never throws: backend errors and output-schema violations are retried
/// under the policy, and terminal failure is reported as status=failed.
ToolOutcome execute_action(const ToolRegistry& registry, const ResolvedAction& action, const RetryPolicy& policy,
                           const ToolContext& ctx, const EventSink& sink = {});

/// Runs independent actions concurrently; outcomes come back in plan order.
std::vector<ToolOutcome> execute_actions(const ToolRegistry& registry, const std::vector<ResolvedAction>& actions,
                                         const RetryPolicy& policy, const ToolContext& ctx, const EventSink& sink = {},
                                         std::size_t max_parallel = 4);

}  // namespace dxagent::tools
