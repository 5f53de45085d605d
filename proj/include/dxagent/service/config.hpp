#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "dxagent/llm/gateway.hpp"
#include "dxagent/service/engine.hpp"

namespace dxagent::service {

/// Service settings. File keys mirror the field names:
///   {"data_dir", "host", "port", "static_dir",
///    "provider": "mock" | "config",
///    "mock_script": path to a JSON list of mock steps,
///    "llm": gateway config (roles, pricing, retry),
///    "tools": tool registry config,
///    "threshold_table": path,
///    "planner": {"max_attempts"}, "aggregator": {"max_attempts"},
///    "tool_retry": {"max_attempts", "time_budget_ms", "backoff_ms"},
///    "max_parallel_tools"}
/// Environment overrides: DXAGENT_DATA_DIR, DXAGENT_HOST, DXAGENT_PORT,
/// DXAGENT_PROVIDER, DXAGENT_MOCK_SCRIPT, DXAGENT_STATIC_DIR.
struct ServiceConfig {
    std::filesystem::path data_dir = "dxagent-data";
    std::string host = "127.0.0.1";
    int port = 8080;
    std::optional<std::filesystem::path> static_dir;
    std::string provider = "mock";
    std::optional<std::filesystem::path> mock_script;
    nlohmann::json llm = nlohmann::json::object();
    nlohmann::json tools = nlohmann::json::object();
    std::optional<std::filesystem::path> threshold_table;
    int planner_attempts = 3;
    int aggregator_attempts = 3;
    tools::RetryPolicy tool_retry;
    std::size_t max_parallel_tools = 4;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Reads the process environment.
std::optional<std::string> process_env(const std::string& name);

/// Throws ConfigInvalid on unknown types or out-of-range values.
ServiceConfig parse_service_config(const nlohmann::json& j);

/// File (optional) then environment overrides.
ServiceConfig load_service_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env = process_env);

struct Runtime {
    std::shared_ptr<SessionStore> store;
    std::shared_ptr<const tools::ToolRegistry> registry;
    std::shared_ptr<llm::Gateway> gateway;
    std::shared_ptr<llm::MockProvider> mock;  // set for provider=mock
    std::shared_ptr<Engine> engine;
};

/// Wires the store, registry, gateway and engine from a configuration.
Runtime build_runtime(const ServiceConfig& config, EngineOptions extra = {});

}  // namespace dxagent::service
