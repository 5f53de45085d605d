#include "dxagent/service/config.hpp"

#include <cstdlib>

#include "dxagent/core/util.hpp"
#include "dxagent/tools/builtin.hpp"

namespace dxagent::service {

using nlohmann::json;

namespace {

json read_json_file(const std::filesystem::path& path, std::string_view what) {
    json j = json::parse(read_text_file(path), nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::ConfigInvalid, std::string(what) + " is not valid JSON: " + path.string());
    return j;
}

int to_port(const std::string& text) {
    try {
        std::size_t used = 0;
        const int p = std::stoi(text, &used);
        if (used == text.size() && p >= 0 && p <= 65535) return p;
    } catch (const std::exception&) {
    }
    fail(ErrorCode::ConfigInvalid, "port must be an integer in [0, 65535], got '" + text + "'");
}

}  // namespace

std::optional<std::string> process_env(const std::string& name) {
    if (const char* v = std::getenv(name.c_str()); v && *v) return std::string(v);
    return std::nullopt;
}

ServiceConfig parse_service_config(const json& j) {
    if (!j.is_object()) fail(ErrorCode::ConfigInvalid, "service config must be a JSON object");
    ServiceConfig c;
    try {
        if (j.contains("data_dir")) c.data_dir = j["data_dir"].get<std::string>();
        c.host = j.value("host", c.host);
        if (j.contains("port")) c.port = to_port(std::to_string(j["port"].get<int>()));
        if (j.contains("static_dir")) c.static_dir = j["static_dir"].get<std::string>();
        c.provider = j.value("provider", c.provider);
        if (j.contains("mock_script")) c.mock_script = j["mock_script"].get<std::string>();
        c.llm = j.value("llm", json::object());
        c.tools = j.value("tools", json::object());
        if (j.contains("threshold_table")) c.threshold_table = j["threshold_table"].get<std::string>();
        if (j.contains("planner")) c.planner_attempts = j["planner"].value("max_attempts", c.planner_attempts);
        if (j.contains("aggregator")) c.aggregator_attempts = j["aggregator"].value("max_attempts", c.aggregator_attempts);
        if (j.contains("tool_retry")) {
            const auto& t = j["tool_retry"];
            c.tool_retry.max_attempts = t.value("max_attempts", c.tool_retry.max_attempts);
            if (t.contains("time_budget_ms"))
                c.tool_retry.time_budget = std::chrono::milliseconds(t["time_budget_ms"].get<std::int64_t>());
            c.tool_retry.backoff = std::chrono::milliseconds(t.value("backoff_ms", std::int64_t{0}));
        }
        c.max_parallel_tools = j.value("max_parallel_tools", c.max_parallel_tools);
    } catch (const json::exception& e) {
        fail(ErrorCode::ConfigInvalid, std::string("service config: ") + e.what());
    }
    if (c.provider != "mock" && c.provider != "config")
        fail(ErrorCode::ConfigInvalid, "provider must be 'mock' or 'config', got '" + c.provider + "'");
    if (c.planner_attempts < 1 || c.aggregator_attempts < 1 || c.tool_retry.max_attempts < 1)
        fail(ErrorCode::ConfigInvalid, "max_attempts values must be >= 1");
    if (c.max_parallel_tools < 1) fail(ErrorCode::ConfigInvalid, "max_parallel_tools must be >= 1");
    return c;
}

ServiceConfig load_service_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env) {
    ServiceConfig c = file ? parse_service_config(read_json_file(*file, "config file")) : ServiceConfig{};
    if (auto v = env("DXAGENT_DATA_DIR")) c.data_dir = *v;
    if (auto v = env("DXAGENT_HOST")) c.host = *v;
    if (auto v = env("DXAGENT_PORT")) c.port = to_port(*v);
    if (auto v = env("DXAGENT_PROVIDER")) c.provider = *v;
    if (auto v = env("DXAGENT_MOCK_SCRIPT")) c.mock_script = *v;
    if (auto v = env("DXAGENT_STATIC_DIR")) c.static_dir = *v;
    if (c.provider != "mock" && c.provider != "config")
        fail(ErrorCode::ConfigInvalid, "provider must be 'mock' or 'config', got '" + c.provider + "'");
    return c;
}

Runtime build_runtime(const ServiceConfig& config, EngineOptions options) {
    Runtime rt;
    rt.store = std::make_shared<SessionStore>(config.data_dir);
    rt.registry = std::make_shared<const tools::ToolRegistry>(tools::make_default_registry(config.tools));

    auto ledger = std::make_shared<llm::CostLedger>();
    if (config.provider == "mock") {
        std::vector<llm::MockProvider::Step> steps;
        if (config.mock_script) steps = llm::MockProvider::load_script(read_json_file(*config.mock_script, "mock script"));
        rt.mock = std::make_shared<llm::MockProvider>(std::move(steps));
        rt.gateway = llm::make_mock_gateway(rt.mock, ledger);
    } else {
        rt.gateway = std::make_shared<llm::Gateway>(llm::parse_gateway_config(config.llm), ledger);
    }

    if (config.threshold_table)
        options.table = std::make_shared<const guideline::ThresholdTable>(
            guideline::parse_threshold_table(read_json_file(*config.threshold_table, "threshold table")));
    options.planner.max_attempts = config.planner_attempts;
    options.aggregator.max_attempts = config.aggregator_attempts;
    options.tool_policy = config.tool_retry;
    options.max_parallel_tools = config.max_parallel_tools;
    rt.engine = std::make_shared<Engine>(rt.store, rt.registry, rt.gateway, std::move(options));
    return rt;
}

}  // namespace dxagent::service
