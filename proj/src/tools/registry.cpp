#include "dxagent/tools/registry.hpp"

#include <future>
#include <thread>

#include "dxagent/core/error.hpp"
#include "dxagent/core/util.hpp"
#include "dxagent/tools/schema.hpp"

namespace dxagent::tools {

using nlohmann::json;

std::string_view to_string(BackendKind kind) noexcept {
    switch (kind) {
        case BackendKind::external_process: return "external_process";
        case BackendKind::fixture: return "fixture";
        case BackendKind::native: return "native";
        case BackendKind::stub: return "stub";
    }
    return "native";
}

BackendKind parse_backend_kind(std::string_view text) {
    for (auto k : {BackendKind::external_process, BackendKind::fixture, BackendKind::native, BackendKind::stub})
        if (to_string(k) == text) return k;
    fail(ErrorCode::ConfigInvalid, "unknown backend kind '" + std::string(text) + "'");
}

void to_json(json& j, const ToolSpec& spec) {
    j = json{{"name", spec.name},
             {"purpose", spec.purpose},
             {"input_schema", spec.input_schema},
             {"output_schema", spec.output_schema},
             {"parameter_space", spec.parameter_space},
             {"backend", to_string(spec.backend)}};
}

void ToolRegistry::register_tool(ToolSpec spec, std::shared_ptr<ToolBackend> backend) {
    if (spec.name.empty()) fail(ErrorCode::InvalidArgument, "tool name must be non-empty");
    if (tools_.count(spec.name)) fail(ErrorCode::DuplicateName, "tool '" + spec.name + "' already registered");
    if (!backend) fail(ErrorCode::InvalidArgument, "tool '" + spec.name + "' has no backend");
    schema::check(spec.input_schema);
    schema::check(spec.output_schema);
    order_.push_back(spec.name);
    std::string name = spec.name;
    tools_.emplace(std::move(name), Entry{std::move(spec), std::move(backend)});
}

const ToolSpec* ToolRegistry::find(std::string_view name) const {
    auto it = tools_.find(name);
    return it == tools_.end() ? nullptr : &it->second.spec;
}

std::shared_ptr<ToolBackend> ToolRegistry::backend(std::string_view name) const {
    auto it = tools_.find(name);
    return it == tools_.end() ? nullptr : it->second.backend;
}

std::vector<const ToolSpec*> ToolRegistry::specs() const {
    std::vector<const ToolSpec*> out;
    for (const auto& n : order_) out.push_back(&tools_.find(n)->second.spec);
    return out;
}

json ToolRegistry::manifest() const {
    json tools = json::array();
    for (const auto* s : specs()) tools.push_back(*s);
    return json{{"tools", tools}};
}

std::string action_fingerprint(std::string_view tool, const json& parameters) {
    // json objects keep keys sorted, so dump() is canonical
    return fnv1a_hex(std::string(tool) + "\x1f" + parameters.dump());
}

ResolvedAction make_action(std::string tool, json parameters) {
    ResolvedAction a;
    a.fingerprint = action_fingerprint(tool, parameters);
    a.tool = std::move(tool);
    a.parameters = std::move(parameters);
    return a;
}

void to_json(json& j, const ResolvedAction& a) {
    j = json{{"tool", a.tool}, {"parameters", a.parameters}, {"fingerprint", a.fingerprint}};
}

void from_json(const json& j, ResolvedAction& a) {
    a.tool = j.at("tool").get<std::string>();
    a.parameters = j.value("parameters", json::object());
    a.fingerprint = j.value("fingerprint", action_fingerprint(a.tool, a.parameters));
}

std::string_view to_string(OutcomeStatus s) noexcept {
    switch (s) {
        case OutcomeStatus::ok: return "ok";
        case OutcomeStatus::failed: return "failed";
        case OutcomeStatus::skipped: return "skipped";
    }
    return "skipped";
}

void to_json(json& j, const ToolOutcome& o) {
    j = json{{"tool", o.tool},
             {"status", to_string(o.status)},
             {"payload", o.payload},
             {"diagnostics", o.diagnostics},
             {"attempts", o.attempts},
             {"wall_time_s", o.wall_time_s},
             {"fingerprint", o.fingerprint},
             {"parameters", o.parameters}};
}

void from_json(const json& j, ToolOutcome& o) {
    o.tool = j.at("tool").get<std::string>();
    const std::string s = j.at("status").get<std::string>();
    o.status = s == "ok" ? OutcomeStatus::ok : s == "failed" ? OutcomeStatus::failed : OutcomeStatus::skipped;
    o.payload = j.value("payload", json::object());
    o.diagnostics = j.value("diagnostics", "");
    o.attempts = j.value("attempts", 0);
    o.wall_time_s = j.value("wall_time_s", 0.0);
    o.fingerprint = j.value("fingerprint", "");
    o.parameters = j.value("parameters", json::object());
}

ToolOutcome execute_action(const ToolRegistry& registry, const ResolvedAction& action, const RetryPolicy& policy,
                           const ToolContext& ctx, const EventSink& sink) {
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    ToolOutcome out;
    out.tool = action.tool;
    out.fingerprint = action.fingerprint;
    out.parameters = action.parameters;

    auto finish = [&](OutcomeStatus status) {
        out.status = status;
        out.wall_time_s = std::chrono::duration<double>(clock::now() - start).count();
        emit(sink, "tools", status == OutcomeStatus::ok ? EventKind::tool_ok : EventKind::tool_failed,
             action.tool + " attempts=" + std::to_string(out.attempts) + (out.diagnostics.empty() ? "" : ": " + out.diagnostics));
        return out;
    };

    const ToolSpec* spec = registry.find(action.tool);
    auto backend = registry.backend(action.tool);
    if (!spec || !backend) {
        out.diagnostics = "UnknownTool: " + action.tool;
        out.attempts = 1;
        return finish(OutcomeStatus::failed);
    }
    if (auto errs = schema::validate(spec->input_schema, action.parameters); !errs.empty()) {
        out.diagnostics = "BadParameters: " + errs.front();
        out.attempts = 1;
        return finish(OutcomeStatus::failed);
    }

    const int max_attempts = std::max(1, policy.max_attempts);
    std::vector<std::string> failures;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        if (attempt > 1 && policy.time_budget && clock::now() - start >= *policy.time_budget) {
            failures.push_back("time budget of " + std::to_string(policy.time_budget->count()) + " ms reached");
            break;
        }
        out.attempts = attempt;
        std::string why;
        try {
            json payload = backend->run(action.parameters, ctx);
            auto errs = schema::validate(spec->output_schema, payload);
            if (errs.empty()) {
                out.payload = std::move(payload);
                out.diagnostics.clear();
                return finish(OutcomeStatus::ok);
            }
            why = "output schema: " + errs.front();
        } catch (const std::exception& e) {
            why = e.what();
        }
        failures.push_back("attempt " + std::to_string(attempt) + ": " + why);
        if (attempt < max_attempts) {
            emit(sink, "tools", EventKind::retry, action.tool + " " + failures.back());
            if (policy.backoff.count() > 0) std::this_thread::sleep_for(policy.backoff);
        }
    }
    for (const auto& f : failures) out.diagnostics += (out.diagnostics.empty() ? "" : "; ") + f;
    return finish(OutcomeStatus::failed);
}

std::vector<ToolOutcome> execute_actions(const ToolRegistry& registry, const std::vector<ResolvedAction>& actions,
                                         const RetryPolicy& policy, const ToolContext& ctx, const EventSink& sink,
                                         std::size_t max_parallel) {
    std::vector<ToolOutcome> outcomes(actions.size());
    max_parallel = std::max<std::size_t>(1, max_parallel);
    for (std::size_t begin = 0; begin < actions.size(); begin += max_parallel) {
        const std::size_t end = std::min(actions.size(), begin + max_parallel);
        std::vector<std::future<ToolOutcome>> batch;
        for (std::size_t i = begin; i < end; ++i)
            batch.push_back(std::async(std::launch::async, [&, i] { return execute_action(registry, actions[i], policy, ctx, sink); }));
        for (std::size_t i = begin; i < end; ++i) outcomes[i] = batch[i - begin].get();
    }
    return outcomes;
}

}  // namespace dxagent::tools
