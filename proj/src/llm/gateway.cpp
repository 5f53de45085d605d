#include "dxagent/llm/gateway.hpp"

#include <cstdlib>
#include <fstream>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "dxagent/core/util.hpp"

namespace dxagent::llm {

using nlohmann::json;

std::string_view to_string(Message::Kind kind) noexcept {
    switch (kind) {
        case Message::Kind::system: return "system";
        case Message::Kind::user: return "user";
        case Message::Kind::assistant: return "assistant";
    }
    return "user";
}

void raise_for_status(int status, const std::string& body) {
    if (status >= 200 && status < 300) return;
    const std::string snippet = body.substr(0, 300);
    if (status == 401 || status == 403) fail(ErrorCode::AuthFailure, "provider rejected credentials (HTTP " + std::to_string(status) + ")");
    const std::string lower = to_lower(body);
    if (status == 413 || lower.find("context_length") != std::string::npos ||
        lower.find("maximum context length") != std::string::npos)
        fail(ErrorCode::ContextTooLong, "prompt exceeds the model context window: " + snippet);
    if (status == 408 || status == 429 || status >= 500) throw TransientError("HTTP " + std::to_string(status) + ": " + snippet);
    fail(ErrorCode::ProviderUnavailable, "HTTP " + std::to_string(status) + ": " + snippet);
}

// ---------------------------------------------------------------- HTTP adapter

json HttpChatProvider::build_request(const RoleConfig& config, const std::vector<Message>& messages) {
    json msgs = json::array();
    for (const auto& m : messages) msgs.push_back({{"role", to_string(m.kind)}, {"content", m.text}});
    return {{"model", config.model_name},
            {"messages", std::move(msgs)},
            {"temperature", config.temperature},
            {"max_tokens", config.max_output_tokens}};
}

Completion HttpChatProvider::parse_response(const std::string& body) {
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) fail(ErrorCode::ProviderUnavailable, "provider returned non-JSON body");
    Completion c;
    try {
        const auto& content = j.at("choices").at(0).at("message").at("content");
        c.text = content.is_null() ? "" : content.get<std::string>();
        if (j.contains("usage") && j["usage"].is_object()) {
            c.usage.input_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
            c.usage.output_tokens = j["usage"].value("completion_tokens", std::int64_t{0});
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::ProviderUnavailable, std::string("unexpected response shape: ") + e.what());
    }
    return c;
}

Completion HttpChatProvider::send(const RoleConfig& config, const std::vector<Message>& messages) {
    if (config.endpoint.empty()) fail(ErrorCode::ConfigInvalid, "no endpoint for " + config.provider_id);
    std::string key;
    if (!config.credentials_ref.empty()) {
        const char* v = std::getenv(config.credentials_ref.c_str());
        if (!v || !*v) fail(ErrorCode::AuthFailure, "environment variable " + config.credentials_ref + " is not set");
        key = v;
    }

    const auto scheme_end = config.endpoint.find("://");
    if (scheme_end == std::string::npos) fail(ErrorCode::ConfigInvalid, "endpoint is not a URL: " + config.endpoint);
    const auto path_start = config.endpoint.find('/', scheme_end + 3);
    const std::string origin = config.endpoint.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : config.endpoint.substr(path_start);

    httplib::Client client(origin);
    const auto timeout = std::chrono::milliseconds(config.timeout_ms);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(), 0);
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(), 0);
    httplib::Headers headers;
    if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);

    auto res = client.Post(path, headers, build_request(config, messages).dump(), "application/json");
    if (!res) throw TransientError("transport error: " + httplib::to_string(res.error()));
    raise_for_status(res->status, res->body);
    return parse_response(res->body);
}

// ---------------------------------------------------------------- mock

MockProvider::MockProvider(std::vector<Step> script) : script_(script.begin(), script.end()) {}

void MockProvider::push(Step step) {
    std::lock_guard lock(mu_);
    script_.push_back(std::move(step));
}

Completion MockProvider::send(const RoleConfig&, const std::vector<Message>& messages) {
    std::string haystack;
    for (const auto& m : messages) {
        haystack += m.text;
        haystack += '\n';
    }
    std::lock_guard lock(mu_);
    ++calls_;
    for (auto it = script_.begin(); it != script_.end(); ++it) {
        if (!it->match.empty() && haystack.find(it->match) == std::string::npos) continue;
        Step step = *it;
        if (!step.sticky) script_.erase(it);
        if (step.status) raise_for_status(*step.status, step.reply);
        return {step.reply, step.usage};
    }
    fail(ErrorCode::ProviderUnavailable, "mock script exhausted");
}

std::size_t MockProvider::remaining() const {
    std::lock_guard lock(mu_);
    return script_.size();
}

std::size_t MockProvider::calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

std::vector<MockProvider::Step> MockProvider::load_script(const json& j) {
    const json& steps = j.is_object() ? j.at("steps") : j;
    if (!steps.is_array()) fail(ErrorCode::ConfigInvalid, "mock script must be an array of steps");
    std::vector<Step> out;
    for (const auto& s : steps) {
        Step step;
        step.match = s.value("match", "");
        step.reply = s.at("reply").is_string() ? s.at("reply").get<std::string>() : s.at("reply").dump();
        step.usage.input_tokens = s.value("input_tokens", std::int64_t{0});
        step.usage.output_tokens = s.value("output_tokens", std::int64_t{0});
        if (s.contains("status")) step.status = s.at("status").get<int>();
        step.sticky = s.value("sticky", false);
        out.push_back(std::move(step));
    }
    return out;
}

// ---------------------------------------------------------------- config

namespace {

RoleConfig parse_role_config(Role role, const json& j) {
    for (const char* forbidden : {"api_key", "key", "token", "secret", "password"}) {
        if (j.contains(forbidden))
            fail(ErrorCode::ConfigInvalid, std::string("literal credential '") + forbidden +
                                               "' in config; use credentials_ref to name an environment variable");
    }
    RoleConfig c;
    c.role = role;
    try {
        c.provider_id = j.value("provider_id", c.provider_id);
        c.model_name = j.value("model_name", c.model_name);
        c.endpoint = j.value("endpoint", "");
        c.credentials_ref = j.value("credentials_ref", "");
        c.temperature = j.value("temperature", 0.0);
        c.max_output_tokens = j.value("max_output_tokens", 2048);
        c.timeout_ms = j.value("timeout_ms", 120000);
    } catch (const json::exception& e) {
        fail(ErrorCode::ConfigInvalid, std::string(to_string(role)) + ": " + e.what());
    }
    if (c.temperature < 0) fail(ErrorCode::ConfigInvalid, "temperature must be >= 0");
    if (c.max_output_tokens < 1) fail(ErrorCode::ConfigInvalid, "max_output_tokens must be >= 1");
    return c;
}

std::string price_text(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number()) return v.dump();
    fail(ErrorCode::ConfigInvalid, "price must be a number or decimal string");
}

}  // namespace

GatewayConfig parse_gateway_config(const json& j) {
    if (!j.is_object()) fail(ErrorCode::ConfigInvalid, "gateway config must be an object");
    GatewayConfig cfg;
    const json roles = j.value("roles", json::object());
    cfg.reasoning_engine = parse_role_config(Role::reasoning_engine, roles.value("reasoning_engine", json::object()));
    cfg.aggregator = roles.contains("aggregator") ? parse_role_config(Role::aggregator, roles["aggregator"])
                                                  : parse_role_config(Role::aggregator, roles.value("reasoning_engine", json::object()));
    for (const auto& p : j.value("pricing", json::array())) {
        try {
            cfg.pricing.set(p.at("provider_id").get<std::string>(), p.at("model_name").get<std::string>(),
                            make_price(price_text(p.at("price_per_input_token")), price_text(p.at("price_per_output_token"))));
        } catch (const json::exception& e) {
            fail(ErrorCode::ConfigInvalid, std::string("pricing entry: ") + e.what());
        }
    }
    if (j.contains("retry")) {
        cfg.retry.attempts = j["retry"].value("attempts", cfg.retry.attempts);
        cfg.retry.base_delay = std::chrono::milliseconds(j["retry"].value("base_delay_ms", 250));
        if (cfg.retry.attempts < 1) fail(ErrorCode::ConfigInvalid, "retry.attempts must be >= 1");
    }
    return cfg;
}

GatewayConfig load_gateway_config(const std::filesystem::path& path) {
    json j = json::parse(read_text_file(path), nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::ConfigInvalid, "config is not valid JSON: " + path.string());
    return parse_gateway_config(j);
}

// ---------------------------------------------------------------- gateway

Gateway::Gateway(GatewayConfig config, std::shared_ptr<CostLedger> ledger)
    : config_(std::move(config)), ledger_(std::move(ledger)) {
    if (!ledger_) ledger_ = std::make_shared<CostLedger>();
}

void Gateway::register_provider(const std::string& provider_id, std::shared_ptr<Provider> provider) {
    std::lock_guard lock(providers_mu_);
    providers_[provider_id] = std::move(provider);
}

const RoleConfig& Gateway::role_config(Role role) const {
    return role == Role::reasoning_engine ? config_.reasoning_engine : config_.aggregator;
}

Completion Gateway::complete(Role role, const std::vector<Message>& messages, const std::string& case_id,
                             const EventSink& sink) {
    if (messages.empty()) fail(ErrorCode::InvalidArgument, "messages must be non-empty");
    for (std::size_t i = 1; i < messages.size(); ++i)
        if (messages[i].kind == Message::Kind::system)
            fail(ErrorCode::InvalidArgument, "only the first message may be a system message");

    const RoleConfig& cfg = role_config(role);
    std::shared_ptr<Provider> provider;
    {
        std::lock_guard lock(providers_mu_);
        auto it = providers_.find(cfg.provider_id);
        if (it == providers_.end()) {
            // Unregistered ids with an endpoint get the generic HTTP adapter.
            if (cfg.endpoint.empty()) fail(ErrorCode::ConfigInvalid, "no provider registered for '" + cfg.provider_id + "'");
            it = providers_.emplace(cfg.provider_id, std::make_shared<HttpChatProvider>()).first;
        }
        provider = it->second;
    }

    const int attempts = std::max(1, config_.retry.attempts);
    for (int attempt = 1;; ++attempt) {
        try {
            Completion c = provider->send(cfg, messages);
            ledger_->append({case_id, role, c.usage, compute_cost(c.usage, config_.pricing.find(cfg.provider_id, cfg.model_name)),
                             cfg.model_name});
            return c;
        } catch (const TransientError& e) {
            if (attempt >= attempts)
                fail(ErrorCode::ProviderUnavailable, "gave up after " + std::to_string(attempts) + " attempts: " + e.what());
            emit(sink, "llm", EventKind::retry,
                 std::string(to_string(role)) + " transport retry " + std::to_string(attempt) + ": " + e.what());
            std::this_thread::sleep_for(config_.retry.base_delay * (1 << (attempt - 1)));
        }
    }
}

std::unique_ptr<Gateway> make_mock_gateway(std::shared_ptr<MockProvider> mock, std::shared_ptr<CostLedger> ledger) {
    GatewayConfig cfg;
    cfg.reasoning_engine.role = Role::reasoning_engine;
    cfg.aggregator.role = Role::aggregator;
    cfg.retry.base_delay = std::chrono::milliseconds(0);
    auto gw = std::make_unique<Gateway>(std::move(cfg), std::move(ledger));
    gw->register_provider("mock", std::move(mock));
    return gw;
}

}  // namespace dxagent::llm
