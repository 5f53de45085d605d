#pragma once

#include <chrono>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dxagent/core/error.hpp"
#include "dxagent/core/events.hpp"
#include "dxagent/llm/cost.hpp"

namespace dxagent::llm {

struct RoleConfig {
    Role role = Role::reasoning_engine;
    std::string provider_id = "mock";
    std::string model_name = "mock";
    std::string endpoint;         // full chat-completions URL
    std::string credentials_ref;  // environment variable holding the API key
    double temperature = 0.0;
    int max_output_tokens = 2048;
    int timeout_ms = 120000;
};

struct Message {
    enum class Kind { system, user, assistant };
    Kind kind = Kind::user;
    std::string text;

    bool operator==(const Message&) const = default;
};

std::string_view to_string(Message::Kind kind) noexcept;

struct Completion {
    std::string text;
    Usage usage;
};

/// Thrown by providers for faults worth retrying (connection errors,
/// 429, 5xx). Anything else propagates immediately.
class TransientError : public Error {
public:
    explicit TransientError(const std::string& message) : Error(ErrorCode::ProviderUnavailable, message) {}
};

class Provider {
public:
    virtual ~Provider() = default;
    virtual Completion send(const RoleConfig& config, const std::vector<Message>& messages) = 0;
};

/// Maps an HTTP status plus body to the gateway's error taxonomy; returns
/// normally for 2xx.
void raise_for_status(int status, const std::string& body);

/// OpenAI-compatible chat-completions adapter (most hosted models expose
/// this wire format).
class HttpChatProvider : public Provider {
public:
    Completion send(const RoleConfig& config, const std::vector<Message>& messages) override;

    static nlohmann::json build_request(const RoleConfig& config, const std::vector<Message>& messages);
    static Completion parse_response(const std::string& body);
};

/// Scripted test double. Each call consumes the first queued step whose
/// `match` occurs in the concatenated message text (empty match = any).
/// Sticky steps are never consumed. An exhausted script raises
/// ProviderUnavailable.
class MockProvider : public Provider {
public:
    struct Step {
        std::string match;
        std::string reply;
        Usage usage;
        std::optional<int> status;  // simulate an HTTP failure instead of replying
        bool sticky = false;
    };

    MockProvider() = default;
    explicit MockProvider(std::vector<Step> script);

    void push(Step step);
    Completion send(const RoleConfig& config, const std::vector<Message>& messages) override;
    std::size_t remaining() const;
    std::size_t calls() const;

    static std::vector<Step> load_script(const nlohmann::json& j);

private:
    mutable std::mutex mu_;
    std::deque<Step> script_;
    std::size_t calls_ = 0;
};

struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds base_delay{250};  // doubled after each failure
};

struct GatewayConfig {
    RoleConfig reasoning_engine;
    RoleConfig aggregator;
    PricingTable pricing;
    RetryPolicy retry;
};

/// Reads role and pricing configuration. Literal credentials in the file are
/// rejected; only environment-variable names are accepted.
GatewayConfig parse_gateway_config(const nlohmann::json& j);
GatewayConfig load_gateway_config(const std::filesystem::path& path);

class Gateway {
public:
    Gateway(GatewayConfig config, std::shared_ptr<CostLedger> ledger = std::make_shared<CostLedger>());

    void register_provider(const std::string& provider_id, std::shared_ptr<Provider> provider);

    const RoleConfig& role_config(Role role) const;
    CostLedger& ledger() { return *ledger_; }
    std::shared_ptr<CostLedger> ledger_ptr() const { return ledger_; }

    /// Sends messages for the given role, retrying transient faults with
    /// exponential backoff. Each successful call appends a ledger entry.
    Completion complete(Role role, const std::vector<Message>& messages, const std::string& case_id,
                        const EventSink& sink = {});

private:
    GatewayConfig config_;
    std::shared_ptr<CostLedger> ledger_;
    std::map<std::string, std::shared_ptr<Provider>> providers_;
    std::mutex providers_mu_;
};

/// A gateway whose two roles both point at the given mock provider.
std::unique_ptr<Gateway> make_mock_gateway(std::shared_ptr<MockProvider> mock,
                                           std::shared_ptr<CostLedger> ledger = std::make_shared<CostLedger>());

}  // namespace dxagent::llm
