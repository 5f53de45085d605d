#pragma once

#include <atomic>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "dxagent/aggregator/aggregator.hpp"
#include "dxagent/guideline/guideline.hpp"
#include "dxagent/llm/gateway.hpp"
#include "dxagent/planner/planner.hpp"
#include "dxagent/service/session.hpp"
#include "dxagent/tools/registry.hpp"

namespace dxagent::service {

/// ValidationFailed carrying the full violation list.
class ValidationError : public Error {
public:
    explicit ValidationError(ValidationReport report);
    const ValidationReport& report() const noexcept { return report_; }

private:
    ValidationReport report_;
};

struct EngineOptions {
    planner::PlannerOptions planner;
    aggregator::AggregatorOptions aggregator;
    tools::RetryPolicy tool_policy;
    std::size_t max_parallel_tools = 4;
    std::shared_ptr<const guideline::ThresholdTable> table;  // null = shipped default
    std::string guideline_text;                              // empty = shipped prompt
    // Consulted at stage checkpoints ("planned", "outcome", "executed",
    // "aggregated"). Returning true stops the run there and leaves the
    // session resumable, as a process exit at that point would.
    std::function<bool(std::string_view checkpoint)> interrupt;
};

struct CaseRequest {
    PatientRecord record;
    std::vector<SessionStore::NewUpload> uploads;
};

/// Checks the record and every upload; used by create_case_session.
ValidationReport validate_case_request(const CaseRequest& request);

enum class ExportFormat { json, markdown };

ExportFormat parse_export_format(std::string_view text);
std::string_view content_type(ExportFormat f) noexcept;

struct ChatResult {
    std::string reply;
    int report_version = 0;  // current version after this turn
    bool revised = false;
    std::optional<aggregator::CrossCheck> cross_check;
};

void to_json(nlohmann::json& j, const ChatResult& r);

class Engine {
public:
    Engine(std::shared_ptr<SessionStore> store, std::shared_ptr<const tools::ToolRegistry> registry,
           std::shared_ptr<llm::Gateway> gateway, EngineOptions options = {});
    ~Engine();

    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    /// Throws ValidationError or StorageFailure.
    std::string create_case_session(CaseRequest request);

    /// Runs the staged pipeline to a terminal status. A session left
    /// mid-pipeline by an earlier process resumes from its last completed
    /// stage; recorded tool outcomes are reused by fingerprint.
    /// Throws SessionNotFound, or WrongState if the session is terminal or
    /// already running.
    CaseStatus advance_pipeline(const std::string& session_id);

    /// Same preconditions as advance_pipeline, checked before returning;
    /// the run continues on a background thread.
    void start_pipeline(const std::string& session_id);

    /// Blocks until background runs have finished.
    void wait_idle();

    bool is_running(const std::string& session_id) const;

    ChatResult chat_turn(const std::string& session_id, std::string_view message);

    /// version 0 means the current report. Throws SessionNotFound, NoReport.
    std::string export_report(const std::string& session_id, ExportFormat format, int version = 0);

    SessionStore& store() { return *store_; }
    const tools::ToolRegistry& registry() const { return *registry_; }
    llm::Gateway& gateway() { return *gateway_; }
    const guideline::ThresholdTable& thresholds() const;

private:
    // Marks the session running; throws WrongState if it cannot run.
    void claim(const std::string& session_id);
    CaseStatus run(const std::string& session_id);
    EventSink sink_for(const std::string& session_id);
    bool interrupted(std::string_view checkpoint) const;
    void release(const std::string& session_id);

    std::shared_ptr<SessionStore> store_;
    std::shared_ptr<const tools::ToolRegistry> registry_;
    std::shared_ptr<llm::Gateway> gateway_;
    EngineOptions options_;

    mutable std::mutex running_mu_;
    std::condition_variable idle_cv_;
    std::set<std::string> running_;
    struct Worker {
        std::shared_ptr<std::atomic<bool>> finished;
        std::thread thread;
    };
    std::vector<Worker> workers_;
};

}  // namespace dxagent::service
