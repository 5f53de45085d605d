#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dxagent/core/events.hpp"
#include "dxagent/domain/domain.hpp"
#include "dxagent/guideline/guideline.hpp"
#include "dxagent/llm/gateway.hpp"
#include "dxagent/tools/registry.hpp"

namespace dxagent::aggregator {

inline constexpr std::size_t kHistoryCap = 20;

struct AggregationContext {
    std::vector<tools::ToolOutcome> outcomes;
    PatientRecord record;
    std::string guidelines;  // guideline prompt text; empty means the shipped asset
    ChatHistory history;
    std::string doctor_prompt;
    const guideline::ThresholdTable* table = nullptr;  // null means the default table

    const guideline::ThresholdTable& thresholds() const;
    std::string_view guideline_text() const;
};

struct Verification {
    std::vector<tools::ToolOutcome> outcomes;
    std::vector<std::string> flags;
};

/// Deterministic plausibility rules. Implausible ok-outcomes are downgraded
/// to failed; failed outcomes are never upgraded. Idempotent.
Verification verify_outcomes(const std::vector<tools::ToolOutcome>& outcomes);

/// Parses an aggregator report reply. Throws NotJson, SchemaViolation (message starts
/// with the offending path) or InvalidEnum (message starts with the field).
/// "NC" is accepted for CN and reported in flags.
DiagnosisReport parse_report(std::string_view reply, std::vector<std::string>* flags = nullptr);

/// Schema of a persisted report document (the to_json form of
/// DiagnosisReport, closed at every level).
const nlohmann::json& report_schema();

struct CrossCheck {
    StagingLabel llm_label = StagingLabel::MCI;
    StagingLabel oracle_label = StagingLabel::MCI;
    bool agree = true;
    std::string note;
};

void to_json(nlohmann::json& j, const CrossCheck& c);

/// The deterministic report built from the guideline engine alone.
DiagnosisReport fallback_aggregate(const AggregationContext& context);

// {tool_results} text: verified outcomes with status, payload and flags.
std::string render_tool_results(const std::vector<tools::ToolOutcome>& outcomes, const std::vector<std::string>& flags);
std::string render_patient_info(const PatientRecord& record);

std::vector<llm::Message> aggregator_messages(const AggregationContext& context, const Verification& verified);

struct AggregatorOptions {
    int max_attempts = 3;
};

struct AggregationResult {
    DiagnosisReport report;
    CrossCheck cross_check;
    int attempts = 0;
    std::vector<std::string> flags;  // verification flags, alias normalizations, attempt failures
    std::vector<tools::ToolOutcome> verified_outcomes;
};

void to_json(nlohmann::json& j, const AggregationResult& r);

/// Always returns a schema-valid report.
AggregationResult aggregate(const AggregationContext& context, llm::Gateway& gateway, const std::string& case_id,
                            const AggregatorOptions& options = {}, const EventSink& sink = {});

struct ChatReply {
    std::string text;
    std::optional<DiagnosisReport> revised_report;
    std::optional<CrossCheck> cross_check;
};

/// context.history holds the prior turns; message is the new user turn.
std::vector<llm::Message> chat_messages(const AggregationContext& context, const DiagnosisReport& current,
                                        std::string_view message);

ChatReply chat(const AggregationContext& context, const DiagnosisReport& current, std::string_view message,
               llm::Gateway& gateway, const std::string& case_id, const EventSink& sink = {});

}  // namespace dxagent::aggregator
