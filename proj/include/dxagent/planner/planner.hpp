#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dxagent/core/events.hpp"
#include "dxagent/domain/domain.hpp"
#include "dxagent/llm/gateway.hpp"
#include "dxagent/tools/registry.hpp"

namespace dxagent::planner {

struct ToolCall {
    std::string tool;
    nlohmann::json parameters = nlohmann::json::object();

    bool operator==(const ToolCall&) const = default;
};

struct DiagnosticPlan {
    std::string analysis;
    std::vector<ToolCall> tool_calls;
    std::string reasoning;

    bool operator==(const DiagnosticPlan&) const = default;
};

// Serialized form has exactly analysis, tool_calls, reasoning.
void to_json(nlohmann::json& j, const DiagnosticPlan& p);
void from_json(const nlohmann::json& j, DiagnosticPlan& p);

// Machine-checkable schema for the plan object (served to clients as well).
const nlohmann::json& plan_schema();

// Extracts and shape-checks a plan from a model reply. Throws NotJson or
// SchemaViolation.
DiagnosticPlan parse_plan(std::string_view reply);

struct PlanViolation {
    std::size_t index = 0;
    std::string reason;
    bool warning = false;  // warnings do not block execution

    bool operator==(const PlanViolation&) const = default;
};

struct PlanValidationReport {
    std::vector<tools::ResolvedAction> resolved_actions;
    std::vector<PlanViolation> violations;

    bool ok() const;  // no blocking violations
    std::string summary() const;
};

void to_json(nlohmann::json& j, const PlanValidationReport& r);

/// Unknown tools and schema-invalid parameters are blocking; duplicates are
/// reported as warnings and dropped. A plan with any blocking violation
/// yields no resolved actions.
PlanValidationReport validate_plan(const DiagnosticPlan& plan, const tools::ToolRegistry& registry);

// ---------------------------------------------------------------------------
// Observation
// ---------------------------------------------------------------------------

/// Keyword rule: "predict", "future" or "years" selects predict_progression.
Intent classify_intent(std::string_view query);

/// "in 3 years", "18 months", "2.5 yr" and similar; nullopt if absent.
std::optional<double> parse_horizon_years(std::string_view query);

inline constexpr double kDefaultHorizonYears = 5.0;

QueryBundle observe(std::string_view query, const PatientRecord& record);

/// The {patient_data} text: scalar fields plus any file references the
/// tools need (image_path, vcf_path).
std::string render_patient_data(const QueryBundle& bundle);

// ---------------------------------------------------------------------------
// Planning
// ---------------------------------------------------------------------------

/// Fixed rule table, deterministic order.
DiagnosticPlan fallback_plan(const QueryBundle& bundle);

struct PlannerOptions {
    int max_attempts = 3;
};

struct PlanResult {
    DiagnosticPlan plan;
    PlanValidationReport validation;
    Provenance provenance = Provenance::llm;
    int attempts = 0;                 // LLM calls made
    std::vector<std::string> notes;   // attempt failures and guidance gaps
};

void to_json(nlohmann::json& j, const PlanResult& r);

std::vector<llm::Message> planner_messages(const QueryBundle& bundle, std::string_view doctor_prompt);

/// Never throws for model misbehavior: after max_attempts the rule-table plan
/// is used and provenance is guideline_fallback.
PlanResult generate_plan(const QueryBundle& bundle, std::string_view doctor_prompt,
                         const tools::ToolRegistry& registry, llm::Gateway& gateway, const std::string& case_id,
                         const PlannerOptions& options = {}, const EventSink& sink = {});

}  // namespace dxagent::planner
