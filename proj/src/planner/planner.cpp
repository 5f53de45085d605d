#include "dxagent/planner/planner.hpp"

#include <algorithm>
#include <map>
#include <regex>
#include <set>

#include "dxagent/core/assets.hpp"
#include "dxagent/core/error.hpp"
#include "dxagent/core/util.hpp"
#include "dxagent/tools/builtin.hpp"
#include "dxagent/tools/schema.hpp"

namespace dxagent::planner {

using nlohmann::json;

namespace {

constexpr std::string_view kStage = "planning";

const char* const kImagingTools[] = {tools::kBrainVolume, tools::kHippocampus, tools::kGreyMatter,
                                     tools::kWhiteMatter};

std::string replace_all(std::string text, std::string_view key, std::string_view value) {
    std::size_t pos = 0;
    while ((pos = text.find(key, pos)) != std::string::npos) {
        text.replace(pos, key.size(), value);
        pos += value.size();
    }
    return text;
}

std::string schema_path(const std::string& error) {
    // "$.tool_calls[0].tool: missing ..." -> "tool_calls[0].tool"
    auto colon = error.find(": ");
    std::string path = error.substr(0, colon);
    if (path.rfind("$.", 0) == 0) path = path.substr(2);
    else if (path == "$") path.clear();
    return path;
}

}  // namespace

void to_json(json& j, const DiagnosticPlan& p) {
    json calls = json::array();
    for (const auto& c : p.tool_calls) calls.push_back({{"tool", c.tool}, {"parameters", c.parameters}});
    j = json{{"analysis", p.analysis}, {"tool_calls", std::move(calls)}, {"reasoning", p.reasoning}};
}

void from_json(const json& j, DiagnosticPlan& p) {
    p.analysis = j.at("analysis").get<std::string>();
    p.reasoning = j.at("reasoning").get<std::string>();
    p.tool_calls.clear();
    for (const auto& c : j.at("tool_calls"))
        p.tool_calls.push_back({c.at("tool").get<std::string>(), c.value("parameters", json::object())});
}

const json& plan_schema() {
    static const json schema = json::parse(R"({
  "$id": "diagnostic_plan",
  "type": "object",
  "required": ["analysis", "tool_calls", "reasoning"],
  "properties": {
    "analysis": {"type": "string"},
    "tool_calls": {
      "type": "array",
      "items": {
        "type": "object",
        "required": ["tool", "parameters"],
        "properties": {
          "tool": {"type": "string", "pattern": "\\S"},
          "parameters": {"type": "object"}
        }
      }
    },
    "reasoning": {"type": "string"}
  }
})");
    return schema;
}

DiagnosticPlan parse_plan(std::string_view reply) {
    auto text = extract_json_object(reply);
    if (!text) fail(ErrorCode::NotJson, "no JSON object in planner reply");
    json j = json::parse(*text, nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::NotJson, "planner reply is not valid JSON");
    // Some models leave out an empty parameter map; treat it as {}.
    if (j.is_object() && j.contains("tool_calls") && j["tool_calls"].is_array())
        for (auto& c : j["tool_calls"])
            if (c.is_object() && !c.contains("parameters")) c["parameters"] = json::object();
    auto errors = schema::validate(plan_schema(), j);
    if (!errors.empty()) fail(ErrorCode::SchemaViolation, schema_path(errors.front()) + " (" + errors.front() + ")");
    return j.get<DiagnosticPlan>();
}

bool PlanValidationReport::ok() const {
    return std::none_of(violations.begin(), violations.end(), [](const PlanViolation& v) { return !v.warning; });
}

std::string PlanValidationReport::summary() const {
    std::string out;
    for (const auto& v : violations) {
        if (!out.empty()) out += "; ";
        out += "call " + std::to_string(v.index) + ": " + v.reason;
    }
    return out;
}

void to_json(json& j, const PlanValidationReport& r) {
    json v = json::array();
    for (const auto& x : r.violations) v.push_back({{"index", x.index}, {"reason", x.reason}, {"warning", x.warning}});
    j = json{{"resolved_actions", r.resolved_actions}, {"violations", std::move(v)}};
}

PlanValidationReport validate_plan(const DiagnosticPlan& plan, const tools::ToolRegistry& registry) {
    PlanValidationReport report;
    std::map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < plan.tool_calls.size(); ++i) {
        const auto& call = plan.tool_calls[i];
        const auto* spec = registry.find(call.tool);
        if (!spec) {
            report.violations.push_back({i, "unknown tool '" + call.tool + "'"});
            continue;
        }
        if (!call.parameters.is_object()) {
            report.violations.push_back({i, call.tool + ": parameters must be an object"});
            continue;
        }
        auto errors = schema::validate(spec->input_schema, call.parameters);
        if (!errors.empty()) {
            for (const auto& e : errors) report.violations.push_back({i, call.tool + ": " + e});
            continue;
        }
        auto action = tools::make_action(call.tool, call.parameters);
        auto [it, fresh] = seen.emplace(action.fingerprint, i);
        if (!fresh) {
            report.violations.push_back({i, "duplicate of call " + std::to_string(it->second) + " (" + call.tool + ")", true});
            continue;
        }
        report.resolved_actions.push_back(std::move(action));
    }
    if (!report.ok()) report.resolved_actions.clear();
    return report;
}

// ---------------------------------------------------------------------------

Intent classify_intent(std::string_view query) {
    const std::string q = to_lower(query);
    for (const char* kw : {"predict", "future", "years"})
        if (q.find(kw) != std::string::npos) return Intent::predict_progression;
    return Intent::diagnose;
}

std::optional<double> parse_horizon_years(std::string_view query) {
    static const std::map<std::string, double> words = {{"one", 1},   {"two", 2},   {"three", 3}, {"four", 4},
                                                        {"five", 5},  {"six", 6},   {"seven", 7}, {"eight", 8},
                                                        {"nine", 9},  {"ten", 10},  {"a", 1},     {"an", 1}};
    static const std::regex re(
        R"(\b(\d+(?:\.\d+)?|one|two|three|four|five|six|seven|eight|nine|ten|a|an)[\s-]*(years?|yrs?|months?|mos?)\b)",
        std::regex::icase);
    const std::string q = to_lower(query);
    std::smatch m;
    if (!std::regex_search(q, m, re)) return std::nullopt;
    const std::string n = m[1].str();
    const double value = words.count(n) ? words.at(n) : std::stod(n);
    const bool months = m[2].str()[0] == 'm';
    const double years = months ? value / 12.0 : value;
    if (!(years > 0)) return std::nullopt;
    return years;
}

QueryBundle observe(std::string_view query, const PatientRecord& record) {
    QueryBundle b;
    b.intent_text = std::string(query);
    b.intent = classify_intent(query);
    json j = record;
    for (const char* k : {"case_id", "label", "doctor_prompt", "mri_ref", "vcf_ref"}) j.erase(k);
    if (j.contains("sex") && j["sex"] == "unknown") j.erase("sex");
    if (record.vcf_ref) j["genetic_data"] = "VCF file available";
    b.text_payload = std::move(j);
    if (record.mri_ref) b.image_payload.push_back(*record.mri_ref);
    b.genomic_ref = record.vcf_ref;
    if (b.intent == Intent::predict_progression) b.future_years = parse_horizon_years(query).value_or(kDefaultHorizonYears);
    return b;
}

std::string render_patient_data(const QueryBundle& bundle) {
    json j = bundle.text_payload;
    if (!bundle.image_payload.empty()) j["image_path"] = bundle.image_payload.front();
    if (bundle.genomic_ref) j["vcf_path"] = *bundle.genomic_ref;
    return j.dump(2);
}

DiagnosticPlan fallback_plan(const QueryBundle& bundle) {
    DiagnosticPlan plan;
    const json& t = bundle.text_payload;
    std::vector<std::string> available;
    std::vector<std::string> why;
    for (const auto& [k, v] : t.items()) available.push_back(k);

    const bool has_image = !bundle.image_payload.empty();
    if (has_image) {
        available.push_back("image_path");
        for (const char* tool : kImagingTools) plan.tool_calls.push_back({tool, {{"image_path", bundle.image_payload.front()}}});
        why.push_back("an MRI is available, so all four volumetric analyzers run on it");
    }
    const bool has_apoe = t.contains("apoe_genotype");
    if (bundle.genomic_ref || has_apoe) {
        json p = json::object();
        if (bundle.genomic_ref) p["vcf_path"] = *bundle.genomic_ref;
        if (has_apoe) p["apoe_genotype"] = t["apoe_genotype"];
        if (t.contains("age")) p["age"] = t["age"];
        plan.tool_calls.push_back({tools::kPhsCalculator, std::move(p)});
        why.push_back("genetic data is available, so the polygenic hazard score is computed");
    }
    if (bundle.intent == Intent::predict_progression && has_image && t.contains("age")) {
        plan.tool_calls.push_back({tools::kMriPredictor,
                                   {{"image_path", bundle.image_payload.front()},
                                    {"age", t["age"]},
                                    {"future_years", bundle.future_years.value_or(kDefaultHorizonYears)}}});
        why.push_back("the query asks about progression, so a future MRI is predicted");
    }
    std::string list;
    for (const auto& a : available) list += (list.empty() ? "" : ", ") + a;
    plan.analysis = available.empty() ? "No patient data fields are available." : "Available data: " + list + ".";
    if (why.empty()) {
        plan.reasoning = "No tool applies to the available data; aggregation uses the clinical fields directly.";
    } else {
        for (std::size_t i = 0; i < why.size(); ++i) plan.reasoning += (i ? "; " : "") + why[i];
        plan.reasoning[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(plan.reasoning[0])));
        plan.reasoning += ".";
    }
    return plan;
}

void to_json(json& j, const PlanResult& r) {
    j = json{{"plan", r.plan},
             {"validation", r.validation},
             {"provenance", to_string(r.provenance)},
             {"attempts", r.attempts},
             {"notes", r.notes}};
}

std::vector<llm::Message> planner_messages(const QueryBundle& bundle, std::string_view doctor_prompt) {
    std::string user(assets::planner_user_prompt());
    // doctor_prompt goes in last so text inside it is never re-substituted
    user = replace_all(user, "{patient_data}", render_patient_data(bundle));
    user = replace_all(user, "{doctor_prompt}", doctor_prompt.empty() ? "None" : doctor_prompt);
    return {{llm::Message::Kind::system, std::string(assets::planner_system_prompt())},
            {llm::Message::Kind::user, std::move(user)}};
}

namespace {

void guidance_notes(const QueryBundle& bundle, const DiagnosticPlan& plan, std::vector<std::string>& notes) {
    std::set<std::string> named;
    for (const auto& c : plan.tool_calls) named.insert(c.tool);
    if (!bundle.image_payload.empty()) {
        std::string missing;
        for (const char* t : kImagingTools)
            if (!named.count(t)) missing += (missing.empty() ? "" : ", ") + std::string(t);
        if (!missing.empty()) notes.push_back("guidance: image available but plan omits " + missing);
    }
    if ((bundle.genomic_ref || bundle.text_payload.contains("apoe_genotype")) && !named.count(tools::kPhsCalculator))
        notes.push_back(std::string("guidance: genetic data available but plan omits ") + tools::kPhsCalculator);
}

}  // namespace

PlanResult generate_plan(const QueryBundle& bundle, std::string_view doctor_prompt, const tools::ToolRegistry& registry,
                         llm::Gateway& gateway, const std::string& case_id, const PlannerOptions& options,
                         const EventSink& sink) {
    PlanResult result;
    const auto messages = planner_messages(bundle, doctor_prompt);
    const int max_attempts = std::max(1, options.max_attempts);
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        std::string problem;
        bool terminal = false;
        try {
            ++result.attempts;
            auto completion = gateway.complete(llm::Role::reasoning_engine, messages, case_id, sink);
            auto plan = parse_plan(completion.text);
            auto validation = validate_plan(plan, registry);
            if (validation.ok()) {
                result.plan = std::move(plan);
                result.validation = std::move(validation);
                guidance_notes(bundle, result.plan, result.notes);
                emit(sink, kStage, EventKind::finished,
                     std::to_string(result.validation.resolved_actions.size()) + " actions from model plan");
                return result;
            }
            problem = "ValidationFailed: " + validation.summary();
        } catch (const Error& e) {
            problem = e.what();
            terminal = e.code() == ErrorCode::AuthFailure || e.code() == ErrorCode::ContextTooLong ||
                       e.code() == ErrorCode::ConfigInvalid;
        }
        result.notes.push_back("attempt " + std::to_string(attempt) + ": " + problem);
        if (terminal) break;
        if (attempt < max_attempts) emit(sink, kStage, EventKind::retry, "attempt " + std::to_string(attempt) + " " + problem);
    }
    emit(sink, kStage, EventKind::fallback,
         "RetryExhausted after " + std::to_string(result.attempts) + " attempts; using rule-table plan");
    result.plan = fallback_plan(bundle);
    result.validation = validate_plan(result.plan, registry);
    result.provenance = Provenance::guideline_fallback;
    return result;
}

}  // namespace dxagent::planner
