#include "dxagent/aggregator/aggregator.hpp"

#include <cmath>
#include <sstream>

#include "dxagent/core/assets.hpp"
#include "dxagent/core/error.hpp"
#include "dxagent/core/util.hpp"
#include "dxagent/tools/builtin.hpp"

namespace dxagent::aggregator {

using nlohmann::json;
using tools::OutcomeStatus;
using tools::ToolOutcome;

namespace {

constexpr std::string_view kStage = "aggregation";

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

std::string replace_all(std::string text, std::string_view key, std::string_view value) {
    std::size_t pos = 0;
    while ((pos = text.find(key, pos)) != std::string::npos) {
        text.replace(pos, key.size(), value);
        pos += value.size();
    }
    return text;
}

bool is_volume_tool(const std::string& tool) {
    return tool == tools::kBrainVolume || tool == tools::kHippocampus || tool == tools::kGreyMatter ||
           tool == tools::kWhiteMatter;
}

std::optional<double> measure(const ToolOutcome& o, const char* key) {
    if (!o.payload.contains("measures")) return std::nullopt;
    const auto& m = o.payload["measures"];
    if (!m.contains(key) || !m[key].is_number()) return std::nullopt;
    return m[key].get<double>();
}

std::string failure_flag(const ToolOutcome& o) {
    return o.tool + " " + std::string(tools::to_string(o.status)) + (o.diagnostics.empty() ? "" : ": " + o.diagnostics);
}

// First implausibility found in an ok outcome, or empty.
std::string plausibility_problem(const ToolOutcome& o) {
    if (is_volume_tool(o.tool)) {
        if (!o.payload.contains("measures") || !o.payload["measures"].is_object()) return "no measures reported";
        for (const auto& [k, v] : o.payload["measures"].items())
            if (!v.is_number() || !(v.get<double>() > 0)) return "non-positive volume (" + k + ")";
        if (o.tool == tools::kBrainVolume) {
            auto brain = measure(o, "total_brain"), icv = measure(o, "icv");
            if (brain && icv && *brain > *icv) return "brain exceeds intracranial volume";
        }
        if (o.tool == tools::kHippocampus) {
            auto l = measure(o, "left"), r = measure(o, "right"), t = measure(o, "total");
            if (l && r && t && std::abs(*l + *r - *t) > 1.0) return "hippocampal hemispheres do not sum to total";
        }
    }
    if (o.tool == tools::kPhsCalculator) {
        if (o.payload.contains("percentile")) {
            const double p = o.payload["percentile"].get<double>();
            if (!(p >= 0 && p <= 100)) return "percentile outside [0, 100]";
        }
        if (o.payload.contains("risk_curve"))
            for (const auto& pt : o.payload["risk_curve"])
                for (const char* k : {"risk", "lower", "upper"})
                    if (pt.contains(k) && !(pt[k].get<double>() >= 0 && pt[k].get<double>() <= 1))
                        return "risk outside [0, 1]";
    }
    return {};
}

void downgrade(ToolOutcome& o, const std::string& problem, std::vector<std::string>& flags) {
    o.status = OutcomeStatus::failed;
    o.diagnostics = "implausible: " + problem;
    flags.push_back(failure_flag(o));
}

std::string band_text(const guideline::ThresholdTable& table, const guideline::IndicatorVote& v) {
    auto it = table.indicators.find(v.indicator);
    if (it == table.indicators.end() || !v.value) return v.note;
    for (const auto& b : it->second.bands) {
        if (!b.contains(*v.value)) continue;
        std::string range;
        if (b.min && b.max && *b.min == *b.max) range = "= " + fmt(*b.min);
        else {
            range = std::string(b.min_exclusive ? "(" : "[") + (b.min ? fmt(*b.min) : "-inf") + ", " +
                    (b.max ? fmt(*b.max) : "inf") + (b.max_exclusive || !b.max ? ")" : "]");
        }
        return v.indicator + " " + fmt(*v.value) + " in " + std::string(to_string(b.label)) + " band " + range;
    }
    return v.note;
}

std::vector<std::string> attachments_of(const std::vector<ToolOutcome>& outcomes) {
    std::vector<std::string> out;
    for (const auto& o : outcomes)
        if (o.status == OutcomeStatus::ok && o.tool == tools::kMriPredictor && o.payload.contains("predicted_image_ref"))
            out.push_back(o.payload["predicted_image_ref"].get<std::string>());
    return out;
}

const json& require(const json& j, const std::string& key, const std::string& path) {
    if (!j.is_object()) fail(ErrorCode::SchemaViolation, path + ": expected an object");
    if (!j.contains(key)) fail(ErrorCode::SchemaViolation, (path.empty() ? key : path + "." + key) + ": missing");
    return j[key];
}

std::string require_string(const json& j, const std::string& key, const std::string& path) {
    const json& v = require(j, key, path);
    if (!v.is_string()) fail(ErrorCode::SchemaViolation, (path.empty() ? key : path + "." + key) + ": expected a string");
    return v.get<std::string>();
}

std::vector<std::string> string_list(const json& v, const std::string& path) {
    if (!v.is_array()) fail(ErrorCode::SchemaViolation, path + ": expected a list of strings");
    std::vector<std::string> out;
    for (const auto& x : v) {
        if (!x.is_string()) fail(ErrorCode::SchemaViolation, path + ": expected a list of strings");
        out.push_back(x.get<std::string>());
    }
    return out;
}

guideline::GuidelineDecision oracle(const AggregationContext& ctx, const std::vector<ToolOutcome>& outcomes,
                                    guideline::Evidence* evidence_out = nullptr) {
    auto ev = guideline::collect_votes(ctx.record, outcomes, ctx.thresholds());
    if (evidence_out) *evidence_out = ev;
    return guideline::decide_stage(ev.votes, ctx.thresholds(), ev.unavailable);
}

CrossCheck cross_check(const AggregationContext& ctx, const std::vector<ToolOutcome>& outcomes, DiagnosisReport& report) {
    CrossCheck c;
    c.llm_label = report.diagnosis;
    try {
        auto d = oracle(ctx, outcomes);
        c.oracle_label = d.label;
        c.note = "rule engine: " + std::string(to_string(d.label)) + " (" + std::string(to_string(d.confidence)) + ")";
    } catch (const Error& e) {
        if (e.code() != ErrorCode::NoEvidence) throw;
        c.oracle_label = StagingLabel::MCI;
        c.note = "rule engine: insufficient evidence, provisional MCI";
    }
    c.agree = c.llm_label == c.oracle_label;
    if (!c.agree) {
        report.contradicting_evidence.push_back("guideline cross-check: " + c.note + " disagrees with the reported " +
                                                std::string(to_string(report.diagnosis)) +
                                                "; the model's stage is kept and confidence lowered one level");
        report.confidence = lower_confidence(report.confidence);
    }
    return c;
}

}  // namespace

const guideline::ThresholdTable& AggregationContext::thresholds() const {
    return table ? *table : guideline::default_threshold_table();
}

std::string_view AggregationContext::guideline_text() const {
    return guidelines.empty() ? assets::aggregator_system_prompt() : std::string_view(guidelines);
}

void to_json(json& j, const CrossCheck& c) {
    j = json{{"llm_label", to_string(c.llm_label)},
             {"oracle_label", to_string(c.oracle_label)},
             {"agree", c.agree},
             {"note", c.note}};
}

Verification verify_outcomes(const std::vector<ToolOutcome>& outcomes) {
    Verification v;
    v.outcomes = outcomes;
    for (auto& o : v.outcomes) {
        if (o.status != OutcomeStatus::ok) {
            v.flags.push_back(failure_flag(o));
            continue;
        }
        auto problem = plausibility_problem(o);
        if (!problem.empty()) downgrade(o, problem, v.flags);
    }
    // containment against the intracranial volume of a plausible brain outcome
    std::optional<double> icv;
    for (const auto& o : v.outcomes)
        if (o.status == OutcomeStatus::ok && o.tool == tools::kBrainVolume) icv = measure(o, "icv");
    if (icv) {
        for (auto& o : v.outcomes) {
            if (o.status != OutcomeStatus::ok || !is_volume_tool(o.tool) || o.tool == tools::kBrainVolume) continue;
            for (const auto& [k, val] : o.payload["measures"].items())
                if (val.get<double>() >= *icv) {
                    downgrade(o, "volume exceeds intracranial volume (" + k + ")", v.flags);
                    break;
                }
        }
    }
    return v;
}

const json& report_schema() {
    static const json schema = json::parse(R"({
  "$id": "diagnosis_report",
  "type": "object",
  "additionalProperties": false,
  "required": ["diagnosis", "confidence", "justification", "recommendations", "attachments", "provenance",
               "guideline_checksum"],
  "properties": {
    "diagnosis": {"enum": ["CN", "MCI", "AD"]},
    "confidence": {"enum": ["High", "Medium", "Low"]},
    "justification": {
      "type": "object",
      "additionalProperties": false,
      "required": ["clinical_reasoning", "evidence_summary", "conflict_resolution", "diagnostic_criteria"],
      "properties": {
        "clinical_reasoning": {"type": "string"},
        "evidence_summary": {
          "type": "object",
          "additionalProperties": false,
          "required": ["supporting_evidence", "contradicting_evidence"],
          "properties": {
            "supporting_evidence": {"type": "array", "items": {"type": "string"}},
            "contradicting_evidence": {"type": "array", "items": {"type": "string"}}
          }
        },
        "conflict_resolution": {"type": "string"},
        "diagnostic_criteria": {"type": "string"}
      }
    },
    "recommendations": {"type": "array", "items": {"type": "string"}},
    "attachments": {"type": "array", "items": {"type": "string"}},
    "provenance": {"enum": ["llm", "guideline_fallback"]},
    "guideline_checksum": {"type": "string", "pattern": "^[0-9a-f]{64}$"}
  }
})");
    return schema;
}

DiagnosisReport parse_report(std::string_view reply, std::vector<std::string>* flags) {
    auto text = extract_json_object(reply);
    if (!text) fail(ErrorCode::NotJson, "no JSON object in aggregator reply");
    json j = json::parse(*text, nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::NotJson, "aggregator reply is not valid JSON");

    DiagnosisReport r;
    const std::string diagnosis = require_string(j, "diagnosis", "");
    try {
        r.diagnosis = normalize_label(diagnosis);
    } catch (const Error&) {
        fail(ErrorCode::InvalidEnum, "diagnosis: '" + diagnosis + "' is not CN, MCI or AD");
    }
    if (to_string(r.diagnosis) != trim(diagnosis) && flags)
        flags->push_back("diagnosis '" + diagnosis + "' normalized to " + std::string(to_string(r.diagnosis)));
    const std::string confidence = require_string(j, "confidence", "");
    try {
        r.confidence = parse_confidence(confidence);
    } catch (const Error&) {
        fail(ErrorCode::InvalidEnum, "confidence: '" + confidence + "' is not High, Medium or Low");
    }
    const json& just = require(j, "justification", "");
    r.clinical_reasoning = require_string(just, "clinical_reasoning", "justification");
    const json& summary = require(just, "evidence_summary", "justification");
    r.supporting_evidence = string_list(require(summary, "supporting_evidence", "justification.evidence_summary"),
                                        "justification.evidence_summary.supporting_evidence");
    r.contradicting_evidence = string_list(require(summary, "contradicting_evidence", "justification.evidence_summary"),
                                           "justification.evidence_summary.contradicting_evidence");
    r.conflict_resolution = require_string(just, "conflict_resolution", "justification");
    r.diagnostic_criteria = require_string(just, "diagnostic_criteria", "justification");
    if (j.contains("recommendations") && !j["recommendations"].is_null())
        r.recommendations = string_list(j["recommendations"], "recommendations");
    r.provenance = Provenance::llm;
    return r;
}

DiagnosisReport fallback_aggregate(const AggregationContext& ctx) {
    const auto& table = ctx.thresholds();
    DiagnosisReport r;
    r.provenance = Provenance::guideline_fallback;
    r.guideline_checksum = guideline::guideline_checksum(table);
    r.attachments = attachments_of(ctx.outcomes);
    const std::string note = "Deterministic guideline rules were applied in place of the model aggregator.";

    guideline::Evidence ev;
    guideline::GuidelineDecision d;
    try {
        d = oracle(ctx, ctx.outcomes, &ev);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::NoEvidence) throw;
        r.diagnosis = StagingLabel::MCI;
        r.confidence = ConfidenceLevel::Low;
        std::vector<std::string> risk;
        for (const auto& v : ev.votes)
            if (v.tier == guideline::Tier::risk_factor) risk.push_back(v.note);
        if (!risk.empty()) {
            r.supporting_evidence = risk;
            r.clinical_reasoning =
                "Only risk-factor evidence is available. APOE status is a risk factor and not a standalone "
                "diagnostic criterion, so no stage follows from it. There is insufficient evidence to stage the "
                "patient; MCI is reported provisionally with Low confidence.";
        } else {
            r.supporting_evidence = {"insufficient evidence: no scored cognitive, biomarker or imaging indicator"};
            r.clinical_reasoning =
                "There is insufficient evidence to stage the patient: no cognitive score, biomarker or imaging "
                "finding could be evaluated. MCI is reported provisionally with Low confidence.";
        }
        for (const auto& u : ev.unavailable) r.contradicting_evidence.push_back("unavailable: " + u);
        r.conflict_resolution = note + " No indicator could be staged.";
        r.diagnostic_criteria = "No NIA-AA band could be evaluated (guideline table " + table.version + ").";
        r.recommendations = {"Obtain cognitive assessments (CDR, MMSE or MoCA) before staging.",
                             "Further investigation is required."};
        return r;
    }

    r.diagnosis = d.label;
    r.confidence = d.confidence;
    std::vector<std::string> criteria;
    for (const auto& v : d.votes) {
        using guideline::Tier;
        bool supports = false;
        switch (v.tier) {
            case Tier::primary_cognitive:
                supports = v.label == d.label;
                criteria.push_back(band_text(table, v));
                break;
            case Tier::supporting_biomarker:
            case Tier::supporting_imaging:
                supports = d.label != StagingLabel::CN;
                criteria.push_back(v.note);
                break;
            case Tier::risk_factor:
                supports = d.label != StagingLabel::CN;
                break;
        }
        (supports ? r.supporting_evidence : r.contradicting_evidence).push_back(v.note);
    }
    if (r.supporting_evidence.empty())
        r.supporting_evidence.push_back("primary scores split; the guideline median rule gives " +
                                        std::string(to_string(d.label)));
    for (const auto& u : ev.unavailable) r.contradicting_evidence.push_back("unavailable: " + u);

    r.clinical_reasoning = d.rationale;
    r.conflict_resolution = note;
    std::vector<std::string> conflicts;
    for (const auto& c : d.conflicts)
        if (c.rfind("evidence unavailable", 0) != 0) conflicts.push_back(c);
    if (conflicts.empty()) r.conflict_resolution += " No conflicting indicators.";
    else
        for (const auto& c : conflicts) r.conflict_resolution += " " + c + ".";
    std::string crit;
    for (const auto& c : criteria) crit += (crit.empty() ? "" : "; ") + c;
    r.diagnostic_criteria = "NIA-AA guideline bands (table " + table.version + "): " + (crit.empty() ? "none" : crit) + ".";

    bool imaging = false;
    for (const auto& o : ctx.outcomes) imaging = imaging || (o.tool == tools::kHippocampus && o.status == OutcomeStatus::ok);
    const auto& rec = ctx.record;
    if (r.confidence == ConfidenceLevel::Low) r.recommendations.push_back("Further investigation is required given conflicting or ambiguous evidence.");
    if (!imaging) r.recommendations.push_back("Structural MRI with hippocampal volumetry would refine the staging.");
    if (!rec.csf_abeta42 && !rec.csf_tau && !rec.csf_ptau && d.label != StagingLabel::CN)
        r.recommendations.push_back("CSF biomarkers (Abeta42, tau, p-tau) would help confirm Alzheimer pathology.");
    return r;
}

std::string render_tool_results(const std::vector<ToolOutcome>& outcomes, const std::vector<std::string>& flags) {
    json arr = json::array();
    for (const auto& o : outcomes) {
        json e{{"tool", o.tool}, {"status", tools::to_string(o.status)}, {"parameters", o.parameters}};
        if (o.status == OutcomeStatus::ok) e["result"] = o.payload;
        else e["error"] = o.diagnostics;
        arr.push_back(std::move(e));
    }
    if (arr.empty()) return "No tools were run.";
    json doc{{"outcomes", arr}};
    if (!flags.empty()) doc["verification_flags"] = flags;
    return doc.dump(2);
}

std::string render_patient_info(const PatientRecord& record) {
    json j = record;
    for (const char* k : {"case_id", "label", "doctor_prompt"}) j.erase(k);
    if (j.contains("sex") && j["sex"] == "unknown") j.erase("sex");
    return j.dump(2);
}

namespace {

std::string prompt4(const AggregationContext& ctx, const Verification& verified) {
    std::string user(assets::aggregator_user_prompt());
    user = replace_all(user, "{tool_results}", render_tool_results(verified.outcomes, verified.flags));
    user = replace_all(user, "{patient_data}", render_patient_info(ctx.record));
    user = replace_all(user, "{doctor_prompt}", ctx.doctor_prompt.empty() ? "None" : ctx.doctor_prompt);
    return user;
}

void append_history(const ChatHistory& h, std::vector<llm::Message>& out) {
    for (const auto& t : h.recent(kHistoryCap))
        out.push_back({t.speaker == Speaker::user ? llm::Message::Kind::user : llm::Message::Kind::assistant, t.text});
}

}  // namespace

std::vector<llm::Message> aggregator_messages(const AggregationContext& ctx, const Verification& verified) {
    std::vector<llm::Message> msgs{{llm::Message::Kind::system, std::string(ctx.guideline_text())}};
    append_history(ctx.history, msgs);
    msgs.push_back({llm::Message::Kind::user, prompt4(ctx, verified)});
    return msgs;
}

void to_json(json& j, const AggregationResult& r) {
    j = json{{"report", r.report},
             {"cross_check", r.cross_check},
             {"attempts", r.attempts},
             {"flags", r.flags},
             {"verified_outcomes", r.verified_outcomes}};
}

AggregationResult aggregate(const AggregationContext& ctx, llm::Gateway& gateway, const std::string& case_id,
                            const AggregatorOptions& options, const EventSink& sink) {
    AggregationResult result;
    auto verified = verify_outcomes(ctx.outcomes);
    result.flags = verified.flags;
    result.verified_outcomes = verified.outcomes;
    const auto messages = aggregator_messages(ctx, verified);
    const int max_attempts = std::max(1, options.max_attempts);

    std::optional<DiagnosisReport> parsed;
    for (int attempt = 1; attempt <= max_attempts && !parsed; ++attempt) {
        bool terminal = false;
        std::string problem;
        try {
            ++result.attempts;
            auto completion = gateway.complete(llm::Role::aggregator, messages, case_id, sink);
            parsed = parse_report(completion.text, &result.flags);
            break;
        } catch (const Error& e) {
            problem = e.what();
            terminal = e.code() == ErrorCode::AuthFailure || e.code() == ErrorCode::ContextTooLong ||
                       e.code() == ErrorCode::ConfigInvalid;
        }
        result.flags.push_back("attempt " + std::to_string(attempt) + ": " + problem);
        if (terminal) break;
        if (attempt < max_attempts) emit(sink, kStage, EventKind::retry, "attempt " + std::to_string(attempt) + " " + problem);
    }

    AggregationContext verified_ctx = ctx;
    verified_ctx.outcomes = verified.outcomes;
    if (parsed) {
        result.report = std::move(*parsed);
        result.report.attachments = attachments_of(verified.outcomes);
        result.report.guideline_checksum = guideline::guideline_checksum(ctx.thresholds());
        result.cross_check = cross_check(verified_ctx, verified.outcomes, result.report);
    } else {
        emit(sink, kStage, EventKind::fallback,
             "RetryExhausted after " + std::to_string(result.attempts) + " attempts; guideline rules applied");
        result.report = fallback_aggregate(verified_ctx);
        result.report.conflict_resolution = "Model aggregation failed after " + std::to_string(result.attempts) +
                                            " attempt(s). " + result.report.conflict_resolution;
        result.cross_check = cross_check(verified_ctx, verified.outcomes, result.report);
    }
    return result;
}

std::vector<llm::Message> chat_messages(const AggregationContext& ctx, const DiagnosisReport& current,
                                        std::string_view message) {
    std::vector<llm::Message> msgs{{llm::Message::Kind::system, std::string(ctx.guideline_text())}};
    auto verified = verify_outcomes(ctx.outcomes);
    msgs.push_back({llm::Message::Kind::user, prompt4(ctx, verified)});
    msgs.push_back({llm::Message::Kind::assistant, json(current).dump(2)});
    append_history(ctx.history, msgs);
    msgs.push_back({llm::Message::Kind::user, std::string(message)});
    return msgs;
}

ChatReply chat(const AggregationContext& ctx, const DiagnosisReport& current, std::string_view message,
               llm::Gateway& gateway, const std::string& case_id, const EventSink& sink) {
    ChatReply out;
    auto completion = gateway.complete(llm::Role::aggregator, chat_messages(ctx, current, message), case_id, sink);
    out.text = completion.text;
    try {
        auto revised = parse_report(completion.text);
        auto verified = verify_outcomes(ctx.outcomes);
        AggregationContext vctx = ctx;
        vctx.outcomes = verified.outcomes;
        revised.attachments = attachments_of(verified.outcomes);
        revised.guideline_checksum = guideline::guideline_checksum(ctx.thresholds());
        out.cross_check = cross_check(vctx, verified.outcomes, revised);
        out.revised_report = std::move(revised);
    } catch (const Error&) {
        // plain conversational reply
    }
    return out;
}

}  // namespace dxagent::aggregator
