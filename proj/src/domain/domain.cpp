#include "dxagent/domain/domain.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <sstream>

#include "dxagent/core/error.hpp"
#include "dxagent/core/util.hpp"

namespace dxagent {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Enumerations
// ---------------------------------------------------------------------------

StagingLabel normalize_label(std::string_view raw) {
    const auto token = to_lower(trim(raw));
    if (token == "cn" || token == "nc") return StagingLabel::CN;
    if (token == "mci") return StagingLabel::MCI;
    if (token == "ad") return StagingLabel::AD;
    fail(ErrorCode::UnknownLabel, "'" + std::string(raw) + "' is not one of CN, MCI, AD");
}

std::string_view to_string(StagingLabel label) noexcept {
    switch (label) {
        case StagingLabel::CN: return "CN";
        case StagingLabel::MCI: return "MCI";
        case StagingLabel::AD: return "AD";
    }
    return "MCI";
}

ConfidenceLevel parse_confidence(std::string_view raw) {
    const auto t = trim(raw);
    if (t == "High") return ConfidenceLevel::High;
    if (t == "Medium") return ConfidenceLevel::Medium;
    if (t == "Low") return ConfidenceLevel::Low;
    fail(ErrorCode::InvalidEnum, "confidence '" + std::string(raw) + "' is not High, Medium or Low");
}

std::string_view to_string(ConfidenceLevel level) noexcept {
    switch (level) {
        case ConfidenceLevel::High: return "High";
        case ConfidenceLevel::Medium: return "Medium";
        case ConfidenceLevel::Low: return "Low";
    }
    return "Low";
}

ConfidenceLevel lower_confidence(ConfidenceLevel level) noexcept {
    return level == ConfidenceLevel::High ? ConfidenceLevel::Medium : ConfidenceLevel::Low;
}

Sex parse_sex(std::string_view raw) {
    const auto t = to_lower(trim(raw));
    if (t == "male" || t == "m") return Sex::male;
    if (t == "female" || t == "f") return Sex::female;
    if (t == "unknown" || t.empty()) return Sex::unknown;
    fail(ErrorCode::InvalidRecord, "sex '" + std::string(raw) + "' is not male, female or unknown");
}

std::string_view to_string(Sex sex) noexcept {
    switch (sex) {
        case Sex::male: return "male";
        case Sex::female: return "female";
        case Sex::unknown: return "unknown";
    }
    return "unknown";
}

std::string_view to_string(Provenance p) noexcept {
    return p == Provenance::llm ? "llm" : "guideline_fallback";
}

Provenance parse_provenance(std::string_view raw) {
    if (raw == "llm") return Provenance::llm;
    if (raw == "guideline_fallback") return Provenance::guideline_fallback;
    fail(ErrorCode::InvalidEnum, "provenance '" + std::string(raw) + "'");
}

std::string_view to_string(Intent intent) noexcept {
    switch (intent) {
        case Intent::diagnose: return "diagnose";
        case Intent::predict_progression: return "predict_progression";
        case Intent::explain: return "explain";
        case Intent::chat: return "chat";
    }
    return "diagnose";
}

// ---------------------------------------------------------------------------
// Validation results
// ---------------------------------------------------------------------------

bool ValidationReport::has(std::string_view fragment) const {
    return std::any_of(violations.begin(), violations.end(),
                       [&](const Violation& v) { return v.message.find(fragment) != std::string::npos; });
}

void to_json(json& j, const Violation& v) { j = json{{"field", v.field}, {"message", v.message}}; }

void to_json(json& j, const ValidationReport& r) {
    j = json{{"violations", r.violations}, {"notices", r.notices}};
}

// ---------------------------------------------------------------------------
// Patient record JSON
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void put(json& j, const char* key, const std::optional<T>& v) {
    if (v) j[key] = *v;
}

std::optional<double> get_number(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_number()) fail(ErrorCode::InvalidRecord, std::string(key) + " must be a number");
    return it->get<double>();
}

std::optional<std::string> get_string(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) fail(ErrorCode::InvalidRecord, std::string(key) + " must be a string");
    return it->get<std::string>();
}

}  // namespace

void to_json(json& j, const PatientRecord& r) {
    j = json::object();
    j["case_id"] = r.case_id;
    put(j, "age", r.age);
    j["sex"] = to_string(r.sex);
    put(j, "education", r.education);
    put(j, "cdr", r.cdr);
    put(j, "mmse", r.mmse);
    put(j, "moca", r.moca);
    put(j, "adas11", r.adas11);
    put(j, "adas13", r.adas13);
    put(j, "faq", r.faq);
    put(j, "csf_abeta42", r.csf_abeta42);
    put(j, "csf_tau", r.csf_tau);
    put(j, "csf_ptau", r.csf_ptau);
    put(j, "apoe_genotype", r.apoe_genotype);
    put(j, "vcf_ref", r.vcf_ref);
    put(j, "mri_ref", r.mri_ref);
    put(j, "doctor_prompt", r.doctor_prompt);
    if (r.label) j["label"] = to_string(*r.label);
}

void from_json(const json& j, PatientRecord& r) {
    if (!j.is_object()) fail(ErrorCode::InvalidRecord, "patient record must be a JSON object");
    r = PatientRecord{};
    if (auto it = j.find("case_id"); it != j.end() && !it->is_null()) {
        r.case_id = it->is_string() ? it->get<std::string>() : it->dump();
    }
    r.age = get_number(j, "age");
    if (auto s = get_string(j, "sex")) r.sex = parse_sex(*s);
    r.education = get_number(j, "education");
    r.cdr = get_number(j, "cdr");
    r.mmse = get_number(j, "mmse");
    r.moca = get_number(j, "moca");
    r.adas11 = get_number(j, "adas11");
    r.adas13 = get_number(j, "adas13");
    r.faq = get_number(j, "faq");
    r.csf_abeta42 = get_number(j, "csf_abeta42");
    r.csf_tau = get_number(j, "csf_tau");
    r.csf_ptau = get_number(j, "csf_ptau");
    r.apoe_genotype = get_string(j, "apoe_genotype");
    r.vcf_ref = get_string(j, "vcf_ref");
    r.mri_ref = get_string(j, "mri_ref");
    r.doctor_prompt = get_string(j, "doctor_prompt");
    if (auto l = get_string(j, "label")) r.label = normalize_label(*l);
}

PatientRecord parse_patient_record(std::string_view json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::InvalidRecord, std::string("record is not valid JSON: ") + e.what());
    }
    return j.get<PatientRecord>();
}

std::vector<PatientRecord> load_cohort_jsonl(std::string_view text) {
    std::vector<PatientRecord> out;
    std::size_t line_no = 0;
    for (const auto& line : split(text, '\n')) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            out.push_back(parse_patient_record(line));
        } catch (const Error& e) {
            fail(ErrorCode::InvalidRecord, "line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Record validation
// ---------------------------------------------------------------------------

const std::vector<FieldRule>& patient_record_rules() {
    static const std::vector<FieldRule> rules = [] {
        std::vector<FieldRule> r;
        r.push_back({"age", "number", 0.0, std::nullopt, true, {}, std::nullopt});
        r.push_back({"sex", "enum", std::nullopt, std::nullopt, false, {"male", "female", "unknown"}, std::nullopt});
        r.push_back({"education", "number", 0.0, std::nullopt, false, {}, std::nullopt});
        r.push_back({"cdr", "number", 0.0, 3.0, false, {"0", "0.5", "1", "2", "3"}, std::nullopt});
        r.push_back({"mmse", "integer", 0.0, 30.0, false, {}, std::nullopt});
        r.push_back({"moca", "integer", 0.0, 30.0, false, {}, std::nullopt});
        r.push_back({"adas11", "number", 0.0, std::nullopt, false, {}, std::nullopt});
        r.push_back({"adas13", "number", 0.0, std::nullopt, false, {}, std::nullopt});
        r.push_back({"faq", "integer", 0.0, 30.0, false, {}, std::nullopt});
        r.push_back({"csf_abeta42", "number", 0.0, std::nullopt, false, {}, std::nullopt});
        r.push_back({"csf_tau", "number", 0.0, std::nullopt, false, {}, std::nullopt});
        r.push_back({"csf_ptau", "number", 0.0, std::nullopt, false, {}, std::nullopt});
        r.push_back({"apoe_genotype", "string", std::nullopt, std::nullopt, false, {}, std::string("^[234]/[234]$")});
        return r;
    }();
    return rules;
}

json patient_record_rule_manifest() {
    json rules = json::array();
    for (const auto& r : patient_record_rules()) {
        json e{{"field", r.field}, {"type", r.type}};
        if (r.min) e["min"] = *r.min;
        if (r.max) e["max"] = *r.max;
        if (r.min_exclusive) e["min_exclusive"] = true;
        if (!r.allowed.empty()) e["allowed"] = r.allowed;
        if (r.pattern) e["pattern"] = *r.pattern;
        rules.push_back(std::move(e));
    }
    return json{{"version", 1}, {"rules", rules},
                {"requires_any_of", {"age", "education", "cdr", "mmse", "moca", "adas11", "adas13", "faq",
                                     "csf_abeta42", "csf_tau", "csf_ptau", "apoe_genotype", "vcf_ref", "mri_ref",
                                     "doctor_prompt", "sex"}}};
}

namespace {

std::string format_number(double v) {
    std::ostringstream ss;
    ss << v;
    return ss.str();
}

std::string range_text(const FieldRule& rule) {
    std::string lo = rule.min ? format_number(*rule.min) : "-inf";
    std::string hi = rule.max ? format_number(*rule.max) : "inf";
    if (rule.max) return lo + "-" + hi;
    return (rule.min_exclusive ? "> " : ">= ") + lo;
}

void check_number(const FieldRule& rule, double value, std::vector<Violation>& out) {
    if (!std::isfinite(value)) {
        out.push_back({rule.field, rule.field + " is not a finite number"});
        return;
    }
    if (!rule.allowed.empty()) {
        bool hit = std::any_of(rule.allowed.begin(), rule.allowed.end(),
                               [&](const std::string& a) { return std::stod(a) == value; });
        if (!hit) {
            std::string list;
            for (const auto& a : rule.allowed) list += (list.empty() ? "" : ", ") + a;
            out.push_back({rule.field, rule.field + " must be one of " + list});
        }
        return;
    }
    bool below = rule.min && (rule.min_exclusive ? value <= *rule.min : value < *rule.min);
    bool above = rule.max && value > *rule.max;
    if (below || above) {
        out.push_back({rule.field, rule.field + " out of range " + range_text(rule)});
        return;
    }
    if (rule.type == "integer" && std::floor(value) != value) {
        out.push_back({rule.field, rule.field + " must be an integer"});
    }
}

std::optional<double> numeric_field(const PatientRecord& r, std::string_view field) {
    if (field == "age") return r.age;
    if (field == "education") return r.education;
    if (field == "cdr") return r.cdr;
    if (field == "mmse") return r.mmse;
    if (field == "moca") return r.moca;
    if (field == "adas11") return r.adas11;
    if (field == "adas13") return r.adas13;
    if (field == "faq") return r.faq;
    if (field == "csf_abeta42") return r.csf_abeta42;
    if (field == "csf_tau") return r.csf_tau;
    if (field == "csf_ptau") return r.csf_ptau;
    return std::nullopt;
}

}  // namespace

bool is_valid_apoe(std::string_view genotype) {
    static const std::regex pattern("^[234]/[234]$");
    return std::regex_match(genotype.begin(), genotype.end(), pattern);
}

int apoe_e4_count(std::string_view genotype) {
    if (!is_valid_apoe(genotype)) fail(ErrorCode::InvalidArgument, "bad APOE genotype " + std::string(genotype));
    return (genotype[0] == '4') + (genotype[2] == '4');
}

int apoe_e2_count(std::string_view genotype) {
    if (!is_valid_apoe(genotype)) fail(ErrorCode::InvalidArgument, "bad APOE genotype " + std::string(genotype));
    return (genotype[0] == '2') + (genotype[2] == '2');
}

ValidationReport validate_patient_record(const PatientRecord& record) {
    ValidationReport report;
    for (const auto& rule : patient_record_rules()) {
        if (rule.type == "number" || rule.type == "integer") {
            if (auto v = numeric_field(record, rule.field)) check_number(rule, *v, report.violations);
        }
    }
    if (record.apoe_genotype && !is_valid_apoe(*record.apoe_genotype)) {
        report.violations.push_back(
            {"apoe_genotype", "apoe pattern: '" + *record.apoe_genotype + "' is not x/y with x,y in {2,3,4}"});
    }
    const bool any_field = record.age || record.education || record.cdr || record.mmse || record.moca ||
                           record.adas11 || record.adas13 || record.faq || record.csf_abeta42 || record.csf_tau ||
                           record.csf_ptau || record.apoe_genotype || record.vcf_ref || record.mri_ref ||
                           record.doctor_prompt || record.sex != Sex::unknown;
    if (!any_field) {
        report.violations.push_back({"case_id", "record has no clinical fields"});
    }
    return report;
}

// ---------------------------------------------------------------------------
// Units
// ---------------------------------------------------------------------------

VolumeUnit parse_volume_unit(std::string_view raw) {
    const auto t = to_lower(trim(raw));
    if (t == "ml" || t == "cm3" || t == "cc") return VolumeUnit::mL;
    if (t == "mm3" || t == "mm^3" || t == "mm³") return VolumeUnit::mm3;
    fail(ErrorCode::InvalidArgument, "unknown volume unit '" + std::string(raw) + "'");
}

std::string_view to_string(VolumeUnit unit) noexcept { return unit == VolumeUnit::mL ? "mL" : "mm3"; }

double convert_volume(double value, VolumeUnit from, VolumeUnit to) {
    if (value < 0 || std::isnan(value)) fail(ErrorCode::NegativeVolume, "volume " + format_number(value) + " < 0");
    if (from == to) return value;
    return from == VolumeUnit::mL ? value * 1000.0 : value / 1000.0;
}

// ---------------------------------------------------------------------------
// Chat history
// ---------------------------------------------------------------------------

void ChatHistory::append(ChatTurn turn) {
    if (!turns_.empty() && turn.timestamp_ms < turns_.back().timestamp_ms) {
        fail(ErrorCode::InvalidArgument, "chat timestamps must be non-decreasing");
    }
    turns_.push_back(std::move(turn));
}

std::vector<ChatTurn> ChatHistory::recent(std::size_t cap) const {
    if (turns_.size() <= cap) return turns_;
    return {turns_.end() - static_cast<std::ptrdiff_t>(cap), turns_.end()};
}

void to_json(json& j, const ChatTurn& t) {
    j = json{{"speaker", t.speaker == Speaker::user ? "user" : "agent"},
             {"text", t.text},
             {"timestamp_ms", t.timestamp_ms}};
}

void from_json(const json& j, ChatTurn& t) {
    const auto s = j.at("speaker").get<std::string>();
    if (s != "user" && s != "agent") fail(ErrorCode::InvalidArgument, "speaker '" + s + "'");
    t.speaker = s == "user" ? Speaker::user : Speaker::agent;
    t.text = j.at("text").get<std::string>();
    t.timestamp_ms = j.value("timestamp_ms", std::int64_t{0});
}

// ---------------------------------------------------------------------------
// Diagnosis report
// ---------------------------------------------------------------------------

void to_json(json& j, const DiagnosisReport& r) {
    j = json{{"diagnosis", to_string(r.diagnosis)},
             {"confidence", to_string(r.confidence)},
             {"justification",
              {{"clinical_reasoning", r.clinical_reasoning},
               {"evidence_summary",
                {{"supporting_evidence", r.supporting_evidence},
                 {"contradicting_evidence", r.contradicting_evidence}}},
               {"conflict_resolution", r.conflict_resolution},
               {"diagnostic_criteria", r.diagnostic_criteria}}},
             {"recommendations", r.recommendations},
             {"attachments", r.attachments},
             {"provenance", to_string(r.provenance)},
             {"guideline_checksum", r.guideline_checksum}};
}

void from_json(const json& j, DiagnosisReport& r) {
    r.diagnosis = normalize_label(j.at("diagnosis").get<std::string>());
    r.confidence = parse_confidence(j.at("confidence").get<std::string>());
    const auto& just = j.at("justification");
    r.clinical_reasoning = just.at("clinical_reasoning").get<std::string>();
    const auto& ev = just.at("evidence_summary");
    r.supporting_evidence = ev.at("supporting_evidence").get<std::vector<std::string>>();
    r.contradicting_evidence = ev.at("contradicting_evidence").get<std::vector<std::string>>();
    r.conflict_resolution = just.at("conflict_resolution").get<std::string>();
    r.diagnostic_criteria = just.at("diagnostic_criteria").get<std::string>();
    r.recommendations = j.value("recommendations", std::vector<std::string>{});
    r.attachments = j.value("attachments", std::vector<std::string>{});
    r.provenance = parse_provenance(j.value("provenance", std::string("llm")));
    r.guideline_checksum = j.value("guideline_checksum", std::string{});
}

ValidationReport validate_report(const DiagnosisReport& report) {
    ValidationReport out;
    if (report.provenance == Provenance::guideline_fallback && report.supporting_evidence.empty()) {
        out.violations.push_back({"supporting_evidence", "fallback report without supporting evidence"});
    }
    return out;
}

}  // namespace dxagent
