#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace dxagent {

// ---------------------------------------------------------------------------
// Enumerations
// ---------------------------------------------------------------------------

enum class StagingLabel { CN, MCI, AD };

/// Case-insensitive; accepts CN, NC (alias for CN), MCI, AD with surrounding
/// whitespace ignored. Anything else throws ErrorCode::UnknownLabel.
StagingLabel normalize_label(std::string_view raw);
std::string_view to_string(StagingLabel label) noexcept;

// Ordinal position: CN < MCI < AD.
constexpr int severity(StagingLabel label) noexcept { return static_cast<int>(label); }

inline constexpr StagingLabel kAllLabels[] = {StagingLabel::CN, StagingLabel::MCI, StagingLabel::AD};

enum class ConfidenceLevel { High, Medium, Low };

ConfidenceLevel parse_confidence(std::string_view raw);
std::string_view to_string(ConfidenceLevel level) noexcept;
ConfidenceLevel lower_confidence(ConfidenceLevel level) noexcept;

enum class Sex { male, female, unknown };

Sex parse_sex(std::string_view raw);
std::string_view to_string(Sex sex) noexcept;

enum class Provenance { llm, guideline_fallback };

std::string_view to_string(Provenance p) noexcept;
Provenance parse_provenance(std::string_view raw);

// ---------------------------------------------------------------------------
// Validation results
// ---------------------------------------------------------------------------

struct Violation {
    std::string field;
    std::string message;

    bool operator==(const Violation&) const = default;
};

struct ValidationReport {
    std::vector<Violation> violations;
    // Informational flags that do not make the input invalid.
    std::vector<std::string> notices;

    bool ok() const noexcept { return violations.empty(); }
    bool has(std::string_view message_fragment) const;
};

void to_json(nlohmann::json& j, const Violation& v);
void to_json(nlohmann::json& j, const ValidationReport& r);

// ---------------------------------------------------------------------------
// Patient record
// ---------------------------------------------------------------------------

struct PatientRecord {
    std::string case_id;
    std::optional<double> age;        // years
    Sex sex = Sex::unknown;
    std::optional<double> education;  // years
    std::optional<double> cdr;        // global score, one of {0, 0.5, 1, 2, 3}
    std::optional<double> mmse;       // integer 0-30
    std::optional<double> moca;       // integer 0-30
    std::optional<double> adas11;
    std::optional<double> adas13;
    std::optional<double> faq;        // integer 0-30
    std::optional<double> csf_abeta42;  // pg/mL
    std::optional<double> csf_tau;      // pg/mL
    std::optional<double> csf_ptau;     // pg/mL
    std::optional<std::string> apoe_genotype;  // "x/y", x,y in {2,3,4}
    std::optional<std::string> vcf_ref;
    std::optional<std::string> mri_ref;
    std::optional<std::string> doctor_prompt;
    std::optional<StagingLabel> label;  // ground truth, evaluation only

    bool operator==(const PatientRecord&) const = default;
};

// Flat JSON object; absent fields are omitted, never written as sentinels.
void to_json(nlohmann::json& j, const PatientRecord& r);
void from_json(const nlohmann::json& j, PatientRecord& r);

PatientRecord parse_patient_record(std::string_view json_text);
std::vector<PatientRecord> load_cohort_jsonl(std::string_view text);

/// Declarative field rules shared with clients (served as a manifest).
struct FieldRule {
    std::string field;
    std::string type;  // "number" | "integer" | "string" | "enum"
    std::optional<double> min;
    std::optional<double> max;
    bool min_exclusive = false;
    std::vector<std::string> allowed;  // enum / discrete numeric values
    std::optional<std::string> pattern;
};

const std::vector<FieldRule>& patient_record_rules();
nlohmann::json patient_record_rule_manifest();

ValidationReport validate_patient_record(const PatientRecord& record);

bool is_valid_apoe(std::string_view genotype);
int apoe_e4_count(std::string_view genotype);
int apoe_e2_count(std::string_view genotype);

// ---------------------------------------------------------------------------
// Units
// ---------------------------------------------------------------------------

enum class VolumeUnit { mL, mm3 };

VolumeUnit parse_volume_unit(std::string_view raw);
std::string_view to_string(VolumeUnit unit) noexcept;

/// 1 mL = 1000 mm^3. Throws NegativeVolume for value < 0.
double convert_volume(double value, VolumeUnit from, VolumeUnit to);

// ---------------------------------------------------------------------------
// Query bundle and chat history
// ---------------------------------------------------------------------------

enum class Intent { diagnose, predict_progression, explain, chat };

std::string_view to_string(Intent intent) noexcept;

struct QueryBundle {
    Intent intent = Intent::diagnose;
    std::string intent_text;   // the user query as given
    nlohmann::json text_payload = nlohmann::json::object();  // non-file fields only
    std::vector<std::string> image_payload;                  // subset of {mri_ref}
    // Genomic files are non-image data; the path travels beside the text
    // payload so it can parameterize phs_calculator.
    std::optional<std::string> genomic_ref;
    std::optional<double> future_years;  // horizon requested by the query, if any
};

enum class Speaker { user, agent };

struct ChatTurn {
    Speaker speaker = Speaker::user;
    std::string text;
    std::int64_t timestamp_ms = 0;

    bool operator==(const ChatTurn&) const = default;
};

class ChatHistory {
public:
    ChatHistory() = default;

    /// Append-only; throws InvalidArgument if the timestamp goes backwards.
    void append(ChatTurn turn);

    const std::vector<ChatTurn>& turns() const noexcept { return turns_; }
    std::vector<ChatTurn> recent(std::size_t cap) const;
    std::size_t size() const noexcept { return turns_.size(); }

    bool operator==(const ChatHistory&) const = default;

private:
    std::vector<ChatTurn> turns_;
};

void to_json(nlohmann::json& j, const ChatTurn& t);
void from_json(const nlohmann::json& j, ChatTurn& t);

// ---------------------------------------------------------------------------
// Diagnosis report
// ---------------------------------------------------------------------------

struct DiagnosisReport {
    StagingLabel diagnosis = StagingLabel::MCI;
    ConfidenceLevel confidence = ConfidenceLevel::Low;
    std::string clinical_reasoning;
    std::vector<std::string> supporting_evidence;
    std::vector<std::string> contradicting_evidence;
    std::string conflict_resolution = "None";
    std::string diagnostic_criteria;
    std::vector<std::string> recommendations;
    std::vector<std::string> attachments;
    Provenance provenance = Provenance::llm;
    std::string guideline_checksum;

    bool operator==(const DiagnosisReport&) const = default;
};

/// The serialized form nests justification fields exactly as the aggregator
/// output schema does, plus attachments/provenance/guideline_checksum.
void to_json(nlohmann::json& j, const DiagnosisReport& r);
void from_json(const nlohmann::json& j, DiagnosisReport& r);

/// Invariant check: supporting_evidence must be non-empty for fallback reports.
ValidationReport validate_report(const DiagnosisReport& report);

}  // namespace dxagent
