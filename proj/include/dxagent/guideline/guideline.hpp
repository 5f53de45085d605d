#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dxagent/domain/domain.hpp"
#include "dxagent/tools/registry.hpp"

namespace dxagent::guideline {

struct Band {
    StagingLabel label = StagingLabel::CN;
    std::optional<double> min;
    std::optional<double> max;
    bool min_exclusive = false;
    bool max_exclusive = false;

    bool contains(double v) const noexcept;
};

struct IndicatorBands {
    std::string name;
    double legal_min = 0.0;
    std::optional<double> legal_max;
    bool integer = false;
    std::vector<double> grid;  // non-empty means only these values are legal
    std::vector<Band> bands;
};

/// Age/sex-specific atrophy threshold; the first matching override wins.
struct HippocampusOverride {
    std::optional<Sex> sex;
    std::optional<double> age_min;
    std::optional<double> age_max;
    double atrophic_total_mm3 = 6000.0;
};

struct ThresholdTable {
    std::string version;
    std::map<std::string, IndicatorBands> indicators;
    std::optional<double> csf_abeta42_low;
    std::optional<double> csf_tau_high;
    std::optional<double> csf_ptau_high;
    double hippocampus_atrophic_total_mm3 = 6000.0;
    std::vector<HippocampusOverride> hippocampus_overrides;
    nlohmann::json source;  // the document it was parsed from

    double hippocampus_threshold(std::optional<double> age, Sex sex) const;
};

/// Validates that every indicator's bands are ordered, non-overlapping and
/// cover the legal range. Throws ConfigInvalid.
ThresholdTable parse_threshold_table(const nlohmann::json& j);
const ThresholdTable& default_threshold_table();

/// SHA-256 over the guideline prompt text and the canonical table JSON.
std::string guideline_checksum(const ThresholdTable& table);

enum class Tier { primary_cognitive, supporting_biomarker, supporting_imaging, risk_factor };

std::string_view to_string(Tier tier) noexcept;

struct IndicatorVote {
    std::string indicator;
    std::optional<StagingLabel> label;  // primary votes only
    Tier tier = Tier::primary_cognitive;
    std::optional<double> value;
    std::string note;

    bool operator==(const IndicatorVote&) const = default;
};

void to_json(nlohmann::json& j, const IndicatorVote& v);

/// Throws UnknownIndicator, or OutOfRange for values outside the legal
/// range or grid.
IndicatorVote band_indicator(std::string_view indicator, double value, const ThresholdTable& table);

struct Evidence {
    std::vector<IndicatorVote> votes;
    std::vector<std::string> unavailable;  // failed tools and other evidence gaps
};

Evidence collect_votes(const PatientRecord& record, const std::vector<tools::ToolOutcome>& outcomes,
                       const ThresholdTable& table);

struct GuidelineDecision {
    StagingLabel label = StagingLabel::MCI;
    ConfidenceLevel confidence = ConfidenceLevel::Low;
    std::vector<IndicatorVote> votes;
    std::vector<std::string> conflicts;
    std::string rationale;
};

void to_json(nlohmann::json& j, const GuidelineDecision& d);

/// Staging rules:
///  - CDR present: the label is CDR's band.
///  - otherwise the ordinal median of primary labels; an even split
///    (lower and upper median differ) goes to the upper median when
///    supporting impairment evidence exists, else to MCI;
///  - CN from primaries with supporting impairment evidence becomes MCI;
///  - supporting evidence alone gives MCI with Low confidence.
/// Confidence: High when every primary agrees and no supporting vote
/// contradicts; Medium when primaries agree but supporting evidence
/// contradicts, or an adjacent split was resolved by supporting evidence;
/// otherwise Low.
/// Throws NoEvidence when there are neither primary nor supporting votes.
GuidelineDecision decide_stage(const std::vector<IndicatorVote>& votes, const ThresholdTable& table,
                               const std::vector<std::string>& unavailable = {});

}  // namespace dxagent::guideline
