#include "dxagent/guideline/guideline.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "dxagent/core/assets.hpp"
#include "dxagent/core/error.hpp"
#include "dxagent/core/util.hpp"
#include "dxagent/tools/builtin.hpp"

namespace dxagent::guideline {

using nlohmann::json;

bool Band::contains(double v) const noexcept {
    if (min && (min_exclusive ? v <= *min : v < *min)) return false;
    if (max && (max_exclusive ? v >= *max : v > *max)) return false;
    return true;
}

double ThresholdTable::hippocampus_threshold(std::optional<double> age, Sex sex) const {
    for (const auto& o : hippocampus_overrides) {
        if (o.sex && *o.sex != sex) continue;
        if (o.age_min && (!age || *age < *o.age_min)) continue;
        if (o.age_max && (!age || *age > *o.age_max)) continue;
        return o.atrophic_total_mm3;
    }
    return hippocampus_atrophic_total_mm3;
}

namespace {

std::string fmt(double v) {
    std::ostringstream s;
    s << v;
    return s.str();
}

std::optional<double> opt_number(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    if (!j[key].is_number()) fail(ErrorCode::ConfigInvalid, std::string(key) + " must be a number or null");
    return j[key].get<double>();
}

void check_bands(const IndicatorBands& ind) {
    const auto& b = ind.bands;
    if (b.empty()) fail(ErrorCode::ConfigInvalid, ind.name + ": no bands");
    // severity must move in one direction along the value axis
    bool up = true, down = true;
    for (std::size_t i = 1; i < b.size(); ++i) {
        up = up && severity(b[i].label) >= severity(b[i - 1].label);
        down = down && severity(b[i].label) <= severity(b[i - 1].label);
    }
    if (!up && !down) fail(ErrorCode::ConfigInvalid, ind.name + ": band labels are not ordered by severity");

    if (!ind.grid.empty()) {
        for (double g : ind.grid) {
            int hits = 0;
            for (const auto& band : b) hits += band.contains(g);
            if (hits != 1) fail(ErrorCode::ConfigInvalid, ind.name + ": grid value " + fmt(g) + " is in " + std::to_string(hits) + " bands");
        }
        return;
    }
    if (!b.front().min || *b.front().min != ind.legal_min || b.front().min_exclusive)
        fail(ErrorCode::ConfigInvalid, ind.name + ": first band must start at the legal minimum");
    for (std::size_t i = 0; i + 1 < b.size(); ++i) {
        if (!b[i].max || !b[i + 1].min || *b[i].max != *b[i + 1].min || b[i].max_exclusive == b[i + 1].min_exclusive)
            fail(ErrorCode::ConfigInvalid, ind.name + ": bands " + std::to_string(i) + " and " + std::to_string(i + 1) +
                                               " leave a gap or overlap");
    }
    const auto& last = b.back();
    if (ind.legal_max ? (!last.max || *last.max != *ind.legal_max || last.max_exclusive) : last.max.has_value())
        fail(ErrorCode::ConfigInvalid, ind.name + ": last band must end at the legal maximum");
}

}  // namespace

ThresholdTable parse_threshold_table(const json& j) {
    ThresholdTable t;
    t.source = j;
    try {
        t.version = j.value("version", "unversioned");
        for (const auto& [name, spec] : j.at("indicators").items()) {
            IndicatorBands ind;
            ind.name = name;
            ind.legal_min = spec.value("legal_min", 0.0);
            ind.legal_max = opt_number(spec, "legal_max");
            ind.integer = spec.value("integer", false);
            ind.grid = spec.value("grid", std::vector<double>{});
            for (const auto& b : spec.at("bands")) {
                Band band;
                band.label = normalize_label(b.at("label").get<std::string>());
                band.min = opt_number(b, "min");
                band.max = opt_number(b, "max");
                band.min_exclusive = b.value("min_exclusive", false);
                band.max_exclusive = b.value("max_exclusive", false);
                ind.bands.push_back(band);
            }
            check_bands(ind);
            t.indicators.emplace(name, std::move(ind));
        }
        const json bio = j.value("biomarkers", json::object());
        t.csf_abeta42_low = opt_number(bio, "csf_abeta42_low");
        t.csf_tau_high = opt_number(bio, "csf_tau_high");
        t.csf_ptau_high = opt_number(bio, "csf_ptau_high");
        t.hippocampus_atrophic_total_mm3 = j.value("hippocampus_atrophic_total_mm3", 6000.0);
        for (const auto& o : j.value("hippocampus_overrides", json::array())) {
            HippocampusOverride h;
            if (o.contains("sex")) h.sex = parse_sex(o["sex"].get<std::string>());
            h.age_min = opt_number(o, "age_min");
            h.age_max = opt_number(o, "age_max");
            h.atrophic_total_mm3 = o.at("atrophic_total_mm3").get<double>();
            t.hippocampus_overrides.push_back(h);
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::ConfigInvalid, std::string("threshold table: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ConfigInvalid) throw;
        fail(ErrorCode::ConfigInvalid, std::string("threshold table: ") + e.what());
    }
    return t;
}

const ThresholdTable& default_threshold_table() {
    static const ThresholdTable t = parse_threshold_table(json::parse(assets::default_threshold_table()));
    return t;
}

std::string guideline_checksum(const ThresholdTable& table) {
    return sha256_hex(std::string(assets::aggregator_system_prompt()) + "\n" + table.source.dump());
}

std::string_view to_string(Tier tier) noexcept {
    switch (tier) {
        case Tier::primary_cognitive: return "primary_cognitive";
        case Tier::supporting_biomarker: return "supporting_biomarker";
        case Tier::supporting_imaging: return "supporting_imaging";
        case Tier::risk_factor: return "risk_factor";
    }
    return "risk_factor";
}

void to_json(json& j, const IndicatorVote& v) {
    j = json{{"indicator", v.indicator}, {"tier", to_string(v.tier)}, {"note", v.note}};
    j["label"] = v.label ? json(to_string(*v.label)) : json(nullptr);
    j["value"] = v.value ? json(*v.value) : json(nullptr);
}

void to_json(json& j, const GuidelineDecision& d) {
    j = json{{"label", to_string(d.label)},
             {"confidence", to_string(d.confidence)},
             {"votes", d.votes},
             {"conflicts", d.conflicts},
             {"rationale", d.rationale}};
}

IndicatorVote band_indicator(std::string_view indicator, double value, const ThresholdTable& table) {
    auto it = table.indicators.find(std::string(indicator));
    if (it == table.indicators.end()) fail(ErrorCode::UnknownIndicator, "no bands for indicator '" + std::string(indicator) + "'");
    const auto& ind = it->second;
    const std::string name(indicator);
    if (!std::isfinite(value) || value < ind.legal_min || (ind.legal_max && value > *ind.legal_max))
        fail(ErrorCode::OutOfRange, name + " value " + fmt(value) + " outside its legal range");
    if (ind.integer && std::floor(value) != value) fail(ErrorCode::OutOfRange, name + " must be an integer");
    if (!ind.grid.empty() && std::find(ind.grid.begin(), ind.grid.end(), value) == ind.grid.end())
        fail(ErrorCode::OutOfRange, name + " value " + fmt(value) + " is not on the scoring grid");
    for (const auto& b : ind.bands) {
        if (b.contains(value)) {
            IndicatorVote v;
            v.indicator = name;
            v.label = b.label;
            v.tier = Tier::primary_cognitive;
            v.value = value;
            v.note = name + " " + fmt(value) + " -> " + std::string(to_string(b.label));
            return v;
        }
    }
    fail(ErrorCode::OutOfRange, name + " value " + fmt(value) + " falls in no band");
}

Evidence collect_votes(const PatientRecord& r, const std::vector<tools::ToolOutcome>& outcomes, const ThresholdTable& table) {
    Evidence ev;
    const std::pair<const char*, const std::optional<double>*> scores[] = {
        {"cdr", &r.cdr}, {"mmse", &r.mmse}, {"moca", &r.moca}, {"adas11", &r.adas11}, {"adas13", &r.adas13}, {"faq", &r.faq}};
    for (const auto& [name, value] : scores) {
        if (!*value) continue;
        try {
            ev.votes.push_back(band_indicator(name, **value, table));
        } catch (const Error& e) {
            ev.unavailable.push_back(std::string(name) + " not scored: " + e.what());
        }
    }

    auto biomarker = [&](const char* name, const std::optional<double>& value, const std::optional<double>& cutoff, bool low) {
        if (!value) return;
        if (!cutoff) {
            ev.unavailable.push_back(std::string(name) + " present but no cutoff is configured; no vote cast");
            return;
        }
        const bool abnormal = low ? *value < *cutoff : *value > *cutoff;
        if (!abnormal) return;
        IndicatorVote v;
        v.indicator = name;
        v.tier = Tier::supporting_biomarker;
        v.value = value;
        v.note = std::string(name) + " " + fmt(*value) + " pg/mL " + (low ? "below " : "above ") + fmt(*cutoff) +
                 " (supports impairment)";
        ev.votes.push_back(v);
    };
    biomarker("csf_abeta42", r.csf_abeta42, table.csf_abeta42_low, true);
    biomarker("csf_tau", r.csf_tau, table.csf_tau_high, false);
    biomarker("csf_ptau", r.csf_ptau, table.csf_ptau_high, false);

    std::optional<std::string> apoe = r.apoe_genotype;
    bool apoe_ambiguous = false;
    for (const auto& o : outcomes) {
        if (o.status != tools::OutcomeStatus::ok) {
            ev.unavailable.push_back(o.tool + " " + std::string(tools::to_string(o.status)) +
                                     (o.diagnostics.empty() ? "" : ": " + o.diagnostics));
            continue;
        }
        if (o.tool == tools::kHippocampus && o.payload.contains("measures") && o.payload["measures"].contains("total")) {
            const double total = o.payload["measures"]["total"].get<double>();
            const double threshold = table.hippocampus_threshold(r.age, r.sex);
            if (total < threshold) {
                IndicatorVote v;
                v.indicator = "hippocampus_total";
                v.tier = Tier::supporting_imaging;
                v.value = total;
                v.note = "hippocampal total " + fmt(total) + " mm3 below " + fmt(threshold) + " mm3 (atrophy supports impairment)";
                ev.votes.push_back(v);
            }
        }
        if (o.tool == tools::kPhsCalculator && !apoe && o.payload.contains("apoe_inferred")) {
            apoe = o.payload["apoe_inferred"].value("genotype", "");
            apoe_ambiguous = o.payload["apoe_inferred"].value("ambiguous", false);
        }
    }
    if (apoe && is_valid_apoe(*apoe) && apoe_e4_count(*apoe) > 0) {
        IndicatorVote v;
        v.indicator = "apoe";
        v.tier = Tier::risk_factor;
        v.value = apoe_e4_count(*apoe);
        v.note = "APOE " + *apoe + " carries " + std::to_string(apoe_e4_count(*apoe)) + " e4 allele(s): risk factor only" +
                 (apoe_ambiguous ? " (phase ambiguous)" : "");
        ev.votes.push_back(v);
    }
    return ev;
}

GuidelineDecision decide_stage(const std::vector<IndicatorVote>& votes, const ThresholdTable&,
                               const std::vector<std::string>& unavailable) {
    GuidelineDecision d;
    d.votes = votes;
    // canonical order keeps the output independent of vote order
    std::sort(d.votes.begin(), d.votes.end(), [](const IndicatorVote& a, const IndicatorVote& b) {
        return std::tie(a.tier, a.indicator, a.value, a.note) < std::tie(b.tier, b.indicator, b.value, b.note);
    });

    std::vector<const IndicatorVote*> primaries, support, risk;
    const IndicatorVote* cdr = nullptr;
    for (const auto& v : d.votes) {
        if (v.tier == Tier::primary_cognitive && v.label) {
            primaries.push_back(&v);
            if (v.indicator == "cdr") cdr = &v;
        } else if (v.tier == Tier::supporting_biomarker || v.tier == Tier::supporting_imaging) {
            support.push_back(&v);
        } else if (v.tier == Tier::risk_factor) {
            risk.push_back(&v);
        }
    }
    if (primaries.empty() && support.empty())
        fail(ErrorCode::NoEvidence, risk.empty() ? "no staging evidence" : "only risk-factor evidence, which cannot stage on its own");

    const bool has_support = !support.empty();
    std::vector<int> sev;
    for (auto* p : primaries) sev.push_back(severity(*p->label));
    std::sort(sev.begin(), sev.end());
    const bool primaries_agree = !sev.empty() && sev.front() == sev.back();

    std::string how;
    bool split_resolved_by_support = false;
    if (primaries.empty()) {
        d.label = StagingLabel::MCI;
        how = "no cognitive scores; supporting evidence of impairment alone indicates MCI";
    } else if (cdr) {
        d.label = *cdr->label;
        how = "CDR " + fmt(*cdr->value) + " determines the stage";
    } else {
        const std::size_t n = sev.size();
        const int lo = sev[(n - 1) / 2], hi = sev[n / 2];
        if (lo == hi) {
            d.label = static_cast<StagingLabel>(lo);
            how = "cognitive scores point to " + std::string(to_string(d.label));
        } else if (has_support) {
            d.label = static_cast<StagingLabel>(hi);
            split_resolved_by_support = hi - lo == 1;
            how = "cognitive scores split between " + std::string(to_string(static_cast<StagingLabel>(lo))) + " and " +
                  std::string(to_string(static_cast<StagingLabel>(hi))) + "; supporting evidence of impairment breaks the tie";
        } else {
            d.label = StagingLabel::MCI;
            how = "cognitive scores split between " + std::string(to_string(static_cast<StagingLabel>(lo))) + " and " +
                  std::string(to_string(static_cast<StagingLabel>(hi))) + " with no supporting evidence; the intermediate stage MCI is chosen";
        }
        if (d.label == StagingLabel::CN && has_support) {
            d.label = StagingLabel::MCI;
            how += "; supporting evidence of impairment moves CN to MCI";
        }
    }

    // conflicts
    for (auto* p : primaries)
        if (*p->label != d.label)
            d.conflicts.push_back(p->note + " disagrees with the chosen stage " + std::string(to_string(d.label)));
    const bool support_contradicts = has_support && (d.label == StagingLabel::CN ||
                                                     (!primaries.empty() && sev.back() == severity(StagingLabel::CN)));
    if (support_contradicts)
        for (auto* s : support) d.conflicts.push_back(s->note + " while cognitive scores are normal");
    for (const auto& u : unavailable) d.conflicts.push_back("evidence unavailable: " + u);

    if (primaries.empty()) d.confidence = ConfidenceLevel::Low;
    else if (primaries_agree) d.confidence = support_contradicts ? ConfidenceLevel::Medium : ConfidenceLevel::High;
    else d.confidence = split_resolved_by_support ? ConfidenceLevel::Medium : ConfidenceLevel::Low;

    std::ostringstream r;
    r << how << ".";
    if (!support.empty()) {
        r << " Supporting evidence:";
        for (auto* s : support) r << " " << s->note << ";";
    }
    if (!risk.empty()) {
        r << " Risk factors (not diagnostic on their own):";
        for (auto* v : risk) r << " " << v->note << ";";
    }
    r << " Confidence " << to_string(d.confidence) << ".";
    d.rationale = r.str();
    return d;
}

}  // namespace dxagent::guideline
