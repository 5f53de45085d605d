#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace dxagent::phs {

struct Variant {
    std::string rsid;
    double beta = 0.0;
    std::optional<std::string> chrom;  // position book, used when the VCF lacks rsids
    std::optional<std::int64_t> pos;
};

struct SurvivalPoint {
    double age = 0.0;
    double s0 = 1.0;  // baseline survival S0(age), in (0, 1]
};

struct Model {
    std::string version;
    bool synthetic = false;
    std::vector<Variant> variants;
    double mu = 0.0;
    std::vector<double> reference_scores;  // kept sorted ascending
    std::vector<SurvivalPoint> baseline_survival;  // ages strictly increasing
};

/// Fields: variants[{rsid, beta, chrom?, pos?}], mu, reference_scores[],
/// baseline_survival[{age, s0}]. Throws ModelFileInvalid.
Model parse_model(const nlohmann::json& j);
Model load_model(const std::filesystem::path& path);
const Model& default_model();  // the bundled synthetic model

struct RiskPoint {
    double age = 0.0;
    double risk = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

struct Result {
    double raw_phs = 0.0;
    double percentile = 0.0;
    std::optional<double> hazard_ratio;
    std::vector<RiskPoint> risk_curve;
    std::vector<std::string> missing_variants;  // contributed 0
    int variants_used = 0;
};

/// Dosages of the two APOE SNPs implied by an "x/y" genotype string.
std::map<std::string, int> apoe_dosages(const std::string& genotype);

/// 100 * #(reference <= raw) / N.
double percentile(const Model& model, double raw);

/// 1 - S0(age)^HR, with S0 linearly interpolated and clamped to the table.
double risk_at(const Model& model, double age, double hazard_ratio);

struct Options {
    int bootstrap_resamples = 200;
    std::uint64_t seed = 20240601;
};

/// raw = sum beta_j * dosage_j over called variants. With an age, the risk
/// curve covers table ages from that age on; the band comes from
/// recentring on bootstrap means of the reference sample.
/// Throws NoUsableGenotypes when no model variant has a dosage.
Result compute(const Model& model, const std::map<std::string, int>& dosages, std::optional<double> age,
               const Options& options = {});

nlohmann::json to_payload(const Result& r);

}  // namespace dxagent::phs
