#include "dxagent/tools/phs.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dxagent/core/assets.hpp"
#include "dxagent/core/error.hpp"
#include "dxagent/core/util.hpp"
#include "dxagent/domain/domain.hpp"

namespace dxagent::phs {

using nlohmann::json;

Model parse_model(const json& j) {
    Model m;
    try {
        m.version = j.value("version", "unversioned");
        m.synthetic = j.value("synthetic", false);
        for (const auto& v : j.at("variants")) {
            Variant var;
            var.rsid = v.at("rsid").get<std::string>();
            var.beta = v.at("beta").get<double>();
            if (v.contains("chrom")) var.chrom = v["chrom"].get<std::string>();
            if (v.contains("pos")) var.pos = v["pos"].get<std::int64_t>();
            m.variants.push_back(std::move(var));
        }
        m.mu = j.at("mu").get<double>();
        m.reference_scores = j.at("reference_scores").get<std::vector<double>>();
        for (const auto& p : j.at("baseline_survival")) m.baseline_survival.push_back({p.at("age").get<double>(), p.at("s0").get<double>()});
    } catch (const json::exception& e) {
        fail(ErrorCode::ModelFileInvalid, std::string("PHS model: ") + e.what());
    }
    if (m.variants.empty()) fail(ErrorCode::ModelFileInvalid, "PHS model has no variants");
    if (m.reference_scores.empty()) fail(ErrorCode::ModelFileInvalid, "PHS model has no reference scores");
    if (m.baseline_survival.empty()) fail(ErrorCode::ModelFileInvalid, "PHS model has no baseline survival table");
    for (std::size_t i = 0; i < m.baseline_survival.size(); ++i) {
        const auto& p = m.baseline_survival[i];
        if (!(p.s0 > 0.0 && p.s0 <= 1.0)) fail(ErrorCode::ModelFileInvalid, "S0 must lie in (0, 1]");
        if (i > 0 && p.age <= m.baseline_survival[i - 1].age) fail(ErrorCode::ModelFileInvalid, "survival ages must increase");
        if (i > 0 && p.s0 > m.baseline_survival[i - 1].s0) fail(ErrorCode::ModelFileInvalid, "S0 must be non-increasing");
    }
    for (double s : m.reference_scores)
        if (!std::isfinite(s)) fail(ErrorCode::ModelFileInvalid, "non-finite reference score");
    std::sort(m.reference_scores.begin(), m.reference_scores.end());
    return m;
}

Model load_model(const std::filesystem::path& path) {
    json j = json::parse(read_text_file(path), nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::ModelFileInvalid, "PHS model is not JSON: " + path.string());
    return parse_model(j);
}

const Model& default_model() {
    static const Model m = parse_model(json::parse(assets::default_phs_model()));
    return m;
}

std::map<std::string, int> apoe_dosages(const std::string& genotype) {
    if (!is_valid_apoe(genotype)) fail(ErrorCode::BadParameters, "apoe genotype must look like x/y with x,y in {2,3,4}");
    // e2 = (T,T), e3 = (T,C), e4 = (C,C); alt alleles are C at rs429358, T at rs7412
    int c429358 = 0, t7412 = 0;
    for (char e : {genotype[0], genotype[2]}) {
        c429358 += e == '4';
        t7412 += e == '2';
    }
    return {{"rs429358", c429358}, {"rs7412", t7412}};
}

double percentile(const Model& model, double raw) {
    const auto& ref = model.reference_scores;
    const auto n = std::upper_bound(ref.begin(), ref.end(), raw) - ref.begin();
    return 100.0 * static_cast<double>(n) / static_cast<double>(ref.size());
}

namespace {

double s0_at(const Model& model, double age) {
    const auto& t = model.baseline_survival;
    if (age <= t.front().age) return t.front().s0;
    if (age >= t.back().age) return t.back().s0;
    for (std::size_t i = 1; i < t.size(); ++i) {
        if (age <= t[i].age) {
            const double w = (age - t[i - 1].age) / (t[i].age - t[i - 1].age);
            return t[i - 1].s0 + w * (t[i].s0 - t[i - 1].s0);
        }
    }
    return t.back().s0;
}

double quantile_sorted(const std::vector<double>& v, double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(v.size() - 1, lo + 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

double risk_at(const Model& model, double age, double hazard_ratio) {
    return std::clamp(1.0 - std::pow(s0_at(model, age), hazard_ratio), 0.0, 1.0);
}

Result compute(const Model& model, const std::map<std::string, int>& dosages, std::optional<double> age,
               const Options& options) {
    Result r;
    for (const auto& v : model.variants) {
        auto it = dosages.find(v.rsid);
        if (it == dosages.end()) {
            r.missing_variants.push_back(v.rsid);
            continue;
        }
        if (it->second < 0 || it->second > 2) fail(ErrorCode::BadParameters, v.rsid + " dosage must be 0, 1 or 2");
        r.raw_phs += v.beta * it->second;
        ++r.variants_used;
    }
    if (r.variants_used == 0) fail(ErrorCode::NoUsableGenotypes, "none of the model's variants has a called genotype");
    r.percentile = percentile(model, r.raw_phs);
    if (!age) return r;
    if (!(*age > 0)) fail(ErrorCode::BadParameters, "age must be > 0");

    const double hr = std::exp(r.raw_phs - model.mu);
    r.hazard_ratio = hr;

    std::vector<double> centres;
    std::mt19937_64 rng(options.seed);
    std::uniform_int_distribution<std::size_t> pick(0, model.reference_scores.size() - 1);
    for (int b = 0; b < std::max(1, options.bootstrap_resamples); ++b) {
        double sum = 0.0;
        for (std::size_t i = 0; i < model.reference_scores.size(); ++i) sum += model.reference_scores[pick(rng)];
        centres.push_back(sum / static_cast<double>(model.reference_scores.size()));
    }

    std::vector<double> ages;
    for (const auto& p : model.baseline_survival)
        if (p.age >= std::floor(*age)) ages.push_back(p.age);
    if (ages.empty()) ages.push_back(model.baseline_survival.back().age);
    for (double a : ages) {
        std::vector<double> risks;
        for (double c : centres) risks.push_back(risk_at(model, a, std::exp(r.raw_phs - c)));
        std::sort(risks.begin(), risks.end());
        const double point = risk_at(model, a, hr);
        r.risk_curve.push_back({a, point, std::min(point, quantile_sorted(risks, 0.025)), std::max(point, quantile_sorted(risks, 0.975))});
    }
    return r;
}

json to_payload(const Result& r) {
    json curve = json::array();
    for (const auto& p : r.risk_curve)
        curve.push_back({{"age", p.age}, {"risk", p.risk}, {"lower", p.lower}, {"upper", p.upper}});
    json j{{"raw_phs", r.raw_phs},
           {"percentile", r.percentile},
           {"risk_curve", curve},
           {"missing_variants", r.missing_variants},
           {"variants_used", r.variants_used}};
    if (r.hazard_ratio) j["hazard_ratio"] = *r.hazard_ratio;
    return j;
}

}  // namespace dxagent::phs
