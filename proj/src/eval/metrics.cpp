#include "dxagent/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dxagent/core/error.hpp"
#include "dxagent/core/util.hpp"
#include "dxagent/eval/stats.hpp"

namespace dxagent::eval {

using nlohmann::json;

std::string age_bin(double age) {
    if (!(age >= 0)) fail(ErrorCode::InvalidRecord, "age must be non-negative");
    if (age < 65) return "<65";
    if (age < 75) return "65-74";
    if (age < 85) return "75-84";
    return ">=85";
}

void to_json(json& j, const LabeledPrediction& p) {
    j = json{{"case_id", p.case_id}, {"truth", to_string(p.truth)}, {"predicted", to_string(p.predicted)}};
    for (const auto& [k, v] : p.subgroup_keys) j[k] = v;
    if (!p.cohort.empty()) j["cohort"] = p.cohort;
}

void from_json(const json& j, LabeledPrediction& p) {
    try {
        p.case_id = j.value("case_id", "");
        p.truth = normalize_label(j.at("truth").get<std::string>());
        p.predicted = normalize_label(j.at("predicted").get<std::string>());
        p.cohort = j.value("cohort", "");
        p.subgroup_keys.clear();
        if (j.contains("race") && !j["race"].is_null()) {
            const auto race = j["race"].get<std::string>();
            if (std::find(std::begin(kRaceValues), std::end(kRaceValues), race) == std::end(kRaceValues))
                fail(ErrorCode::InvalidRecord, "race '" + race + "' is not one of Asian, Black, White, other");
            p.subgroup_keys["race"] = race;
        }
        if (j.contains("age_bin") && !j["age_bin"].is_null()) {
            const auto bin = j["age_bin"].get<std::string>();
            if (std::find(std::begin(kAgeBins), std::end(kAgeBins), bin) == std::end(kAgeBins))
                fail(ErrorCode::InvalidRecord, "age_bin '" + bin + "' is not a known bin");
            p.subgroup_keys["age_bin"] = bin;
        } else if (j.contains("age") && j["age"].is_number()) {
            p.subgroup_keys["age_bin"] = age_bin(j["age"].get<double>());
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::InvalidRecord, e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::UnknownLabel) fail(ErrorCode::InvalidRecord, e.what());
        throw;
    }
}

std::vector<LabeledPrediction> load_predictions_jsonl(std::string_view text) {
    std::vector<LabeledPrediction> out;
    std::size_t line_no = 0;
    for (const auto& line : split(text, '\n')) {
        ++line_no;
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) fail(ErrorCode::InvalidRecord, "line " + std::to_string(line_no) + " is not JSON");
        out.push_back(j.get<LabeledPrediction>());
    }
    return out;
}

std::string_view to_string(Metric m) noexcept {
    switch (m) {
        case Metric::micro_accuracy: return "micro_accuracy";
        case Metric::macro_f1: return "macro_f1";
        case Metric::macro_sensitivity: return "macro_sensitivity";
        case Metric::macro_specificity: return "macro_specificity";
    }
    return "micro_accuracy";
}

Metric parse_metric(std::string_view text) {
    const auto t = to_lower(trim(text));
    for (auto m : kAllMetrics)
        if (t == to_string(m)) return m;
    if (t == "accuracy") return Metric::micro_accuracy;
    if (t == "f1") return Metric::macro_f1;
    if (t == "sensitivity") return Metric::macro_sensitivity;
    if (t == "specificity") return Metric::macro_specificity;
    fail(ErrorCode::InvalidArgument, "unknown metric '" + std::string(text) + "'");
}

double MetricSet::value(Metric m) const {
    switch (m) {
        case Metric::micro_accuracy: return micro_accuracy;
        case Metric::macro_f1: return macro_f1;
        case Metric::macro_sensitivity: return macro_sensitivity;
        case Metric::macro_specificity: return macro_specificity;
    }
    return micro_accuracy;
}

void to_json(json& j, const MetricSet& m) {
    j = json{{"n", m.n}};
    for (auto metric : kAllMetrics) {
        json v{{"value", m.value(metric)}};
        if (auto it = m.ci.find(metric); it != m.ci.end()) v["ci"] = {it->second.low, it->second.high};
        if (auto it = m.standard_error.find(metric); it != m.standard_error.end()) v["standard_error"] = it->second;
        j[std::string(to_string(metric))] = std::move(v);
    }
    json classes = json::array();
    for (auto c : m.classes) classes.push_back(to_string(c));
    j["classes"] = std::move(classes);
    json per = json::object();
    for (const auto& [label, c] : m.per_class)
        per[std::string(to_string(label))] = {{"tp", c.tp},
                                              {"fp", c.fp},
                                              {"fn", c.fn},
                                              {"tn", c.tn},
                                              {"precision", c.precision},
                                              {"f1", c.f1},
                                              {"sensitivity", c.sensitivity},
                                              {"specificity", c.specificity}};
    j["per_class"] = std::move(per);
    j["warnings"] = m.warnings;
}

namespace {

double ratio(std::int64_t num, std::int64_t den, double if_empty) {
    return den == 0 ? if_empty : static_cast<double>(num) / static_cast<double>(den);
}

// Counts over index list idx (a resample) or all cases when idx is null.
MetricSet compute_on(const std::vector<LabeledPrediction>& preds, const std::vector<std::size_t>* idx,
                     const std::vector<StagingLabel>& class_set, bool with_warnings) {
    const std::size_t n = idx ? idx->size() : preds.size();
    if (n == 0) fail(ErrorCode::EmptyInput, "no predictions");
    auto at = [&](std::size_t k) -> const LabeledPrediction& { return preds[idx ? (*idx)[k] : k]; };

    int confusion[3][3] = {};
    for (std::size_t k = 0; k < n; ++k) ++confusion[severity(at(k).truth)][severity(at(k).predicted)];

    MetricSet m;
    m.n = n;
    std::int64_t correct = 0;
    for (int c = 0; c < 3; ++c) correct += confusion[c][c];
    m.micro_accuracy = static_cast<double>(correct) / static_cast<double>(n);

    for (auto label : class_set) {
        const int c = severity(label);
        ClassMetrics cm;
        for (int t = 0; t < 3; ++t)
            for (int p = 0; p < 3; ++p) {
                const std::int64_t v = confusion[t][p];
                if (t == c && p == c) cm.tp += v;
                else if (p == c) cm.fp += v;
                else if (t == c) cm.fn += v;
                else cm.tn += v;
            }
        cm.precision = ratio(cm.tp, cm.tp + cm.fp, 0.0);
        cm.sensitivity = ratio(cm.tp, cm.tp + cm.fn, 0.0);
        cm.specificity = ratio(cm.tn, cm.tn + cm.fp, 1.0);
        cm.f1 = ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn, 0.0);
        m.per_class[label] = cm;
        if (cm.tp + cm.fn > 0) {
            m.classes.push_back(label);
        } else if (with_warnings) {
            m.warnings.push_back(std::string(to_string(label)) + " absent from truth; excluded from macro averages");
        }
    }
    if (m.classes.empty()) {
        if (with_warnings) m.warnings.push_back("no class of the class set occurs in truth; macro metrics are 0");
        return m;
    }
    for (auto label : m.classes) {
        const auto& cm = m.per_class[label];
        m.macro_f1 += cm.f1;
        m.macro_sensitivity += cm.sensitivity;
        m.macro_specificity += cm.specificity;
    }
    const double k = static_cast<double>(m.classes.size());
    m.macro_f1 /= k;
    m.macro_sensitivity /= k;
    m.macro_specificity /= k;
    return m;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

MetricSet compute_metrics(const std::vector<LabeledPrediction>& predictions, const std::vector<StagingLabel>& class_set) {
    if (class_set.empty()) fail(ErrorCode::InvalidArgument, "class set is empty");
    return compute_on(predictions, nullptr, class_set, true);
}

BootstrapResult bootstrap(const std::vector<LabeledPrediction>& predictions, Metric metric, int n_resamples,
                          std::uint64_t seed, const std::vector<StagingLabel>& class_set) {
    if (predictions.empty()) fail(ErrorCode::EmptyInput, "no predictions");
    if (n_resamples < 1) fail(ErrorCode::InvalidArgument, "n_resamples must be at least 1");
    const std::size_t n = predictions.size();
    BootstrapResult r;
    r.samples.reserve(static_cast<std::size_t>(n_resamples));
    std::vector<std::size_t> idx(n);
    for (int b = 0; b < n_resamples; ++b) {
        std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(b))));
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        for (auto& i : idx) i = pick(rng);
        r.samples.push_back(compute_on(predictions, &idx, class_set, false).value(metric));
    }
    std::sort(r.samples.begin(), r.samples.end());
    const auto rank = [&](double q) {
        auto k = static_cast<std::size_t>(std::ceil(q * n_resamples));
        return r.samples[std::max<std::size_t>(k, 1) - 1];
    };
    r.ci = {rank(0.025), rank(0.975)};
    r.standard_error = n_resamples > 1 ? sample_sd(r.samples) : 0.0;
    return r;
}

Interval bootstrap_ci(const std::vector<LabeledPrediction>& predictions, Metric metric, int n_resamples,
                      std::uint64_t seed) {
    return bootstrap(predictions, metric, n_resamples, seed).ci;
}

void attach_bootstrap(MetricSet& metrics, const std::vector<LabeledPrediction>& predictions, int n_resamples,
                      std::uint64_t seed) {
    for (auto m : kAllMetrics) {
        auto b = bootstrap(predictions, m, n_resamples, seed);
        metrics.ci[m] = b.ci;
        metrics.standard_error[m] = b.standard_error;
    }
}

Dispersion dispersion(const std::vector<double>& values) {
    if (values.empty()) fail(ErrorCode::EmptyInput, "no subgroup values");
    auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    // equal values give exactly zero (the mean can round off otherwise)
    if (*hi == *lo) return {0.0, 0.0};
    return {population_sd(values), *hi - *lo};
}

void to_json(json& j, const SubgroupReport& r) {
    j = json{{"axis", r.axis},
             {"metric", to_string(r.metric)},
             {"values", r.values},
             {"counts", r.counts},
             {"dispersion_std", r.spread.std},
             {"dispersion_gap", r.spread.gap}};
}

SubgroupReport fairness_dispersion(const std::vector<LabeledPrediction>& predictions, std::string_view axis,
                                   Metric metric) {
    std::string key(axis);
    if (key == "age") key = "age_bin";
    std::map<std::string, std::vector<LabeledPrediction>> groups;
    for (const auto& p : predictions)
        if (auto it = p.subgroup_keys.find(key); it != p.subgroup_keys.end()) groups[it->second].push_back(p);
    if (groups.size() < 2)
        fail(ErrorCode::InsufficientSubgroups, "axis '" + key + "' has " + std::to_string(groups.size()) +
                                                   " non-empty subgroup(s); at least two are needed");
    SubgroupReport r;
    r.axis = key;
    r.metric = metric;
    std::vector<double> values;
    for (const auto& [name, rows] : groups) {
        const double v = compute_metrics(rows).value(metric);
        r.values[name] = v;
        r.counts[name] = rows.size();
        values.push_back(v);
    }
    r.spread = dispersion(values);
    return r;
}

}  // namespace dxagent::eval
