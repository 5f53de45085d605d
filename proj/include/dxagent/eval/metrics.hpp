#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dxagent/domain/domain.hpp"

namespace dxagent::eval {

inline constexpr const char* kRaceValues[] = {"Asian", "Black", "White", "other"};
inline constexpr const char* kAgeBins[] = {"<65", "65-74", "75-84", ">=85"};

// Lower bound inclusive, upper exclusive; the last bin is open.
std::string age_bin(double age);

struct LabeledPrediction {
    std::string case_id;
    StagingLabel truth = StagingLabel::CN;
    StagingLabel predicted = StagingLabel::CN;
    std::map<std::string, std::string> subgroup_keys;  // race, age_bin
    std::string cohort;

    bool operator==(const LabeledPrediction&) const = default;
};

void to_json(nlohmann::json& j, const LabeledPrediction& p);
/// Accepts "age" in place of "age_bin" (binned on read). Throws InvalidRecord.
void from_json(const nlohmann::json& j, LabeledPrediction& p);
std::vector<LabeledPrediction> load_predictions_jsonl(std::string_view text);

struct Interval {
    double low = 0.0;
    double high = 0.0;

    bool operator==(const Interval&) const = default;
};

struct ClassMetrics {
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    double precision = 0.0;    // 0 when nothing was predicted as the class
    double sensitivity = 0.0;  // recall
    double specificity = 0.0;  // 1 when the class covers every case
    double f1 = 0.0;

    bool operator==(const ClassMetrics&) const = default;
};

enum class Metric { micro_accuracy, macro_f1, macro_sensitivity, macro_specificity };

inline constexpr Metric kAllMetrics[] = {Metric::micro_accuracy, Metric::macro_f1, Metric::macro_sensitivity,
                                         Metric::macro_specificity};

std::string_view to_string(Metric m) noexcept;
Metric parse_metric(std::string_view text);

struct MetricSet {
    std::size_t n = 0;
    double micro_accuracy = 0.0;
    double macro_f1 = 0.0;
    double macro_sensitivity = 0.0;
    double macro_specificity = 0.0;
    std::vector<StagingLabel> classes;  // the macro-averaging class set
    std::map<StagingLabel, ClassMetrics> per_class;
    std::vector<std::string> warnings;
    std::map<Metric, Interval> ci;
    std::map<Metric, double> standard_error;  // bootstrap standard deviation

    double value(Metric m) const;
};

void to_json(nlohmann::json& j, const MetricSet& m);

/// class_set defaults to every label. Classes in class_set that never occur
/// in truth are dropped from the macro averages with a warning. Throws
/// EmptyInput.
MetricSet compute_metrics(const std::vector<LabeledPrediction>& predictions,
                          const std::vector<StagingLabel>& class_set = {StagingLabel::CN, StagingLabel::MCI,
                                                                        StagingLabel::AD});

inline constexpr int kDefaultResamples = 2000;

struct BootstrapResult {
    Interval ci;
    double standard_error = 0.0;
    std::vector<double> samples;  // sorted resampled values
};

/// Percentile bootstrap: resamples cases with replacement, bounds are the
/// nearest-rank 2.5th and 97.5th order statistics. Each resample draws from
/// its own sub-seed, so results do not depend on evaluation order.
BootstrapResult bootstrap(const std::vector<LabeledPrediction>& predictions, Metric metric,
                          int n_resamples = kDefaultResamples, std::uint64_t seed = 0,
                          const std::vector<StagingLabel>& class_set = {StagingLabel::CN, StagingLabel::MCI,
                                                                        StagingLabel::AD});

Interval bootstrap_ci(const std::vector<LabeledPrediction>& predictions, Metric metric,
                      int n_resamples = kDefaultResamples, std::uint64_t seed = 0);

/// Fills ci and standard_error for all four headline metrics.
void attach_bootstrap(MetricSet& metrics, const std::vector<LabeledPrediction>& predictions,
                      int n_resamples = kDefaultResamples, std::uint64_t seed = 0);

struct Dispersion {
    double std = 0.0;  // population
    double gap = 0.0;  // max - min
};

Dispersion dispersion(const std::vector<double>& values);

struct SubgroupReport {
    std::string axis;
    Metric metric = Metric::micro_accuracy;
    std::map<std::string, double> values;
    std::map<std::string, std::size_t> counts;
    Dispersion spread;
};

void to_json(nlohmann::json& j, const SubgroupReport& r);

/// Throws InsufficientSubgroups with fewer than two non-empty subgroups.
SubgroupReport fairness_dispersion(const std::vector<LabeledPrediction>& predictions, std::string_view axis,
                                   Metric metric = Metric::micro_accuracy);

}  // namespace dxagent::eval
