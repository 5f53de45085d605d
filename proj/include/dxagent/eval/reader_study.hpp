#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dxagent/domain/domain.hpp"
#include "dxagent/eval/metrics.hpp"
#include "dxagent/eval/stats.hpp"

namespace dxagent::eval {

enum class Seniority { junior, intermediate, senior };
enum class Specialty { neurologist, radiologist };

std::string_view to_string(Seniority s) noexcept;
std::string_view to_string(Specialty s) noexcept;

struct ReaderRecord {
    std::string reader_id;
    Seniority seniority = Seniority::junior;
    Specialty specialty = Specialty::neurologist;
    std::string case_id;
    StagingLabel truth = StagingLabel::CN;
    StagingLabel unaided_label = StagingLabel::CN;
    double unaided_seconds = 0.0;
    StagingLabel assisted_label = StagingLabel::CN;
    double assisted_seconds = 0.0;
};

inline constexpr std::string_view kReaderCsvHeader =
    "reader_id,seniority,specialty,case_id,truth,unaided_label,unaided_seconds,assisted_label,assisted_seconds";

/// Header must match kReaderCsvHeader. Throws InvalidRecord (times must be > 0).
std::vector<ReaderRecord> load_reader_csv(std::string_view text);

/// (assisted - unaided) / unaided * 100. Throws InvalidArgument for unaided 0.
double improvement_ratio(double unaided, double assisted);

/// unaided / assisted. Throws InvalidArgument for assisted <= 0.
double speedup(double unaided_seconds, double assisted_seconds);

// "Junior Neurologist", ..., "Overall".
std::string group_name(Seniority s, Specialty sp);

struct TimeSummary {
    double median_unaided = 0.0, median_assisted = 0.0, median_speedup = 0.0;
    double mean_unaided = 0.0, mean_assisted = 0.0, mean_speedup = 0.0;
};

TimeSummary summarize_times(const std::vector<double>& unaided, const std::vector<double>& assisted);

struct GroupStats {
    std::string group;
    std::size_t pairs = 0;
    MetricSet unaided;
    MetricSet assisted;
    std::map<Metric, double> improvement;  // percent
    TimeSummary times;
    std::optional<PairedTTest> t_test;  // absent when undefined
    std::string t_test_note;
};

void to_json(nlohmann::json& j, const GroupStats& g);

/// One entry per seniority x specialty group present (fixed display order),
/// followed by "Overall". Time differences are unaided - assisted per pair.
/// Throws NoPairs when records is empty.
std::vector<GroupStats> reader_study_stats(const std::vector<ReaderRecord>& records);

}  // namespace dxagent::eval
