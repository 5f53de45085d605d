#pragma once

#include <string>
#include <vector>

#include "dxagent/eval/cost_table.hpp"
#include "dxagent/eval/metrics.hpp"
#include "dxagent/eval/reader_study.hpp"

namespace dxagent::eval {

struct MetricsRow {
    std::string cohort;
    std::string method;
    MetricSet metrics;
};

// Overall ACC/F1/SEN/SPE, then PRE/F1/SEN/SPE per class ("-" when the class
// is absent from the cohort).
std::string metrics_markdown(const std::vector<MetricsRow>& rows);

// Doctor vs Doctor+Agent per metric with improvement ratios.
std::string reader_performance_markdown(const std::vector<GroupStats>& groups);

// Median and mean times with speedups, Cohen's dz and p.
std::string reader_time_markdown(const std::vector<GroupStats>& groups);

std::string cost_markdown(const CostReport& report);

// model,overall_cost,accuracy,on_frontier
std::string cost_plot_csv(const CostReport& report);

}  // namespace dxagent::eval
