#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace dxagent::eval {

struct BackboneCostRow {
    std::string model;
    std::string provider;
    double accuracy = 0.0;      // percent
    double raw_accuracy = 0.0;  // percent, the same model without the agent
    std::optional<double> published_ratio;  // percent, as printed
    std::optional<double> avg_input_tokens;
    std::optional<double> avg_output_tokens;
    double avg_cost_per_case = 0.0;  // USD
    double overall_cost = 0.0;       // USD

    double delta_accuracy() const { return accuracy - raw_accuracy; }
    double improvement_ratio() const;  // delta / raw * 100
};

/// Header-driven CSV. Required: model, accuracy, avg_cost_per_case,
/// overall_cost and one of raw_accuracy / delta_accuracy. Optional:
/// provider, published_ratio, avg_input_tokens, avg_output_tokens.
std::vector<BackboneCostRow> load_cost_csv(std::string_view text);

inline constexpr double kCostTolerance = 0.02;   // USD
inline constexpr double kRatioTolerance = 0.02;  // percentage points

struct CostCheck {
    std::string model;
    std::string field;  // "overall_cost" | "improvement_ratio"
    double expected = 0.0;  // recomputed
    double published = 0.0;
    bool ok = true;
};

struct CostReport {
    std::vector<BackboneCostRow> rows;  // sorted by overall cost
    std::vector<CostCheck> checks;
    std::vector<CostCheck> inconsistencies() const;
};

void to_json(nlohmann::json& j, const CostCheck& c);
void to_json(nlohmann::json& j, const CostReport& r);

/// Throws InvalidArgument for n_cases < 1; inconsistencies are data.
CostReport cost_effectiveness(std::vector<BackboneCostRow> rows, long n_cases);

struct CostPoint {
    std::string label;
    double cost = 0.0;
    double accuracy = 0.0;

    bool operator==(const CostPoint&) const = default;
};

bool dominates(const CostPoint& q, const CostPoint& p);

/// Points no other point dominates, sorted by cost (ties by label).
/// Throws EmptyInput.
std::vector<CostPoint> pareto_frontier(const std::vector<CostPoint>& points);

}  // namespace dxagent::eval
