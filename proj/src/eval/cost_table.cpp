#include "dxagent/eval/cost_table.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "dxagent/core/error.hpp"
#include "dxagent/core/util.hpp"

namespace dxagent::eval {

using nlohmann::json;

double BackboneCostRow::improvement_ratio() const {
    if (raw_accuracy == 0) fail(ErrorCode::InvalidArgument, model + ": raw accuracy is zero");
    return delta_accuracy() / raw_accuracy * 100.0;
}

namespace {

double number(const std::string& field, const std::string& text, std::size_t line) {
    auto t = std::string(trim(text));
    if (!t.empty() && t[0] == '$') t.erase(0, 1);
    if (!t.empty() && t[0] == '+') t.erase(0, 1);
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(t, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != t.size())
        fail(ErrorCode::InvalidRecord, "line " + std::to_string(line) + ": " + field + " '" + text + "' is not a number");
    return v;
}

}  // namespace

std::vector<BackboneCostRow> load_cost_csv(std::string_view text) {
    std::vector<BackboneCostRow> rows;
    std::map<std::string, std::size_t> col;
    std::size_t line_no = 0;
    for (const auto& raw : split(text, '\n')) {
        ++line_no;
        const auto line = std::string(trim(raw));
        if (line.empty()) continue;
        auto f = split(line, ',');
        if (col.empty()) {
            for (std::size_t i = 0; i < f.size(); ++i) col[std::string(trim(f[i]))] = i;
            for (const char* need : {"model", "accuracy", "avg_cost_per_case", "overall_cost"})
                if (!col.count(need)) fail(ErrorCode::InvalidRecord, std::string("cost CSV lacks column ") + need);
            if (!col.count("raw_accuracy") && !col.count("delta_accuracy"))
                fail(ErrorCode::InvalidRecord, "cost CSV needs raw_accuracy or delta_accuracy");
            continue;
        }
        if (f.size() != col.size())
            fail(ErrorCode::InvalidRecord, "line " + std::to_string(line_no) + ": expected " + std::to_string(col.size()) + " fields");
        auto get = [&](const char* name) { return f[col.at(name)]; };
        auto opt = [&](const char* name) -> std::optional<double> {
            if (!col.count(name) || trim(get(name)).empty()) return std::nullopt;
            return number(name, get(name), line_no);
        };
        BackboneCostRow r;
        r.model = std::string(trim(get("model")));
        if (col.count("provider")) r.provider = std::string(trim(get("provider")));
        r.accuracy = number("accuracy", get("accuracy"), line_no);
        if (col.count("raw_accuracy")) r.raw_accuracy = number("raw_accuracy", get("raw_accuracy"), line_no);
        else r.raw_accuracy = r.accuracy - number("delta_accuracy", get("delta_accuracy"), line_no);
        r.published_ratio = opt("published_ratio");
        r.avg_input_tokens = opt("avg_input_tokens");
        r.avg_output_tokens = opt("avg_output_tokens");
        r.avg_cost_per_case = number("avg_cost_per_case", get("avg_cost_per_case"), line_no);
        r.overall_cost = number("overall_cost", get("overall_cost"), line_no);
        rows.push_back(std::move(r));
    }
    if (col.empty()) fail(ErrorCode::InvalidRecord, "cost CSV is empty");
    return rows;
}

std::vector<CostCheck> CostReport::inconsistencies() const {
    std::vector<CostCheck> out;
    for (const auto& c : checks)
        if (!c.ok) out.push_back(c);
    return out;
}

void to_json(json& j, const CostCheck& c) {
    j = json{{"model", c.model}, {"field", c.field}, {"expected", c.expected}, {"published", c.published}, {"ok", c.ok}};
}

void to_json(json& j, const CostReport& r) {
    json rows = json::array();
    for (const auto& row : r.rows) {
        json x{{"model", row.model},
               {"provider", row.provider},
               {"accuracy", row.accuracy},
               {"raw_accuracy", row.raw_accuracy},
               {"delta_accuracy", row.delta_accuracy()},
               {"improvement_ratio", row.improvement_ratio()},
               {"avg_cost_per_case", row.avg_cost_per_case},
               {"overall_cost", row.overall_cost}};
        if (row.avg_input_tokens) x["avg_input_tokens"] = *row.avg_input_tokens;
        if (row.avg_output_tokens) x["avg_output_tokens"] = *row.avg_output_tokens;
        rows.push_back(std::move(x));
    }
    j = json{{"rows", rows}, {"checks", r.checks}, {"inconsistent", r.inconsistencies().size()}};
}

CostReport cost_effectiveness(std::vector<BackboneCostRow> rows, long n_cases) {
    if (n_cases < 1) fail(ErrorCode::InvalidArgument, "n_cases must be at least 1");
    CostReport rep;
    std::stable_sort(rows.begin(), rows.end(),
                     [](const BackboneCostRow& a, const BackboneCostRow& b) { return a.overall_cost < b.overall_cost; });
    for (const auto& r : rows) {
        const double expected = r.avg_cost_per_case * static_cast<double>(n_cases);
        // a small epsilon keeps exact-boundary rows from failing on float noise
        rep.checks.push_back({r.model, "overall_cost", expected, r.overall_cost,
                              std::abs(expected - r.overall_cost) <= kCostTolerance + 1e-9});
        if (r.published_ratio) {
            const double ratio = r.improvement_ratio();
            rep.checks.push_back({r.model, "improvement_ratio", ratio, *r.published_ratio,
                                  std::abs(ratio - *r.published_ratio) <= kRatioTolerance + 1e-9});
        }
    }
    rep.rows = std::move(rows);
    return rep;
}

bool dominates(const CostPoint& q, const CostPoint& p) {
    return q.cost <= p.cost && q.accuracy >= p.accuracy && (q.cost < p.cost || q.accuracy > p.accuracy);
}

std::vector<CostPoint> pareto_frontier(const std::vector<CostPoint>& points) {
    if (points.empty()) fail(ErrorCode::EmptyInput, "no points");
    std::vector<CostPoint> out;
    for (const auto& p : points) {
        bool dominated = false;
        for (const auto& q : points) dominated = dominated || dominates(q, p);
        if (!dominated) out.push_back(p);
    }
    std::sort(out.begin(), out.end(), [](const CostPoint& a, const CostPoint& b) {
        return std::tie(a.cost, a.accuracy, a.label) < std::tie(b.cost, b.accuracy, b.label);
    });
    return out;
}

}  // namespace dxagent::eval
