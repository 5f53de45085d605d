#include "dxagent/eval/tables.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace dxagent::eval {

namespace {

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string p_text(double p) {
    if (p < 0.001) return "<0.001";
    return fixed(p, 4);
}

}  // namespace

std::string metrics_markdown(const std::vector<MetricsRow>& rows) {
    std::ostringstream os;
    os << "| Cohort | Method | ACC | F1 | SEN | SPE";
    for (auto label : kAllLabels)
        for (const char* m : {"PRE", "F1", "SEN", "SPE"}) os << " | " << to_string(label) << " " << m;
    os << " |\n|---|---|";
    for (int i = 0; i < 16; ++i) os << "---|";
    os << "\n";
    for (const auto& r : rows) {
        const auto& m = r.metrics;
        os << "| " << r.cohort << " | " << r.method << " | " << fixed(m.micro_accuracy, 3) << " | "
           << fixed(m.macro_f1, 3) << " | " << fixed(m.macro_sensitivity, 3) << " | " << fixed(m.macro_specificity, 3);
        for (auto label : kAllLabels) {
            const bool present = std::find(m.classes.begin(), m.classes.end(), label) != m.classes.end();
            if (!present) {
                os << " | - | - | - | -";
                continue;
            }
            const auto& c = m.per_class.at(label);
            os << " | " << fixed(c.precision, 3) << " | " << fixed(c.f1, 3) << " | " << fixed(c.sensitivity, 3) << " | "
               << fixed(c.specificity, 3);
        }
        os << " |\n";
    }
    return os.str();
}

std::string reader_performance_markdown(const std::vector<GroupStats>& groups) {
    std::ostringstream os;
    os << "| Doctor Level";
    for (const char* m : {"Accuracy", "F1 Score", "Sensitivity", "Specificity"})
        os << " | " << m << " Doctor | " << m << " +Agent | " << m << " Imp. Ratio";
    os << " |\n|---|";
    for (int i = 0; i < 12; ++i) os << "---|";
    os << "\n";
    for (const auto& g : groups) {
        os << "| " << g.group;
        for (auto m : kAllMetrics) {
            os << " | " << fixed(g.unaided.value(m), 4) << " | " << fixed(g.assisted.value(m), 4) << " | ";
            auto it = g.improvement.find(m);
            os << (it == g.improvement.end() ? std::string("n/a") : fixed(it->second, 2) + "%");
        }
        os << " |\n";
    }
    return os.str();
}

std::string reader_time_markdown(const std::vector<GroupStats>& groups) {
    std::ostringstream os;
    os << "| Doctor Level | Median Doctor | Median Doctor+Agent | Median Speedup | Mean Doctor | Mean Doctor+Agent "
          "| Mean Speedup | Cohen's dz | p-value |\n|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& g : groups) {
        const auto& t = g.times;
        os << "| " << g.group << " | " << fixed(t.median_unaided, 2) << " | " << fixed(t.median_assisted, 2) << " | "
           << fixed(t.median_speedup, 4) << "x | " << fixed(t.mean_unaided, 2) << " | " << fixed(t.mean_assisted, 2)
           << " | " << fixed(t.mean_speedup, 4) << "x | ";
        if (g.t_test) os << fixed(g.t_test->cohens_dz, 4) << " | " << p_text(g.t_test->p);
        else os << "undefined | undefined";
        os << " |\n";
    }
    return os.str();
}

std::string cost_markdown(const CostReport& report) {
    std::ostringstream os;
    os << "| Model | Provider | Accuracy (%) | dAccuracy vs Raw (Ratio%) | Avg Input Tokens | Avg Output Tokens "
          "| Avg Cost / Case (USD) | Overall Cost (USD) |\n|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : report.rows) {
        const double d = r.delta_accuracy();
        os << "| " << r.model << " | " << r.provider << " | " << fixed(r.accuracy, 2) << " | " << (d >= 0 ? "+" : "")
           << fixed(d, 2) << " (" << fixed(r.improvement_ratio(), 2) << ") | "
           << (r.avg_input_tokens ? fixed(*r.avg_input_tokens, 1) : "-") << " | "
           << (r.avg_output_tokens ? fixed(*r.avg_output_tokens, 1) : "-") << " | $" << fixed(r.avg_cost_per_case, 6)
           << " | $" << fixed(r.overall_cost, 2) << " |\n";
    }
    return os.str();
}

std::string cost_plot_csv(const CostReport& report) {
    std::vector<CostPoint> pts;
    for (const auto& r : report.rows) pts.push_back({r.model, r.overall_cost, r.accuracy});
    std::ostringstream os;
    os << "model,overall_cost,accuracy,on_frontier\n";
    if (pts.empty()) return os.str();
    const auto frontier = pareto_frontier(pts);
    for (const auto& p : pts) {
        const bool on = std::find(frontier.begin(), frontier.end(), p) != frontier.end();
        os << p.label << "," << fixed(p.cost, 2) << "," << fixed(p.accuracy, 2) << "," << (on ? "true" : "false") << "\n";
    }
    return os.str();
}

}  // namespace dxagent::eval
