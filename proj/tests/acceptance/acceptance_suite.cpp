// Acceptance criteria 1-10. Each criterion prints its individual checks and
// one final "criterion N: PASS|FAIL" line; the exit status is non-zero when
// any selected criterion fails.
//
//   acceptance_suite                 all criteria
//   acceptance_suite --criterion 3   one criterion

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "../support/service_fixture.hpp"
#include "dxagent/aggregator/aggregator.hpp"
#include "dxagent/eval/cost_table.hpp"
#include "dxagent/eval/metrics.hpp"
#include "dxagent/eval/reader_study.hpp"
#include "dxagent/guideline/guideline.hpp"
#include "dxagent/parsers/apoe.hpp"
#include "dxagent/parsers/nifti.hpp"
#include "dxagent/parsers/vcf.hpp"
#include "dxagent/tools/phs.hpp"
#include "dxagent/tools/schema.hpp"

using namespace dxagent;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kAssets = DX_ASSET_DIR;

class Checks {
public:
    void expect(bool ok, const std::string& what) {
        ++total_;
        if (!ok) {
            ++failed_;
            std::cout << "  FAIL " << what << '\n';
        } else if (verbose_) {
            std::cout << "  ok   " << what << '\n';
        }
    }

    void near(double got, double want, double tol, const std::string& what) {
        std::ostringstream s;
        s << what << ": got " << std::setprecision(10) << got << ", want " << want << " +/- " << tol;
        expect(std::fabs(got - want) <= tol, s.str());
    }

    void note(const std::string& text) { std::cout << "  note " << text << '\n'; }

    bool passed() const { return failed_ == 0 && total_ > 0; }
    int total() const { return total_; }
    int failed() const { return failed_; }

    bool verbose_ = true;

private:
    int total_ = 0;
    int failed_ = 0;
};

template <class F>
std::optional<ErrorCode> code_of(F&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

std::string fmt(double v, int digits = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::map<std::string, std::string>> rows;
};

CsvTable read_csv(const fs::path& path) {
    CsvTable t;
    for (const auto& line : split(read_text_file(path), '\n')) {
        if (trim(line).empty()) continue;
        auto cells = split(line, ',');
        if (t.header.empty()) {
            t.header = cells;
            continue;
        }
        std::map<std::string, std::string> row;
        for (std::size_t i = 0; i < t.header.size() && i < cells.size(); ++i) row[t.header[i]] = std::string(trim(cells[i]));
        t.rows.push_back(row);
    }
    return t;
}

// ------------------------------------------------------------------ 1

void criterion_cost_table(Checks& c) {
    const long n_cases = 5195;
    const auto rows = eval::load_cost_csv(read_text_file(kAssets / "reference/backbone_costs.csv"));
    c.expect(rows.size() == 8, "eight backbone rows (got " + std::to_string(rows.size()) + ")");
    auto report = eval::cost_effectiveness(rows, n_cases);
    for (const auto& r : rows) {
        c.near(r.avg_cost_per_case * n_cases, r.overall_cost, eval::kCostTolerance, r.model + " avg x 5195 vs overall");
        if (r.published_ratio)
            c.near(r.improvement_ratio(), *r.published_ratio, eval::kRatioTolerance, r.model + " improvement ratio");
        else
            c.expect(false, r.model + " has no published ratio");
    }
    c.expect(report.inconsistencies().empty(), "cost_effectiveness reports no inconsistencies");
    for (const auto& chk : report.inconsistencies()) c.note(chk.model + " " + chk.field);
    c.expect(std::is_sorted(report.rows.begin(), report.rows.end(),
                            [](const auto& a, const auto& b) { return a.overall_cost < b.overall_cost; }),
             "validated table sorted by cost");
    // the worked examples
    eval::BackboneCostRow gpt4o;
    gpt4o.accuracy = 80.40;
    gpt4o.raw_accuracy = 69.74;
    c.near(gpt4o.improvement_ratio(), 15.29, eval::kRatioTolerance, "GPT-4o 10.66 / 69.74");
    c.near(0.000534 * n_cases, 2.77, eval::kCostTolerance, "Gemini-2.5-flash-lite 0.000534 x 5195");
}

// ------------------------------------------------------------------ 2

void criterion_reader_arithmetic(Checks& c) {
    const auto perf = read_csv(kAssets / "reference/reader_performance.csv");
    std::set<std::string> groups;
    for (const auto& row : perf.rows) {
        groups.insert(row.at("group"));
        const double ratio = eval::improvement_ratio(std::stod(row.at("doctor")), std::stod(row.at("agent")));
        c.near(ratio, std::stod(row.at("published_ratio")), 0.02, row.at("group") + " " + row.at("metric") + " ratio");
    }
    c.expect(perf.rows.size() == 20, "20 group x metric rows (got " + std::to_string(perf.rows.size()) + ")");
    c.expect(groups.size() == 5, "five reader groups");

    // The printed times are rounded to 2 decimals while the printed speedup
    // was taken from the unrounded times, so each row can only be held to
    // the larger of 1e-3 and the spread its operand rounding allows. The
    // Junior Neurologist example below is held to 1e-3 outright.
    const auto times = read_csv(kAssets / "reference/reader_times.csv");
    for (const auto& row : times.rows) {
        for (const char* kind : {"median", "mean"}) {
            const std::string k = kind;
            const double num = std::stod(row.at(k + "_doctor"));
            const double den = std::stod(row.at(k + "_agent"));
            const double published = std::stod(row.at(k + "_speedup"));
            const double got = eval::speedup(num, den);
            // ratio bound implied by +/-0.005 rounding of both operands
            const double rounding = (num + 0.005) / (den - 0.005) - got;
            const double tol = std::max(1e-3, rounding);
            c.near(got, published, tol, row.at("group") + " " + k + " speedup " + fmt(num, 2) + "/" + fmt(den, 2));
        }
    }
    c.near(eval::speedup(66.49, 19.79), 3.3598, 1e-3, "Junior Neurologist 66.49 / 19.79");
    c.near(eval::improvement_ratio(0.7687, 0.8299), 7.96, 0.02, "Senior Neurologist accuracy");
}

// ------------------------------------------------------------------ 3

void criterion_pareto(Checks& c) {
    const auto rows = eval::load_cost_csv(read_text_file(kAssets / "reference/backbone_costs.csv"));
    std::vector<eval::CostPoint> pts;
    for (const auto& r : rows) pts.push_back({r.model, r.overall_cost, r.accuracy});
    const auto frontier = eval::pareto_frontier(pts);
    std::vector<std::string> dominated;
    for (const auto& p : pts)
        if (std::find(frontier.begin(), frontier.end(), p) == frontier.end()) {
            std::string by;
            for (const auto& q : pts)
                if (eval::dominates(q, p)) by += (by.empty() ? "" : ", ") + q.label;
            c.note(p.label + " (" + fmt(p.cost, 2) + ", " + fmt(p.accuracy, 2) + ") dominated by " + by);
            dominated.push_back(p.label);
        }
    std::string listed;
    for (const auto& d : dominated) listed += (listed.empty() ? "" : ", ") + d;
    c.expect(dominated == std::vector<std::string>{"DeepSeek-V3.1"},
             "dominated set is exactly {DeepSeek-V3.1}; computed {" + listed + "}");
    c.expect(std::find(dominated.begin(), dominated.end(), "DeepSeek-V3.1") != dominated.end(),
             "DeepSeek-V3.1 (35.18, 78.90) is dominated");
}

// ------------------------------------------------------------------ 4

struct OracleCounts {
    long tp = 0, fp = 0, fn = 0, tn = 0;
};

void criterion_metric_oracle(Checks& c) {
    c.verbose_ = false;
    std::mt19937 rng(4);
    std::uniform_int_distribution<int> size(1, 50);
    int cohorts = 0, two_class = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<StagingLabel> classes;
        if (trial % 3 == 0) classes = {StagingLabel::CN, StagingLabel::AD};  // binary cohort
        else classes = {StagingLabel::CN, StagingLabel::MCI, StagingLabel::AD};
        two_class += classes.size() == 2;
        std::uniform_int_distribution<std::size_t> pick(0, classes.size() - 1);
        std::vector<eval::LabeledPrediction> preds(size(rng));
        for (auto& p : preds) {
            p.truth = classes[pick(rng)];
            p.predicted = std::bernoulli_distribution(0.6)(rng) ? p.truth : classes[pick(rng)];
        }
        const auto m = eval::compute_metrics(preds, classes);

        // brute force, straight from the definitions
        long correct = 0;
        for (const auto& p : preds) correct += p.truth == p.predicted;
        double f1 = 0, sens = 0, spec = 0;
        int present = 0;
        for (auto k : classes) {
            OracleCounts o;
            for (const auto& p : preds) {
                const bool t = p.truth == k, y = p.predicted == k;
                o.tp += t && y;
                o.fp += !t && y;
                o.fn += t && !y;
                o.tn += !t && !y;
            }
            const auto& got = m.per_class.at(k);
            c.expect(got.tp == o.tp && got.fp == o.fp && got.fn == o.fn && got.tn == o.tn,
                     "trial " + std::to_string(trial) + " counts for " + std::string(to_string(k)));
            if (o.tp + o.fn == 0) continue;  // absent from truth: excluded from macro averages
            ++present;
            const double precision = o.tp + o.fp ? double(o.tp) / double(o.tp + o.fp) : 0.0;
            const double recall = double(o.tp) / double(o.tp + o.fn);
            const double specificity = o.tn + o.fp ? double(o.tn) / double(o.tn + o.fp) : 1.0;
            // F1 in count form is a single rounding, so it can be compared exactly;
            // the harmonic-mean form agrees up to rounding
            const double f = o.tp ? double(2 * o.tp) / double(2 * o.tp + o.fp + o.fn) : 0.0;
            const double harmonic = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
            c.expect(got.precision == precision && got.sensitivity == recall && got.specificity == specificity &&
                         got.f1 == f && std::fabs(got.f1 - harmonic) <= 1e-12,
                     "trial " + std::to_string(trial) + " per-class values for " + std::string(to_string(k)));
            f1 += f;
            sens += recall;
            spec += specificity;
        }
        c.expect(m.micro_accuracy == double(correct) / double(preds.size()), "trial " + std::to_string(trial) + " micro");
        c.expect(m.macro_f1 == f1 / present && m.macro_sensitivity == sens / present &&
                     m.macro_specificity == spec / present,
                 "trial " + std::to_string(trial) + " macro averages");
        ++cohorts;
    }
    c.verbose_ = true;
    c.expect(cohorts == 1000, std::to_string(cohorts) + " random cohorts (n <= 50), " + std::to_string(two_class) +
                                  " of them two-class, equal to the brute-force oracle (" +
                                  std::to_string(c.total() - c.failed()) + "/" + std::to_string(c.total()) +
                                  " exact comparisons)");
}

// ------------------------------------------------------------------ 5

void criterion_bootstrap(Checks& c) {
    using eval::Metric;
    c.expect(eval::kDefaultResamples == 2000, "default resamples is 2000");
    std::vector<eval::LabeledPrediction> perfect(30);
    for (std::size_t i = 0; i < perfect.size(); ++i)
        perfect[i].truth = perfect[i].predicted = kAllLabels[i % 3];
    const auto b = eval::bootstrap(perfect, Metric::micro_accuracy);
    c.expect(b.samples.size() == 2000, "default call draws 2000 resamples");
    const auto ci = eval::bootstrap_ci(perfect, Metric::micro_accuracy);
    c.expect(ci.low == 1.0 && ci.high == 1.0, "all-correct input gives CI (" + fmt(ci.low) + ", " + fmt(ci.high) + ")");
    const auto f1_ci = eval::bootstrap_ci(perfect, Metric::macro_f1);
    c.expect(f1_ci.low == 1.0 && f1_ci.high == 1.0, "all-correct macro F1 CI is (1, 1)");

    std::mt19937 rng(5);
    auto synthetic = [&](std::size_t n) {
        std::vector<eval::LabeledPrediction> out(n);
        std::uniform_int_distribution<int> lab(0, 2);
        for (std::size_t i = 0; i < n; ++i) {
            out[i].truth = kAllLabels[lab(rng)];
            // exactly 80% correct
            out[i].predicted = i % 5 != 0 ? out[i].truth : kAllLabels[(static_cast<int>(out[i].truth) + 1) % 3];
        }
        std::shuffle(out.begin(), out.end(), rng);
        return out;
    };
    const auto sample = synthetic(50);
    for (auto m : eval::kAllMetrics) {
        const auto a1 = eval::bootstrap_ci(sample, m, 2000, 99);
        const auto a2 = eval::bootstrap_ci(sample, m, 2000, 99);
        c.expect(a1 == a2, "seeded determinism for " + std::string(eval::to_string(m)));
    }
    int inside = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const auto preds = synthetic(50);
        const double point = eval::compute_metrics(preds).micro_accuracy;
        const auto iv = eval::bootstrap_ci(preds, Metric::micro_accuracy, 2000, static_cast<std::uint64_t>(trial));
        inside += iv.low <= point && point <= iv.high;
    }
    c.expect(inside == 200, "point estimate inside the CI in " + std::to_string(inside) + "/200 seeded trials");
}

// ------------------------------------------------------------------ 6

void criterion_guideline_bands(Checks& c) {
    using L = StagingLabel;
    const auto& table = guideline::default_threshold_table();
    struct Case {
        const char* indicator;
        double value;
        L want;
    };
    const Case cases[] = {
        {"cdr", 0, L::CN},       {"cdr", 0.5, L::MCI},     {"cdr", 1, L::AD},
        {"mmse", 19, L::AD},     {"mmse", 20, L::MCI},     {"mmse", 26, L::MCI},    {"mmse", 27, L::CN},
        {"moca", 17, L::AD},     {"moca", 18, L::MCI},     {"moca", 25, L::MCI},    {"moca", 26, L::CN},
        {"adas11", 9.9, L::CN},  {"adas11", 10, L::MCI},   {"adas11", 20, L::MCI},  {"adas11", 20.1, L::AD},
        {"adas13", 14.9, L::CN}, {"adas13", 15, L::MCI},   {"adas13", 30, L::MCI},  {"adas13", 30.1, L::AD},
        {"faq", 5, L::CN},       {"faq", 6, L::MCI},       {"faq", 15, L::MCI},     {"faq", 16, L::AD},
    };
    for (const auto& k : cases) {
        const auto v = guideline::band_indicator(k.indicator, k.value, table);
        c.expect(v.label == k.want, std::string(k.indicator) + " " + fmt(k.value, 1) + " -> " +
                                        std::string(to_string(k.want)) + " (got " +
                                        (v.label ? std::string(to_string(*v.label)) : "none") + ")");
    }

    auto hippo = [&](double total) {
        tools::ToolOutcome o;
        o.tool = tools::kHippocampus;
        o.status = tools::OutcomeStatus::ok;
        o.payload = {{"measures", {{"left", total / 2}, {"right", total / 2}, {"total", total}}}};
        return guideline::collect_votes(PatientRecord{}, {o}, table).votes;
    };
    const auto at_5999 = hippo(5999);
    c.expect(at_5999.size() == 1 && at_5999[0].tier == guideline::Tier::supporting_imaging,
             "hippocampus 5999 mm3 -> atrophic supporting-imaging vote");
    c.expect(hippo(6000).empty(), "hippocampus 6000 mm3 -> not atrophic, no vote");

    // full integer grid: CDR x MMSE x MoCA x FAQ with each score optionally absent
    c.verbose_ = false;
    auto vote = [&](const char* ind, int v, std::vector<guideline::IndicatorVote>& out) {
        if (v >= 0) out.push_back(guideline::band_indicator(ind, v, table));
    };
    auto stage = [&](std::optional<double> cdr, int mmse, int moca, int faq, int adas11 = -1, int adas13 = -1) {
        std::vector<guideline::IndicatorVote> votes;
        if (cdr) votes.push_back(guideline::band_indicator("cdr", *cdr, table));
        vote("mmse", mmse, votes);
        vote("moca", moca, votes);
        vote("faq", faq, votes);
        vote("adas11", adas11, votes);
        vote("adas13", adas13, votes);
        return severity(guideline::decide_stage(votes, table).label);
    };
    const double cdr_grid[] = {0, 0.5, 1, 2, 3};
    const L cdr_label[] = {L::CN, L::MCI, L::AD, L::AD, L::AD};
    long dominance = 0, dominance_bad = 0;
    for (int ci = 0; ci < 5; ++ci)
        for (int mmse = -1; mmse <= 30; ++mmse)
            for (int moca = -1; moca <= 30; ++moca)
                for (int faq = -1; faq <= 30; ++faq) {
                    ++dominance;
                    if (stage(cdr_grid[ci], mmse, moca, faq) != severity(cdr_label[ci])) ++dominance_bad;
                }
    long mono = 0, mono_bad = 0;
    for (int mmse = -1; mmse <= 30; ++mmse)
        for (int moca = -1; moca <= 30; ++moca)
            for (int faq = -1; faq <= 30; ++faq) {
                if (mmse < 0 && moca < 0 && faq < 0) continue;
                const int s = stage(std::nullopt, mmse, moca, faq);
                // one step more impaired on a present score never moves toward CN
                if (mmse > 0) ++mono, mono_bad += stage(std::nullopt, mmse - 1, moca, faq) < s;
                if (moca > 0) ++mono, mono_bad += stage(std::nullopt, mmse, moca - 1, faq) < s;
                if (faq >= 0 && faq < 30) ++mono, mono_bad += stage(std::nullopt, mmse, moca, faq + 1) < s;
            }
    for (int a11 = -1; a11 <= 70; ++a11)
        for (int a13 = -1; a13 <= 85; ++a13)
            for (int mmse : {-1, 15, 24, 28}) {
                if (a11 < 0 && a13 < 0 && mmse < 0) continue;
                const int s = stage(std::nullopt, mmse, -1, -1, a11, a13);
                if (a11 >= 0 && a11 < 70) ++mono, mono_bad += stage(std::nullopt, mmse, -1, -1, a11 + 1, a13) < s;
                if (a13 >= 0 && a13 < 85) ++mono, mono_bad += stage(std::nullopt, mmse, -1, -1, a11, a13 + 1) < s;
            }
    c.verbose_ = true;
    c.expect(dominance_bad == 0, "CDR dominance over " + std::to_string(dominance) + " grid cases (" +
                                     std::to_string(dominance_bad) + " violations)");
    c.expect(mono_bad == 0, "monotonicity over " + std::to_string(mono) + " single-step worsenings (" +
                                std::to_string(mono_bad) + " violations)");
}

// ------------------------------------------------------------------ 7

int count_kind(const service::CaseSession& s, EventKind kind, const std::string& stage) {
    return static_cast<int>(
        std::count_if(s.events.begin(), s.events.end(), [&](const PipelineEvent& e) { return e.kind == kind && e.stage == stage; }));
}

bool gapless(const service::CaseSession& s) {
    for (std::size_t i = 0; i < s.events.size(); ++i)
        if (s.events[i].sequence != static_cast<std::int64_t>(i) + 1) return false;
    return !s.events.empty();
}

void criterion_end_to_end(Checks& c) {
    const auto dir = dxtest::scratch_dir("acceptance");
    {
        auto store = std::make_shared<service::SessionStore>(dir);
        dxtest::CountingRegistry tools;
        auto model = std::make_shared<dxtest::RecordingProvider>();
        service::Engine engine(store, tools.registry, dxtest::recording_gateway(model));

        const auto id = engine.create_case_session(dxtest::full_case());
        model->push(dxtest::full_plan_reply(store->get(id)->record));
        model->push(dxtest::report_reply());
        const auto status = engine.advance_pipeline(id);
        auto s = store->get(id);
        c.expect(status == service::CaseStatus::done, "full-modality case reaches done (got " +
                                                          std::string(service::to_string(status)) + ")");
        c.expect(count_kind(*s, EventKind::tool_ok, "tools") == 5, "five tool_ok events");
        c.expect(gapless(*s), "event log of " + std::to_string(s->events.size()) + " entries is gapless from 1");
        const auto* rep = s->current_report();
        c.expect(rep != nullptr, "report persisted");
        if (rep) {
            const auto errors = schema::validate(aggregator::report_schema(), json::parse(rep->document));
            c.expect(errors.empty(), "report document conforms to the report schema" +
                                         (errors.empty() ? std::string() : ": " + errors.front()));
            c.expect(rep->report.provenance == Provenance::llm, "scripted report keeps provenance llm");
            c.expect(validate_report(rep->report).ok(), "report invariants hold");
        }
        c.expect(service::replay_status(s->events) == s->status, "replaying events reconstructs status");

        // aggregator replies with invalid JSON every time
        const int max_attempts = aggregator::AggregatorOptions{}.max_attempts;
        const auto id2 = engine.create_case_session(dxtest::full_case());
        model->push(dxtest::full_plan_reply(store->get(id2)->record));
        const std::size_t before = model->requests().size();
        for (int i = 0; i < max_attempts; ++i) model->push("{\"diagnosis\": \"MCI\", \"confidence\": ");
        model->push(dxtest::report_reply());  // must not be reached
        engine.advance_pipeline(id2);
        auto s2 = store->get(id2);
        const std::size_t calls = model->requests().size() - before;
        c.expect(calls == 1u + static_cast<std::size_t>(max_attempts),
                 "one planner call then exactly " + std::to_string(max_attempts) + " aggregator attempts (model calls " +
                     std::to_string(calls) + ")");
        c.expect(count_kind(*s2, EventKind::retry, "aggregation") == max_attempts - 1,
                 std::to_string(max_attempts - 1) + " aggregation retry events");
        c.expect(count_kind(*s2, EventKind::fallback, "aggregation") == 1, "one aggregation fallback event");
        const auto* fb = s2->current_report();
        c.expect(fb && fb->report.provenance == Provenance::guideline_fallback, "report provenance guideline_fallback");
        if (fb) {
            c.expect(schema::conforms(aggregator::report_schema(), json::parse(fb->document)),
                     "fallback report conforms to the report schema");
            c.expect(validate_report(fb->report).ok(), "fallback report has supporting evidence");
        }
        c.expect(s2->status == service::CaseStatus::done && gapless(*s2), "fallback run is done with a gapless log");
    }
    fs::remove_all(dir);
}

// ------------------------------------------------------------------ 8

void criterion_parsers(Checks& c) {
    const auto mni = nifti::read_header(dxtest::fixture("mni152_t1.nii.gz"));
    c.expect(mni.ndim == 3 && mni.dims[0] == 182 && mni.dims[1] == 218 && mni.dims[2] == 182,
             "MNI fixture dims (" + std::to_string(mni.dims[0]) + "," + std::to_string(mni.dims[1]) + "," +
                 std::to_string(mni.dims[2]) + ")");
    c.expect(nifti::validate_preprocessed_mri(mni).ok(), "MNI fixture passes validation");
    const auto two_d = nifti::validate_preprocessed_mri(nifti::read_header(dxtest::fixture("localizer_2d.nii")));
    c.expect(!two_d.ok() && two_d.has("2D scan excluded"), "2D localizer rejected: 2D scan excluded");
    const auto four_d = nifti::validate_preprocessed_mri(nifti::read_header(dxtest::fixture("rsfmri_4d.nii.gz")));
    c.expect(!four_d.ok() && four_d.has("4D time series"), "4D series rejected: 4D time series");

    const std::string head =
        "##fileformat=VCFv4.2\n#CHROM\tPOS\tID\tREF\tALT\tQUAL\tFILTER\tINFO\tFORMAT\tS0\n";
    const std::pair<const char*, std::optional<int>> gts[] = {{"0/0", 0}, {"0/1", 1}, {"1|1", 2}, {"./.", std::nullopt}};
    for (const auto& [gt, dosage] : gts) {
        const auto t = vcf::parse_genotypes(head + "1\t100\trs1\tA\tG\t.\tPASS\t.\tGT\t" + gt + "\n", {{"rs1"}});
        const bool ok = t.calls.count("rs1") && t.calls.at("rs1").dosage == dosage;
        c.expect(ok, std::string("GT ") + gt + " -> dosage " + (dosage ? std::to_string(*dosage) : "missing"));
    }

    // haplotype table: e2 = (rs429358 T, rs7412 T), e3 = (T, C), e4 = (C, C);
    // dosages count the ALT alleles C at rs429358 and T at rs7412
    auto call = [](const char* rsid, const char* ref, const char* alt, int dosage) {
        vcf::GenotypeCall g;
        g.rsid = rsid;
        g.ref_allele = ref;
        g.alt_allele = alt;
        g.dosage = dosage;
        return g;
    };
    struct Row {
        int a, b;
        const char* genotype;
        bool ambiguous;
    };
    const Row table[] = {{0, 0, "3/3", false}, {0, 1, "2/3", false}, {0, 2, "2/2", false}, {1, 0, "3/4", false},
                         {2, 0, "4/4", false}, {1, 1, "2/4", true}};
    for (const auto& r : table) {
        const auto got = apoe::infer(call(apoe::kRs429358, "T", "C", r.a), call(apoe::kRs7412, "C", "T", r.b));
        c.expect(got.genotype == r.genotype && got.ambiguous == r.ambiguous,
                 "APOE dosages (" + std::to_string(r.a) + "," + std::to_string(r.b) + ") -> " + r.genotype +
                     (r.ambiguous ? " flagged ambiguous" : "") + " (got " + got.genotype +
                     (got.ambiguous ? ", ambiguous" : "") + ")");
    }
    for (auto [a, b] : {std::pair{2, 1}, {1, 2}, {2, 2}}) {
        const auto code = code_of([&] { apoe::infer(call(apoe::kRs429358, "T", "C", a), call(apoe::kRs7412, "C", "T", b)); });
        c.expect(code == ErrorCode::InconsistentAlleles,
                 "APOE dosages (" + std::to_string(a) + "," + std::to_string(b) + ") have no haplotype pair");
    }
    const auto het = vcf::read_genotypes(dxtest::fixture("double_het.vcf"), {{apoe::kRs429358}, {apoe::kRs7412}});
    if (het.calls.size() == 2) {
        const auto inf = apoe::infer(het.calls.at(apoe::kRs429358), het.calls.at(apoe::kRs7412));
        c.expect(inf.genotype == "2/4" && inf.ambiguous, "double-heterozygote fixture -> 2/4, ambiguous");
    } else {
        c.expect(false, "double-heterozygote fixture has both APOE calls");
    }
}

// ------------------------------------------------------------------ 9

void criterion_phs(Checks& c) {
    const auto tiny = phs::parse_model(json::parse(R"({
      "variants": [{"rsid": "a", "beta": 0.5}, {"rsid": "b", "beta": -0.2}],
      "mu": 0.3,
      "reference_scores": [-0.4, -0.2, 0.0, 0.3, 0.3, 0.5, 0.8, 1.0],
      "baseline_survival": [{"age": 60, "s0": 0.99}, {"age": 70, "s0": 0.95}, {"age": 80, "s0": 0.85}]
    })"));
    const double fixture = phs::compute(tiny, {{"a", 2}, {"b", 1}}, std::nullopt).raw_phs;
    c.expect(fixture == 0.8, "beta {0.5, -0.2}, dosages {2, 1} -> " + fmt(fixture, 17));
    c.expect(phs::compute(tiny, {{"a", 0}, {"b", 0}}, std::nullopt).raw_phs == 0.0, "zero dosages -> 0");

    const auto& model = phs::default_model();
    std::map<std::string, int> zero;
    for (const auto& v : model.variants) zero[v.rsid] = 0;
    c.expect(phs::compute(model, zero, std::nullopt).raw_phs == 0.0, "bundled model: zero dosages -> 0");

    c.verbose_ = false;
    std::mt19937 rng(9);
    std::uniform_int_distribution<int> d02(0, 2);
    std::uniform_real_distribution<double> coef(-2, 2);
    int linear = 0;
    for (int trial = 0; trial < 300; ++trial) {
        std::map<std::string, int> x, y, sum;
        for (const auto& v : model.variants) {
            x[v.rsid] = d02(rng) / 2;
            y[v.rsid] = d02(rng) / 2;
            sum[v.rsid] = x[v.rsid] + y[v.rsid];
        }
        const double sx = phs::compute(model, x, std::nullopt).raw_phs;
        const double sy = phs::compute(model, y, std::nullopt).raw_phs;
        const double ss = phs::compute(model, sum, std::nullopt).raw_phs;
        // additivity plus the closed form sum(beta * dosage)
        double direct = 0;
        for (const auto& v : model.variants) direct += v.beta * x[v.rsid];
        const bool ok = std::fabs(ss - (sx + sy)) <= 1e-9 && std::fabs(sx - direct) <= 1e-9;
        linear += ok;
        c.expect(ok, "linearity trial " + std::to_string(trial));
    }
    c.verbose_ = true;
    c.expect(linear == 300, "linearity in dosages over 300 random pairs");

    c.verbose_ = false;
    std::vector<double> raws;
    for (int i = 0; i < 400; ++i) raws.push_back(coef(rng));
    for (double r : model.reference_scores) raws.push_back(r);
    std::sort(raws.begin(), raws.end());
    bool mono = true;
    for (std::size_t i = 1; i < raws.size(); ++i) mono = mono && phs::percentile(model, raws[i]) >= phs::percentile(model, raws[i - 1]);
    c.verbose_ = true;
    c.expect(mono, "percentile is non-decreasing in the raw score (" + std::to_string(raws.size()) + " scores)");
    c.expect(phs::percentile(model, -1e9) == 0.0 && phs::percentile(model, 1e9) == 100.0, "percentile spans [0, 100]");

    for (double age : {60.0, 65.0, 70.0, 75.0, 80.0}) {
        double s0 = 0;
        for (std::size_t i = 0; i < tiny.baseline_survival.size(); ++i) {
            const auto& p = tiny.baseline_survival[i];
            if (p.age == age) s0 = p.s0;
            if (i + 1 < tiny.baseline_survival.size() && age > p.age && age < tiny.baseline_survival[i + 1].age) {
                const auto& q = tiny.baseline_survival[i + 1];
                s0 = p.s0 + (q.s0 - p.s0) * (age - p.age) / (q.age - p.age);
            }
        }
        c.near(phs::risk_at(tiny, age, 1.0), 1.0 - s0, 1e-12, "HR 1 at age " + fmt(age, 0) + " is baseline risk");
    }
    const auto at_mu = phs::compute(tiny, {{"a", 1}, {"b", 1}}, 70.0);
    c.expect(at_mu.hazard_ratio && std::fabs(*at_mu.hazard_ratio - 1.0) < 1e-12, "score equal to mu gives HR 1");
    c.expect(!at_mu.risk_curve.empty() && std::fabs(at_mu.risk_curve.front().risk - 0.05) < 1e-12,
             "HR 1 risk at 70 equals 1 - S0(70) = 0.05");
}

// ------------------------------------------------------------------ 10

void criterion_fairness(Checks& c) {
    const auto d = eval::dispersion({0.8, 0.9, 1.0});
    c.near(d.gap, 0.2, 1e-12, "gap of {0.8, 0.9, 1.0}");
    c.near(d.std, 0.08165, 1e-4, "population std of {0.8, 0.9, 1.0}");
    c.near(d.std, std::sqrt(0.02 / 3), 1e-15, "population std equals sqrt(0.02/3)");
    const auto eq = eval::dispersion({0.85, 0.85, 0.85, 0.85});
    c.expect(eq.std == 0.0 && eq.gap == 0.0, "equal values -> std 0 and gap 0");

    // the same through fairness_dispersion on predictions
    auto group = [](const char* race, int n, int correct) {
        std::vector<eval::LabeledPrediction> out(n);
        for (int i = 0; i < n; ++i) {
            out[i].truth = StagingLabel::MCI;
            out[i].predicted = i < correct ? StagingLabel::MCI : StagingLabel::AD;
            out[i].subgroup_keys["race"] = race;
        }
        return out;
    };
    std::vector<eval::LabeledPrediction> preds;
    for (auto part : {group("Asian", 10, 8), group("Black", 10, 9), group("White", 10, 10)})
        preds.insert(preds.end(), part.begin(), part.end());
    const auto rep = eval::fairness_dispersion(preds, "race");
    c.near(rep.spread.gap, 0.2, 1e-12, "race subgroups 0.8/0.9/1.0 gap");
    c.near(rep.spread.std, 0.08165, 1e-4, "race subgroups 0.8/0.9/1.0 std");
    std::vector<eval::LabeledPrediction> same;
    for (auto part : {group("Asian", 4, 3), group("Black", 8, 6)}) same.insert(same.end(), part.begin(), part.end());
    const auto flat = eval::fairness_dispersion(same, "race");
    c.expect(flat.spread.std == 0.0 && flat.spread.gap == 0.0, "equal subgroup accuracies -> both dispersions 0");
    c.expect(code_of([&] { eval::fairness_dispersion(group("Asian", 5, 5), "race"); }) ==
                 ErrorCode::InsufficientSubgroups,
             "a single subgroup is InsufficientSubgroups");
}

struct Criterion {
    int id;
    const char* title;
    std::function<void(Checks&)> run;
};

const std::vector<Criterion>& criteria() {
    static const std::vector<Criterion> all = {
        {1, "cost-table arithmetic", criterion_cost_table},
        {2, "reader-study arithmetic", criterion_reader_arithmetic},
        {3, "Pareto frontier excludes exactly DeepSeek-V3.1", criterion_pareto},
        {4, "metric oracle equivalence", criterion_metric_oracle},
        {5, "bootstrap properties", criterion_bootstrap},
        {6, "guideline band suite", criterion_guideline_bands},
        {7, "end-to-end pipeline", criterion_end_to_end},
        {8, "parsers", criterion_parsers},
        {9, "PHS properties", criterion_phs},
        {10, "fairness dispersion", criterion_fairness},
    };
    return all;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    int only = 0;
    app.add_option("--criterion", only, "run a single criterion (1-10)")->check(CLI::Range(1, 10));
    CLI11_PARSE(app, argc, argv);

    int failed = 0;
    for (const auto& crit : criteria()) {
        if (only && crit.id != only) continue;
        std::cout << "criterion " << crit.id << " (" << crit.title << ")\n";
        Checks checks;
        try {
            crit.run(checks);
        } catch (const std::exception& e) {
            checks.expect(false, std::string("unexpected exception: ") + e.what());
        }
        const bool ok = checks.passed();
        failed += !ok;
        std::cout << "criterion " << crit.id << ": " << (ok ? "PASS" : "FAIL") << " (" << checks.total() - checks.failed()
                  << "/" << checks.total() << " checks)\n";
    }
    return failed == 0 ? 0 : 1;
}
