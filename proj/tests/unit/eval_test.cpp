#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "dxagent/core/error.hpp"
#include "dxagent/core/util.hpp"
#include "dxagent/eval/cost_table.hpp"
#include "dxagent/eval/metrics.hpp"
#include "dxagent/eval/reader_study.hpp"
#include "dxagent/eval/stats.hpp"
#include "dxagent/eval/tables.hpp"

using namespace dxagent;
using namespace dxagent::eval;
using L = StagingLabel;

namespace {

template <class F>
ErrorCode code_of(F&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an Error";
    return ErrorCode::InvalidArgument;
}

LabeledPrediction lp(L truth, L pred, std::string race = "", std::string bin = "") {
    LabeledPrediction p;
    p.truth = truth;
    p.predicted = pred;
    if (!race.empty()) p.subgroup_keys["race"] = race;
    if (!bin.empty()) p.subgroup_keys["age_bin"] = bin;
    return p;
}

// Brute-force oracle: explicit per-case tallies, no confusion matrix.
struct OracleResult {
    double accuracy = 0, f1 = 0, sens = 0, spec = 0;
};

OracleResult oracle(const std::vector<LabeledPrediction>& v, const std::vector<L>& classes) {
    OracleResult r;
    int correct = 0;
    for (const auto& p : v) correct += p.truth == p.predicted;
    r.accuracy = double(correct) / double(v.size());
    int used = 0;
    for (L c : classes) {
        long tp = 0, fp = 0, fn = 0, tn = 0;
        for (const auto& p : v) {
            const bool t = p.truth == c, q = p.predicted == c;
            if (t && q) ++tp;
            if (!t && q) ++fp;
            if (t && !q) ++fn;
            if (!t && !q) ++tn;
        }
        if (tp + fn == 0) continue;
        ++used;
        r.sens += double(tp) / double(tp + fn);
        r.spec += tn + fp == 0 ? 1.0 : double(tn) / double(tn + fp);
        r.f1 += double(2 * tp) / double(2 * tp + fp + fn);
    }
    if (used) {
        r.f1 /= used;
        r.sens /= used;
        r.spec /= used;
    }
    return r;
}

std::vector<LabeledPrediction> accuracy_group(const std::string& race, int n, int correct) {
    std::vector<LabeledPrediction> v;
    for (int i = 0; i < n; ++i) v.push_back(lp(L::AD, i < correct ? L::AD : L::CN, race));
    return v;
}

}  // namespace

TEST(Stats, IncompleteBetaMatchesReference) {
    // reference values from scipy.special.betainc
    EXPECT_NEAR(incomplete_beta(2, 3, 0.5), 0.6875, 1e-12);
    EXPECT_NEAR(incomplete_beta(0.5, 0.5, 0.3), 0.36901011956554536, 1e-10);
    EXPECT_NEAR(incomplete_beta(10, 0.5, 0.9), 0.15164090963470994, 1e-10);
    EXPECT_NEAR(incomplete_beta(49.5, 0.5, 0.95), 0.024589522572171042, 1e-10);
    EXPECT_NEAR(incomplete_beta(1, 1, 0.42), 0.42, 1e-12);
}

TEST(Stats, TwoSidedPMatchesReference) {
    // 2 * scipy.stats.t.sf(|t|, df)
    const struct {
        double t, df, p;
    } cases[] = {{1.0, 1, 0.5},           {2.5, 7, 0.040992218585752874}, {0.3, 30, 0.7662461052843528},
                 {-1.7, 12, 0.11487986539520915}, {4.0, 99, 0.00012225152757111337}, {10, 3, 0.0021283990584141494}};
    for (const auto& c : cases) EXPECT_NEAR(t_two_sided_p(c.t, c.df), c.p, 1e-9) << c.t << " " << c.df;
}

TEST(Stats, PairedTTestHandExample) {
    auto r = paired_t_test({1, 2, 3});
    EXPECT_NEAR(r.t, 3.4641, 1e-3);
    EXPECT_DOUBLE_EQ(r.cohens_dz, 2.0);
    EXPECT_NEAR(r.p, 0.07417990022744853, 1e-9);
    EXPECT_EQ(r.df, 2.0);
    EXPECT_EQ(code_of([] { paired_t_test({5}); }), ErrorCode::NoPairs);
    EXPECT_EQ(code_of([] { paired_t_test({2, 2, 2}); }), ErrorCode::ZeroVariance);
}

TEST(Stats, PublishedEffectSizeAndPAreConsistent) {
    // one reader x 100 cases: t = dz * sqrt(n), df = 99
    EXPECT_NEAR(t_two_sided_p(0.1603 * 10.0, 99), 0.1122, 2e-4);
}

TEST(Stats, Descriptive) {
    EXPECT_DOUBLE_EQ(median({3, 1, 2}), 2.0);
    EXPECT_DOUBLE_EQ(median({4, 1, 3, 2}), 2.5);
    EXPECT_NEAR(population_sd({0.8, 0.9, 1.0}), std::sqrt(0.02 / 3), 1e-12);
    EXPECT_DOUBLE_EQ(sample_sd({1, 2, 3}), 1.0);
}

TEST(Metrics, HandFixture) {
    // rows A:[2,0,0] B:[1,1,0] C:[0,0,1]
    std::vector<LabeledPrediction> v = {lp(L::CN, L::CN), lp(L::CN, L::CN), lp(L::MCI, L::CN), lp(L::MCI, L::MCI),
                                        lp(L::AD, L::AD)};
    auto m = compute_metrics(v);
    EXPECT_NEAR(m.micro_accuracy, 0.8, 1e-12);
    EXPECT_NEAR(m.macro_f1, 0.8222, 1e-4);
    EXPECT_NEAR(m.macro_sensitivity, 0.8333, 1e-4);
    EXPECT_NEAR(m.macro_specificity, 0.8889, 1e-4);
    EXPECT_EQ(m.per_class[L::CN].fp, 1);
    EXPECT_NEAR(m.per_class[L::CN].precision, 2.0 / 3.0, 1e-12);
}

TEST(Metrics, PerfectSingleClassAndTwoClass) {
    std::vector<LabeledPrediction> perfect = {lp(L::CN, L::CN), lp(L::MCI, L::MCI), lp(L::AD, L::AD)};
    auto m = compute_metrics(perfect);
    EXPECT_DOUBLE_EQ(m.micro_accuracy, 1.0);
    EXPECT_DOUBLE_EQ(m.macro_f1, 1.0);

    auto one = compute_metrics({lp(L::AD, L::AD), lp(L::AD, L::AD)});
    EXPECT_DOUBLE_EQ(one.micro_accuracy, 1.0);
    EXPECT_EQ(one.classes, std::vector<L>{L::AD});
    EXPECT_EQ(one.warnings.size(), 2u);

    std::vector<LabeledPrediction> oasis = {lp(L::CN, L::CN), lp(L::CN, L::AD), lp(L::AD, L::AD), lp(L::CN, L::CN)};
    auto two = compute_metrics(oasis, {L::CN, L::AD});
    EXPECT_EQ(two.classes.size(), 2u);
    EXPECT_TRUE(two.warnings.empty());
    EXPECT_NEAR(two.macro_sensitivity, (2.0 / 3.0 + 1.0) / 2.0, 1e-12);
    EXPECT_EQ(code_of([] { compute_metrics({}); }), ErrorCode::EmptyInput);
}

TEST(Metrics, BruteForceOracleProperty) {
    std::mt19937 rng(101);
    std::uniform_int_distribution<int> size(1, 50), two(0, 1);
    for (int trial = 0; trial < 1000; ++trial) {
        const bool binary = trial % 3 == 0;
        std::vector<L> classes = binary ? std::vector<L>{L::CN, L::AD} : std::vector<L>{L::CN, L::MCI, L::AD};
        std::uniform_int_distribution<std::size_t> pick(0, classes.size() - 1);
        std::vector<LabeledPrediction> v;
        const int n = size(rng);
        for (int i = 0; i < n; ++i) v.push_back(lp(classes[pick(rng)], classes[pick(rng)]));
        auto m = compute_metrics(v, classes);
        auto o = oracle(v, classes);
        EXPECT_EQ(m.micro_accuracy, o.accuracy);
        EXPECT_EQ(m.macro_f1, o.f1);
        EXPECT_EQ(m.macro_sensitivity, o.sens);
        EXPECT_EQ(m.macro_specificity, o.spec);
    }
}

TEST(Metrics, RelabelingInvarianceProperty) {
    std::mt19937 rng(7);
    std::uniform_int_distribution<int> lab(0, 2);
    std::vector<int> perm = {0, 1, 2};
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<LabeledPrediction> v, w;
        std::shuffle(perm.begin(), perm.end(), rng);
        for (int i = 0; i < 30; ++i) {
            const int t = lab(rng), p = lab(rng);
            v.push_back(lp(kAllLabels[t], kAllLabels[p]));
            w.push_back(lp(kAllLabels[perm[t]], kAllLabels[perm[p]]));
        }
        auto a = compute_metrics(v), b = compute_metrics(w);
        EXPECT_NEAR(a.macro_f1, b.macro_f1, 1e-12);
        EXPECT_NEAR(a.macro_sensitivity, b.macro_sensitivity, 1e-12);
        EXPECT_NEAR(a.macro_specificity, b.macro_specificity, 1e-12);
    }
}

TEST(Bootstrap, DefaultsAndDegenerateInput) {
    EXPECT_EQ(kDefaultResamples, 2000);
    std::vector<LabeledPrediction> perfect(20, lp(L::MCI, L::MCI));
    perfect.push_back(lp(L::AD, L::AD));
    auto b = bootstrap(perfect, Metric::micro_accuracy);
    EXPECT_EQ(b.samples.size(), 2000u);
    EXPECT_EQ(b.ci, (Interval{1.0, 1.0}));
    EXPECT_EQ(bootstrap_ci(perfect, Metric::macro_f1, 500, 3), (Interval{1.0, 1.0}));
    EXPECT_EQ(code_of([] { bootstrap({}, Metric::micro_accuracy); }), ErrorCode::EmptyInput);
    EXPECT_EQ(code_of([&] { bootstrap(perfect, Metric::micro_accuracy, 0); }), ErrorCode::InvalidArgument);
}

TEST(Bootstrap, DeterministicAndOrderStatistics) {
    std::mt19937 rng(9);
    std::uniform_int_distribution<int> lab(0, 2);
    std::vector<LabeledPrediction> v;
    for (int i = 0; i < 40; ++i) v.push_back(lp(kAllLabels[lab(rng)], kAllLabels[lab(rng)]));
    auto a = bootstrap(v, Metric::macro_f1, 2000, 42);
    auto b = bootstrap(v, Metric::macro_f1, 2000, 42);
    EXPECT_EQ(a.samples, b.samples);
    EXPECT_EQ(a.ci, b.ci);
    EXPECT_LE(a.ci.low, a.ci.high);
    EXPECT_EQ(a.ci.low, a.samples[49]);
    EXPECT_EQ(a.ci.high, a.samples[1949]);
    EXPECT_NE(bootstrap(v, Metric::macro_f1, 2000, 43).samples, a.samples);
}

TEST(Bootstrap, PointEstimateInsideIntervalProperty) {
    int inside = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        std::mt19937 rng(static_cast<unsigned>(seed) + 1000);
        std::vector<LabeledPrediction> v;
        std::uniform_int_distribution<int> lab(0, 2);
        for (int i = 0; i < 50; ++i) {
            L t = kAllLabels[lab(rng)];
            v.push_back(lp(t, i < 40 ? t : kAllLabels[(severity(t) + 1) % 3]));
        }
        const double point = compute_metrics(v).micro_accuracy;
        EXPECT_DOUBLE_EQ(point, 0.8);
        auto ci = bootstrap_ci(v, Metric::micro_accuracy, 2000, seed);
        inside += ci.low <= point && point <= ci.high;
    }
    EXPECT_EQ(inside, 200);
}

TEST(Bootstrap, AttachFillsAllMetrics) {
    std::vector<LabeledPrediction> v = {lp(L::CN, L::CN), lp(L::MCI, L::AD), lp(L::AD, L::AD), lp(L::MCI, L::MCI)};
    auto m = compute_metrics(v);
    attach_bootstrap(m, v, 300, 1);
    EXPECT_EQ(m.ci.size(), 4u);
    EXPECT_EQ(m.standard_error.size(), 4u);
    nlohmann::json j = m;
    EXPECT_EQ(j["micro_accuracy"]["ci"].size(), 2u);
}

TEST(Fairness, DispersionExamples) {
    auto v = accuracy_group("Asian", 10, 8);
    auto b = accuracy_group("Black", 10, 9);
    auto w = accuracy_group("White", 10, 10);
    v.insert(v.end(), b.begin(), b.end());
    v.insert(v.end(), w.begin(), w.end());
    auto r = fairness_dispersion(v, "race");
    EXPECT_NEAR(r.spread.gap, 0.2, 1e-12);
    EXPECT_NEAR(r.spread.std, 0.08165, 1e-4);
    EXPECT_EQ(r.counts.at("Black"), 10u);

    auto same = dispersion({0.7, 0.7, 0.7});
    EXPECT_EQ(same.std, 0.0);
    EXPECT_EQ(same.gap, 0.0);
    EXPECT_EQ(code_of([] { fairness_dispersion(accuracy_group("White", 5, 4), "race"); }),
              ErrorCode::InsufficientSubgroups);
}

TEST(Fairness, GapZeroIffEqualProperty) {
    std::mt19937 rng(4);
    std::uniform_int_distribution<int> k(0, 3);
    for (int i = 0; i < 500; ++i) {
        std::vector<double> vals;
        for (int j = 0; j < 4; ++j) vals.push_back(k(rng) / 4.0);
        const bool equal = std::all_of(vals.begin(), vals.end(), [&](double x) { return x == vals[0]; });
        EXPECT_EQ(dispersion(vals).gap == 0.0, equal);
    }
}

TEST(Fairness, AgeBins) {
    EXPECT_EQ(age_bin(64.99), "<65");
    EXPECT_EQ(age_bin(65), "65-74");
    EXPECT_EQ(age_bin(74.9), "65-74");
    EXPECT_EQ(age_bin(75), "75-84");
    EXPECT_EQ(age_bin(85), ">=85");
    auto rows = load_predictions_jsonl(R"({"case_id":"a","truth":"NC","predicted":"CN","age":72,"race":"Asian"})"
                                       "\n");
    EXPECT_EQ(rows[0].subgroup_keys.at("age_bin"), "65-74");
    EXPECT_EQ(rows[0].truth, L::CN);
    EXPECT_EQ(code_of([] { load_predictions_jsonl(R"({"truth":"CN","predicted":"CN","race":"Martian"})"); }),
              ErrorCode::InvalidRecord);
}

TEST(ReaderStudy, ArithmeticExamples) {
    EXPECT_NEAR(improvement_ratio(0.7687, 0.8299), 7.96, 0.01);
    EXPECT_NEAR(speedup(66.49, 19.79), 3.3598, 1e-3);
    EXPECT_EQ(code_of([] { improvement_ratio(0, 1); }), ErrorCode::InvalidArgument);
}

TEST(ReaderStudy, GroupsFromCsv) {
    std::string csv = std::string(kReaderCsvHeader) + "\n";
    const char* rows[] = {"r1,junior,neurologist,c1,CN,CN,60,CN,20", "r1,junior,neurologist,c2,AD,MCI,90,AD,30",
                          "r1,junior,neurologist,c3,MCI,MCI,70,MCI,25", "r2,senior,radiologist,c1,CN,CN,40,CN,40",
                          "r2,senior,radiologist,c2,AD,AD,50,AD,50"};
    for (const char* r : rows) csv += std::string(r) + "\n";
    auto recs = load_reader_csv(csv);
    auto groups = reader_study_stats(recs);
    ASSERT_EQ(groups.size(), 3u);
    EXPECT_EQ(groups[0].group, "Junior Neurologist");
    EXPECT_EQ(groups[1].group, "Senior Radiologist");
    EXPECT_EQ(groups[2].group, "Overall");
    EXPECT_NEAR(groups[0].improvement.at(Metric::micro_accuracy), 50.0, 1e-9);
    EXPECT_NEAR(groups[0].times.median_speedup, 70.0 / 25.0, 1e-12);
    ASSERT_TRUE(groups[0].t_test.has_value());
    EXPECT_FALSE(groups[1].t_test.has_value());  // identical times: dz undefined
    EXPECT_NE(groups[1].t_test_note.find("ZeroVariance"), std::string::npos);
    EXPECT_NE(reader_time_markdown(groups).find("undefined"), std::string::npos);
    EXPECT_EQ(code_of([&] { load_reader_csv("bad,header\n"); }), ErrorCode::InvalidRecord);
    EXPECT_EQ(code_of([&] { load_reader_csv(std::string(kReaderCsvHeader) + "\nr,junior,neurologist,c,CN,CN,0,CN,3\n"); }),
              ErrorCode::InvalidRecord);
    EXPECT_EQ(code_of([] { reader_study_stats({}); }), ErrorCode::NoPairs);
}

TEST(Cost, ConsistencyChecks) {
    auto rows = load_cost_csv(
        "model,accuracy,raw_accuracy,published_ratio,avg_cost_per_case,overall_cost\n"
        "cheap,78.73,68.64,14.70,0.000534,2.77\n"
        "broken,80,70,,0.000534,99\n");
    auto rep = cost_effectiveness(rows, 5195);
    auto bad = rep.inconsistencies();
    ASSERT_EQ(bad.size(), 1u);
    EXPECT_EQ(bad[0].model, "broken");
    EXPECT_EQ(bad[0].field, "overall_cost");
    EXPECT_EQ(rep.checks.size(), 3u);
    EXPECT_EQ(code_of([&] { cost_effectiveness(rows, 0); }), ErrorCode::InvalidArgument);
    BackboneCostRow r;
    r.accuracy = 80.40;
    r.raw_accuracy = 69.74;
    EXPECT_NEAR(r.improvement_ratio(), 15.29, 0.01);
}

TEST(Pareto, Examples) {
    std::vector<CostPoint> pts = {{"a", 2.77, 78.73}, {"d", 35.18, 78.90}, {"q", 25.63, 79.94}, {"o", 70.32, 80.40}};
    auto f = pareto_frontier(pts);
    EXPECT_EQ(f, (std::vector<CostPoint>{{"a", 2.77, 78.73}, {"q", 25.63, 79.94}, {"o", 70.32, 80.40}}));
    EXPECT_EQ(pareto_frontier({{"x", 1, 1}}).size(), 1u);
    EXPECT_EQ(pareto_frontier({{"x", 1, 1}, {"y", 1, 1}}).size(), 2u);
    EXPECT_EQ(code_of([] { pareto_frontier({}); }), ErrorCode::EmptyInput);
}

TEST(Pareto, AntichainAndCoverageProperty) {
    std::mt19937 rng(8);
    std::uniform_int_distribution<int> c(0, 20), a(0, 20), n(1, 15);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<CostPoint> pts;
        const int k = n(rng);
        for (int i = 0; i < k; ++i) pts.push_back({std::to_string(i), double(c(rng)), double(a(rng))});
        auto f = pareto_frontier(pts);
        for (const auto& p : f)
            for (const auto& q : f) EXPECT_FALSE(dominates(q, p));
        for (const auto& p : pts) {
            if (std::find(f.begin(), f.end(), p) != f.end()) continue;
            EXPECT_TRUE(std::any_of(f.begin(), f.end(), [&](const CostPoint& q) { return dominates(q, p); }));
        }
        EXPECT_TRUE(std::is_sorted(f.begin(), f.end(), [](auto& x, auto& y) { return x.cost < y.cost; }));
    }
}

TEST(Tables, MarkdownLayouts) {
    std::vector<LabeledPrediction> oasis = {lp(L::CN, L::CN), lp(L::AD, L::AD), lp(L::AD, L::CN)};
    auto md = metrics_markdown({{"OASIS", "agent", compute_metrics(oasis, {L::CN, L::AD})}});
    EXPECT_NE(md.find("| - | - | - | -"), std::string::npos);
    EXPECT_NE(md.find("| OASIS | agent | 0.667"), std::string::npos);
    auto rows = load_cost_csv("model,accuracy,delta_accuracy,avg_cost_per_case,overall_cost\nm1,80,10,0.01,50\nm2,70,5,0.001,5\nm3,60,1,0.02,60\n");
    auto rep = cost_effectiveness(rows, 5000);
    EXPECT_EQ(rep.rows.front().model, "m2");
    auto csv = cost_plot_csv(rep);
    EXPECT_NE(csv.find("m3,60.00,60.00,false"), std::string::npos);
    EXPECT_NE(csv.find("m1,50.00,80.00,true"), std::string::npos);
    EXPECT_NE(cost_markdown(rep).find("+10.00 (14.29)"), std::string::npos);
}
