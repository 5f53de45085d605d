#include <algorithm>
#include <atomic>
#include <random>
#include <thread>

#include <gtest/gtest.h>

#include "dxagent/core/error.hpp"
#include "dxagent/tools/builtin.hpp"
#include "dxagent/tools/phs.hpp"
#include "dxagent/tools/process.hpp"
#include "dxagent/tools/schema.hpp"

using namespace dxagent;
using namespace dxagent::tools;
using nlohmann::json;

namespace {

const std::filesystem::path kFixtures = DX_FIXTURE_DIR;

std::string fx(const char* name) { return (kFixtures / name).string(); }

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

ToolContext scratch() {
    auto dir = std::filesystem::temp_directory_path() / "dxagent-tools-test";
    std::filesystem::create_directories(dir);
    return {dir};
}

// Fails the first `failures` calls, then returns {"x": 1}.
class FlakyBackend : public ToolBackend {
public:
    explicit FlakyBackend(int failures, json good = {{"x", 1}}) : failures_(failures), good_(std::move(good)) {}
    json run(const json&, const ToolContext&) override {
        if (calls_++ < failures_) fail(ErrorCode::BackendProcessFailed, "scripted failure " + std::to_string(calls_.load()));
        return good_;
    }
    int calls() const { return calls_; }

private:
    int failures_;
    json good_;
    std::atomic<int> calls_{0};
};

ToolSpec simple_spec(const std::string& name) {
    ToolSpec s;
    s.name = name;
    s.purpose = "test";
    s.input_schema = {{"type", "object"}};
    s.output_schema = {{"type", "object"}, {"required", {"x"}}, {"properties", {{"x", {{"type", "integer"}}}}}};
    return s;
}

phs::Model tiny_model() {
    return phs::parse_model(json::parse(R"({
      "variants": [{"rsid": "a", "beta": 0.5}, {"rsid": "b", "beta": -0.2}],
      "mu": 0.3,
      "reference_scores": [-0.4, -0.2, 0.0, 0.3, 0.3, 0.5, 0.8, 1.0],
      "baseline_survival": [{"age": 60, "s0": 0.99}, {"age": 70, "s0": 0.95}, {"age": 80, "s0": 0.85}]
    })"));
}

}  // namespace

// ---------------------------------------------------------------- schema

TEST(Schema, ValidatesSubset) {
    json s = {{"type", "object"},
              {"required", {"a"}},
              {"properties", {{"a", {{"type", "integer"}, {"minimum", 0}, {"maximum", 30}}}, {"b", {{"enum", {"x", "y"}}}}}},
              {"additionalProperties", false}};
    schema::check(s);
    EXPECT_TRUE(schema::conforms(s, {{"a", 3}}));
    EXPECT_TRUE(schema::conforms(s, {{"a", 3.0}}));
    EXPECT_FALSE(schema::conforms(s, {{"a", 3.5}}));
    EXPECT_FALSE(schema::conforms(s, {{"a", 31}}));
    EXPECT_FALSE(schema::conforms(s, {{"a", 1}, {"b", "z"}}));
    EXPECT_FALSE(schema::conforms(s, {{"a", 1}, {"c", 0}}));
    auto errs = schema::validate(s, json::object());
    ASSERT_EQ(errs.size(), 1u);
    EXPECT_NE(errs[0].find("missing required input"), std::string::npos);
}

TEST(Schema, SelfContradictionsAreInvalid) {
    for (const char* bad : {R"({"type":"number","minimum":5,"maximum":1})",
                            R"({"type":"object","required":["q"],"additionalProperties":false})",
                            R"({"type":"string","enum":[1,2]})",
                            R"({"type":"wat"})",
                            R"({"type":"string","pattern":"(("})",
                            R"({"anyOf":[]})",
                            R"({"oneOf":[{}]})",
                            R"({"type":"number","exclusiveMinimum":3,"maximum":3})"}) {
        EXPECT_EQ(code_of([&] { schema::check(json::parse(bad)); }), ErrorCode::InvalidSchema) << bad;
    }
}

// ---------------------------------------------------------------- registry

TEST(Registry, SixBuiltinsAndManifest) {
    auto reg = make_default_registry();
    EXPECT_EQ(reg.size(), 6u);
    for (const char* n : {kBrainVolume, kHippocampus, kGreyMatter, kWhiteMatter, kPhsCalculator, kMriPredictor})
        EXPECT_NE(reg.find(n), nullptr) << n;
    auto m = reg.manifest();
    ASSERT_EQ(m["tools"].size(), 6u);
    for (const auto& t : m["tools"]) {
        EXPECT_TRUE(t.contains("input_schema"));
        EXPECT_NO_THROW(schema::check(t["input_schema"]));
        EXPECT_NO_THROW(schema::check(t["output_schema"]));
    }
}

TEST(Registry, DuplicateAndInvalidSchema) {
    ToolRegistry reg;
    reg.register_tool(volume_spec(VolumeKind::hippocampus, BackendKind::fixture), make_fixture_volume_backend(VolumeKind::hippocampus));
    EXPECT_EQ(code_of([&] {
                  reg.register_tool(volume_spec(VolumeKind::hippocampus, BackendKind::fixture),
                                    make_fixture_volume_backend(VolumeKind::hippocampus));
              }),
              ErrorCode::DuplicateName);
    auto bad = simple_spec("broken");
    bad.input_schema = {{"type", "integer"}, {"minimum", 10}, {"maximum", 0}};
    EXPECT_EQ(code_of([&] { reg.register_tool(bad, std::make_shared<FlakyBackend>(0)); }), ErrorCode::InvalidSchema);
    EXPECT_EQ(reg.size(), 1u);
}

TEST(Registry, FingerprintIgnoresKeyOrder) {
    auto a = make_action("t", json::parse(R"({"x":1,"y":2})"));
    auto b = make_action("t", json::parse(R"({"y":2,"x":1})"));
    EXPECT_EQ(a.fingerprint, b.fingerprint);
    EXPECT_NE(a.fingerprint, make_action("u", a.parameters).fingerprint);
}

// ---------------------------------------------------------------- execute

TEST(ExecuteAction, RetryContract) {
    ToolContext ctx = scratch();
    for (auto [failures, expect_ok, expect_attempts] : {std::tuple{0, true, 1}, std::tuple{2, true, 3}, std::tuple{99, false, 3}}) {
        ToolRegistry reg;
        auto backend = std::make_shared<FlakyBackend>(failures);
        reg.register_tool(simple_spec("flaky"), backend);
        int retry_events = 0;
        EventSink sink = [&](std::string_view, EventKind k, std::string) { retry_events += k == EventKind::retry; };
        auto out = execute_action(reg, make_action("flaky", json::object()), RetryPolicy{3}, ctx, sink);
        EXPECT_EQ(out.status == OutcomeStatus::ok, expect_ok);
        EXPECT_EQ(out.attempts, expect_attempts);
        EXPECT_EQ(backend->calls(), expect_attempts);
        EXPECT_EQ(retry_events, expect_attempts - 1);
        if (!expect_ok) {
            EXPECT_NE(out.diagnostics.find("scripted failure 3"), std::string::npos);
        }
    }
}

TEST(ExecuteAction, OutputSchemaViolationIsRetriedThenFails) {
    ToolRegistry reg;
    reg.register_tool(simple_spec("liar"), std::make_shared<FlakyBackend>(0, json{{"x", "not an int"}}));
    auto out = execute_action(reg, make_action("liar", json::object()), RetryPolicy{2}, scratch());
    EXPECT_EQ(out.status, OutcomeStatus::failed);
    EXPECT_EQ(out.attempts, 2);
    EXPECT_NE(out.diagnostics.find("output schema"), std::string::npos);
}

TEST(ExecuteAction, TimeBudgetStopsRetries) {
    class Slow : public ToolBackend {
    public:
        json run(const json&, const ToolContext&) override {
            std::this_thread::sleep_for(std::chrono::milliseconds(30));
            fail(ErrorCode::BackendProcessFailed, "slow failure");
        }
    };
    ToolRegistry reg;
    reg.register_tool(simple_spec("slow"), std::make_shared<Slow>());
    RetryPolicy p{10};
    p.time_budget = std::chrono::milliseconds(50);
    auto out = execute_action(reg, make_action("slow", json::object()), p, scratch());
    EXPECT_EQ(out.status, OutcomeStatus::failed);
    EXPECT_LE(out.attempts, 3);
    EXPECT_NE(out.diagnostics.find("time budget"), std::string::npos);
    EXPECT_LT(out.wall_time_s, 0.05 + 0.03 + 0.05);
}

TEST(ExecuteAction, UnknownToolAndBadParametersAreFailures) {
    auto reg = make_default_registry();
    auto a = execute_action(reg, make_action("pet_analyzer", {{"image_path", "x"}}), {}, scratch());
    EXPECT_EQ(a.status, OutcomeStatus::failed);
    EXPECT_NE(a.diagnostics.find("UnknownTool"), std::string::npos);
    auto b = execute_action(reg, make_action(kMriPredictor, {{"image_path", fx("mni152_t1.nii.gz")}, {"age", 70}, {"future_years", 0}}), {},
                            scratch());
    EXPECT_EQ(b.status, OutcomeStatus::failed);
    EXPECT_NE(b.diagnostics.find("BadParameters"), std::string::npos);
}

TEST(ExecuteAction, ConcurrentOutcomesKeepPlanOrder) {
    class Sleepy : public ToolBackend {
    public:
        json run(const json& p, const ToolContext&) override {
            std::this_thread::sleep_for(std::chrono::milliseconds(p.at("ms").get<int>()));
            return {{"x", p.at("ms").get<int>()}};
        }
    };
    ToolRegistry reg;
    reg.register_tool(simple_spec("sleepy"), std::make_shared<Sleepy>());
    std::vector<ResolvedAction> actions;
    for (int ms : {40, 5, 25, 1, 10}) actions.push_back(make_action("sleepy", {{"ms", ms}}));
    auto outs = execute_actions(reg, actions, {}, scratch(), {}, 5);
    ASSERT_EQ(outs.size(), 5u);
    for (std::size_t i = 0; i < outs.size(); ++i) EXPECT_EQ(outs[i].payload["x"], actions[i].parameters["ms"]);
}

// ---------------------------------------------------------------- imaging

TEST(Imaging, HippocampusSidecarExamples) {
    auto normal = read_volume_sidecar(VolumeKind::hippocampus, fx("mni152_t1.nii.gz"));
    EXPECT_DOUBLE_EQ(normal.mm3["total"], 6100.0);
    EXPECT_DOUBLE_EQ(normal.mm3["left"], 3100.0);
    EXPECT_EQ(normal.source_unit, VolumeUnit::mL);
    auto atrophic = read_volume_sidecar(VolumeKind::hippocampus, fx("atrophic_t1.nii.gz"));
    EXPECT_DOUBLE_EQ(atrophic.mm3["total"], 5800.0);
    EXPECT_EQ(code_of([] { read_volume_sidecar(VolumeKind::hippocampus, fx("nosidecar_t1.nii.gz")); }), ErrorCode::MissingSidecar);
}

TEST(Imaging, SidecarPathDropsNiftiExtensions) {
    EXPECT_EQ(sidecar_path("/a/b/scan.nii.gz"), std::filesystem::path("/a/b/scan.volumes.json"));
    EXPECT_EQ(sidecar_path("scan.nii"), std::filesystem::path("scan.volumes.json"));
}

TEST(Imaging, AllFixtureToolsProduceSchemaConformantPayloads) {
    auto reg = make_default_registry();
    for (auto kind : kVolumeKinds) {
        auto out = execute_action(reg, make_action(tool_name(kind), {{"image_path", fx("mni152_t1.nii.gz")}}), {}, scratch());
        ASSERT_EQ(out.status, OutcomeStatus::ok) << out.diagnostics;
        EXPECT_EQ(out.attempts, 1);
        EXPECT_TRUE(schema::conforms(reg.find(tool_name(kind))->output_schema, out.payload));
        for (const auto& [k, v] : out.payload["measures"].items()) EXPECT_GT(v.get<double>(), 0.0);
    }
}

TEST(Imaging, InvalidImagesAreRejectedUnlessWaived) {
    auto reg = make_default_registry();
    auto out = execute_action(reg, make_action(kHippocampus, {{"image_path", fx("localizer_2d.nii")}}), RetryPolicy{1}, scratch());
    EXPECT_EQ(out.status, OutcomeStatus::failed);
    EXPECT_NE(out.diagnostics.find("2D scan excluded"), std::string::npos);
    EXPECT_EQ(code_of([] { check_input_image(fx("rsfmri_4d.nii.gz"), false); }), ErrorCode::InvalidImage);
    auto notices = check_input_image(fx("rsfmri_4d.nii.gz"), true);
    ASSERT_FALSE(notices.empty());
    EXPECT_NE(notices[0].find("waived"), std::string::npos);
}

TEST(Imaging, ResultFileParsing) {
    auto r = parse_volume_result(VolumeKind::hippocampus, "# FIRST\nleft 3.05 mL\nright 2950 mm3\n");
    EXPECT_DOUBLE_EQ(r.mm3["total"], 6000.0);
    EXPECT_EQ(code_of([] { parse_volume_result(VolumeKind::hippocampus, "left=3.0\n"); }), ErrorCode::UnparseableOutput);
    EXPECT_EQ(code_of([] { parse_volume_result(VolumeKind::hippocampus, "left 3 mL\n"); }), ErrorCode::UnparseableOutput);
    EXPECT_EQ(code_of([] { parse_volume_result(VolumeKind::hippocampus, "left 3 mL\nright 3 mL\ntotal 9 mL\n"); }),
              ErrorCode::UnparseableOutput);
}

TEST(Imaging, HippocampusTotalIsSumProperty) {
    std::mt19937 rng(9);
    std::uniform_int_distribution<int> ml_tenths(5, 60);
    for (int i = 0; i < 300; ++i) {
        const double l = ml_tenths(rng) / 10.0, r = ml_tenths(rng) / 10.0;
        auto res = parse_volume_result(VolumeKind::hippocampus,
                                       "left " + std::to_string(l) + " mL\nright " + std::to_string(r) + " mL\n");
        EXPECT_LE(std::abs(res.mm3["total"] - (res.mm3["left"] + res.mm3["right"])), 1.0);
        EXPECT_NEAR(res.mm3["total"], std::round((l + r) * 1000.0), 1.0);
    }
}

TEST(Imaging, ExternalBackendContract) {
    auto ok = make_external_volume_backend(VolumeKind::hippocampus, {{fx("fake_first.sh"), "{input}", "{output_dir}"}, "volumes.txt"});
    auto payload = ok->run({{"image_path", fx("mni152_t1.nii.gz")}}, scratch());
    EXPECT_DOUBLE_EQ(payload["measures"]["total"].get<double>(), 6050.0);

    auto broken = make_external_volume_backend(VolumeKind::hippocampus, {{fx("failing_backend.sh"), "{input}"}, "volumes.txt"});
    EXPECT_EQ(code_of([&] { broken->run({{"image_path", fx("mni152_t1.nii.gz")}}, scratch()); }), ErrorCode::BackendProcessFailed);
}

TEST(Process, TemplatesNeverReachAShell) {
    auto argv = render_command({"tool", "--in={input}", "{output_dir}"}, {{"input", "a; rm -rf /"}, {"output_dir", "/tmp/x"}});
    EXPECT_EQ(argv, (std::vector<std::string>{"tool", "--in=a; rm -rf /", "/tmp/x"}));
    EXPECT_EQ(code_of([] { render_command({"x {nope}"}, {}); }), ErrorCode::ConfigInvalid);
    auto dir = scratch().work_dir;
    auto res = run_process({"/bin/echo", "a; exit 3"}, dir / "echo.log", std::chrono::seconds(5));
    EXPECT_EQ(res.exit_code, 0);
    EXPECT_EQ(res.log, "a; exit 3\n");
    auto slow = run_process({"/bin/sleep", "5"}, dir / "sleep.log", std::chrono::milliseconds(50));
    EXPECT_TRUE(slow.timed_out);
}

// ---------------------------------------------------------------- PHS

TEST(Phs, HandExamples) {
    auto m = tiny_model();
    EXPECT_DOUBLE_EQ(phs::compute(m, {{"a", 0}, {"b", 0}}, std::nullopt).raw_phs, 0.0);
    EXPECT_NEAR(phs::compute(m, {{"a", 2}, {"b", 1}}, std::nullopt).raw_phs, 0.8, 1e-12);
    // raw == mu: hazard ratio 1, risk is the baseline 1 - S0(a)
    auto at_mu = phs::compute(m, {{"a", 1}, {"b", 1}}, 70.0);  // 0.5 - 0.2 = 0.3 = mu
    ASSERT_TRUE(at_mu.hazard_ratio);
    EXPECT_NEAR(*at_mu.hazard_ratio, 1.0, 1e-12);
    ASSERT_FALSE(at_mu.risk_curve.empty());
    EXPECT_EQ(at_mu.risk_curve.front().age, 70.0);
    EXPECT_NEAR(at_mu.risk_curve.front().risk, 1.0 - 0.95, 1e-12);
    for (const auto& p : at_mu.risk_curve) {
        EXPECT_LE(p.lower, p.risk);
        EXPECT_GE(p.upper, p.risk);
    }
}

TEST(Phs, PercentileIsInclusiveCount) {
    auto m = tiny_model();
    // 8 reference scores; brute-force count of scores <= raw
    for (double raw : {-1.0, -0.4, 0.0, 0.3, 0.31, 1.0, 2.0}) {
        int count = 0;
        for (double s : {-0.4, -0.2, 0.0, 0.3, 0.3, 0.5, 0.8, 1.0}) count += s <= raw;
        EXPECT_DOUBLE_EQ(phs::percentile(m, raw), 100.0 * count / 8.0) << raw;
    }
}

TEST(Phs, LinearityAndMonotonicityProperties) {
    const auto& m = phs::default_model();
    std::mt19937 rng(21);
    std::uniform_int_distribution<int> d01(0, 1);
    double prev_raw = -1e9, prev_pct = -1;
    std::vector<double> raws;
    for (int i = 0; i < 200; ++i) {
        std::map<std::string, int> d, d2;
        for (const auto& v : m.variants) {
            d[v.rsid] = d01(rng);
            d2[v.rsid] = 2 * d[v.rsid];
        }
        const double s = phs::compute(m, d, std::nullopt).raw_phs;
        EXPECT_NEAR(phs::compute(m, d2, std::nullopt).raw_phs, 2 * s, 1e-9);
        raws.push_back(s);
        auto r = phs::compute(m, d, 72.0);
        for (const auto& p : r.risk_curve) {
            EXPECT_GE(p.lower, 0.0);
            EXPECT_LE(p.upper, 1.0);
        }
    }
    std::sort(raws.begin(), raws.end());
    for (double raw : raws) {
        const double pct = phs::percentile(m, raw);
        EXPECT_GE(raw, prev_raw);
        EXPECT_GE(pct, prev_pct);
        prev_raw = raw;
        prev_pct = pct;
    }
}

TEST(Phs, MissingVariantsAndErrors) {
    auto m = tiny_model();
    auto r = phs::compute(m, {{"a", 1}}, std::nullopt);
    EXPECT_EQ(r.missing_variants, (std::vector<std::string>{"b"}));
    EXPECT_EQ(r.variants_used, 1);
    EXPECT_EQ(code_of([&] { phs::compute(m, {{"zzz", 1}}, std::nullopt); }), ErrorCode::NoUsableGenotypes);
    EXPECT_EQ(code_of([] { phs::parse_model(json::parse(R"({"variants":[],"mu":0})")); }), ErrorCode::ModelFileInvalid);
    EXPECT_EQ(code_of([] {
                  phs::parse_model(json::parse(
                      R"({"variants":[{"rsid":"a","beta":1}],"mu":0,"reference_scores":[0],"baseline_survival":[{"age":60,"s0":1.5}]})"));
              }),
              ErrorCode::ModelFileInvalid);
}

TEST(Phs, ApoeStringDosages) {
    EXPECT_EQ(phs::apoe_dosages("3/4"), (std::map<std::string, int>{{"rs429358", 1}, {"rs7412", 0}}));
    EXPECT_EQ(phs::apoe_dosages("2/2"), (std::map<std::string, int>{{"rs429358", 0}, {"rs7412", 2}}));
    EXPECT_EQ(phs::apoe_dosages("3/3"), (std::map<std::string, int>{{"rs429358", 0}, {"rs7412", 0}}));
}

TEST(Phs, ToolFromVcfSurfacesApoeAmbiguity) {
    auto reg = make_default_registry();
    auto out = execute_action(reg, make_action(kPhsCalculator, {{"vcf_path", fx("double_het.vcf")}, {"age", 74}}), {}, scratch());
    ASSERT_EQ(out.status, OutcomeStatus::ok) << out.diagnostics;
    EXPECT_EQ(out.payload["apoe_inferred"]["genotype"], "2/4");
    EXPECT_EQ(out.payload["apoe_inferred"]["ambiguous"], true);
    EXPECT_EQ(out.payload["synthetic_model"], true);
    // rs3851179 is "./." in the file: disclosed as missing, not imputed
    auto missing = out.payload["missing_variants"].get<std::vector<std::string>>();
    EXPECT_NE(std::find(missing.begin(), missing.end(), "rs3851179"), missing.end());
    EXPECT_FALSE(out.payload["risk_curve"].empty());
}

TEST(Phs, ToolRequiresAGenotypeSource) {
    auto reg = make_default_registry();
    auto out = execute_action(reg, make_action(kPhsCalculator, {{"age", 70}}), {}, scratch());
    EXPECT_EQ(out.status, OutcomeStatus::failed);
    EXPECT_NE(out.diagnostics.find("missing required input"), std::string::npos);
}

// ---------------------------------------------------------------- MRI predictor

TEST(MriPredictor, StubContract) {
    auto reg = make_default_registry();
    auto out = execute_action(
        reg, make_action(kMriPredictor, {{"image_path", fx("mni152_t1.nii.gz")}, {"age", 70}, {"future_years", 5.0}}), {}, scratch());
    ASSERT_EQ(out.status, OutcomeStatus::ok) << out.diagnostics;
    EXPECT_EQ(out.payload["model_id"], "stub");
    EXPECT_DOUBLE_EQ(out.payload["horizon_years"].get<double>(), 5.0);
    EXPECT_EQ(code_of([] {
                  make_stub_mri_predictor()->run({{"image_path", fx("mni152_t1.nii.gz")}, {"age", 70}, {"future_years", 0}}, {});
              }),
              ErrorCode::BadParameters);
}

TEST(MriPredictor, ExternalBackendValidatesItsOutput) {
    json params = {{"image_path", fx("mni152_t1.nii.gz")}, {"age", 70}, {"future_years", 1.5}};
    auto bad = make_external_mri_predictor({{fx("fake_predictor_2d.sh"), "{input}", "{output_dir}"}, "predicted.nii.gz"});
    EXPECT_EQ(code_of([&] { bad->run(params, scratch()); }), ErrorCode::InvalidPredictedImage);
    auto good = make_external_mri_predictor(
        {{fx("fake_predictor.sh"), "{input}", "{output_dir}", "{age}", "{future_years}"}, "predicted.nii.gz"});
    auto payload = good->run(params, scratch());
    EXPECT_EQ(payload["model_id"], "external");
    EXPECT_DOUBLE_EQ(payload["horizon_years"].get<double>(), 1.5);
}
