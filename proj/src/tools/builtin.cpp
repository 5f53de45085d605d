#include "dxagent/tools/builtin.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <unistd.h>

#include "dxagent/core/error.hpp"
#include "dxagent/core/util.hpp"
#include "dxagent/parsers/apoe.hpp"
#include "dxagent/parsers/nifti.hpp"
#include "dxagent/parsers/vcf.hpp"
#include "dxagent/tools/process.hpp"

namespace dxagent::tools {

using nlohmann::json;
namespace fs = std::filesystem;

std::string tool_name(VolumeKind kind) {
    switch (kind) {
        case VolumeKind::brain_volume: return kBrainVolume;
        case VolumeKind::hippocampus: return kHippocampus;
        case VolumeKind::grey_matter: return kGreyMatter;
        case VolumeKind::white_matter: return kWhiteMatter;
    }
    return kHippocampus;
}

std::string_view sidecar_key(VolumeKind kind) {
    switch (kind) {
        case VolumeKind::brain_volume: return "brain_volume";
        case VolumeKind::hippocampus: return "hippocampus";
        case VolumeKind::grey_matter: return "grey_matter";
        case VolumeKind::white_matter: return "white_matter";
    }
    return "hippocampus";
}

const std::vector<std::string>& measure_names(VolumeKind kind) {
    static const std::vector<std::string> brain{"total_brain", "icv"}, hippo{"left", "right", "total"}, gm{"total_gm"},
        wm{"total_wm"};
    switch (kind) {
        case VolumeKind::brain_volume: return brain;
        case VolumeKind::hippocampus: return hippo;
        case VolumeKind::grey_matter: return gm;
        case VolumeKind::white_matter: return wm;
    }
    return hippo;
}

json to_payload(const VolumeResult& r) {
    json measures = json::object();
    for (const auto& [k, v] : r.mm3) measures[k] = v;
    return json{{"measures", measures}, {"unit", "mm3"}, {"source_unit", to_string(r.source_unit)}, {"notices", r.notices}};
}

fs::path sidecar_path(const fs::path& image) {
    std::string name = image.filename().string();
    for (const char* ext : {".nii.gz", ".nii", ".hdr", ".img", ".gz"}) {
        const std::string e = ext;
        if (name.size() > e.size() && name.compare(name.size() - e.size(), e.size(), e) == 0) {
            name.resize(name.size() - e.size());
            break;
        }
    }
    return image.parent_path() / (name + ".volumes.json");
}

namespace {

// Removes binary-float noise such as 3100.0000000000005 after mL -> mm3.
double tidy(double v) { return std::round(v * 1e6) / 1e6; }

void finalize(VolumeResult& r) {
    const auto& names = measure_names(r.kind);
    if (r.kind == VolumeKind::hippocampus && r.mm3.count("left") && r.mm3.count("right")) {
        const double sum = r.mm3["left"] + r.mm3["right"];
        if (!r.mm3.count("total")) r.mm3["total"] = tidy(sum);
        else if (std::abs(r.mm3["total"] - sum) > 1.0)
            fail(ErrorCode::UnparseableOutput, "hippocampus total differs from left + right by more than 1 mm3");
    }
    for (const auto& n : names) {
        auto it = r.mm3.find(n);
        if (it == r.mm3.end()) fail(ErrorCode::UnparseableOutput, "missing measure '" + n + "'");
        if (!(it->second > 0.0)) fail(ErrorCode::UnparseableOutput, "measure '" + n + "' must be > 0");
    }
    for (auto it = r.mm3.begin(); it != r.mm3.end();) {
        if (std::find(names.begin(), names.end(), it->first) == names.end()) it = r.mm3.erase(it);
        else ++it;
    }
}

fs::path fresh_output_dir(const ToolContext& ctx, const std::string& tool) {
    static std::atomic<std::uint64_t> counter{0};
    fs::path base = ctx.work_dir.empty() ? fs::temp_directory_path() / "dxagent" : ctx.work_dir;
    fs::path dir = base / (tool + "-" + std::to_string(::getpid()) + "-" + std::to_string(now_ms()) + "-" +
                           std::to_string(counter.fetch_add(1)));
    fs::create_directories(dir);
    return dir;
}

std::string fmt_number(double v) {
    std::ostringstream s;
    s << v;
    return s.str();
}

}  // namespace

VolumeResult read_volume_sidecar(VolumeKind kind, const fs::path& image) {
    const fs::path path = sidecar_path(image);
    if (!fs::exists(path)) fail(ErrorCode::MissingSidecar, "no volume sidecar at " + path.string());
    json j = json::parse(read_text_file(path), nullptr, false);
    if (j.is_discarded() || !j.is_object()) fail(ErrorCode::UnparseableOutput, "sidecar is not a JSON object: " + path.string());
    VolumeResult r;
    r.kind = kind;
    try {
        r.source_unit = parse_volume_unit(j.value("unit", "mL"));
        const std::string key(sidecar_key(kind));
        if (!j.contains(key)) fail(ErrorCode::UnparseableOutput, "sidecar has no '" + key + "' section");
        for (const auto& [name, v] : j[key].items()) {
            if (!v.is_number()) fail(ErrorCode::UnparseableOutput, "measure '" + name + "' is not a number");
            const double value = v.get<double>();
            if (value < 0) fail(ErrorCode::UnparseableOutput, "measure '" + name + "' is negative");
            r.mm3[name] = tidy(convert_volume(value, r.source_unit, VolumeUnit::mm3));
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::UnparseableOutput, std::string("sidecar: ") + e.what());
    }
    finalize(r);
    return r;
}

VolumeResult parse_volume_result(VolumeKind kind, const std::string& text) {
    VolumeResult r;
    r.kind = kind;
    std::istringstream in(text);
    std::string line;
    std::optional<VolumeUnit> seen_unit;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        std::istringstream ls{std::string(t)};
        std::string key, unit, extra;
        double value = 0;
        if (!(ls >> key >> value >> unit) || (ls >> extra))
            fail(ErrorCode::UnparseableOutput, "line " + std::to_string(n) + ": expected 'key value unit'");
        if (value < 0) fail(ErrorCode::UnparseableOutput, "line " + std::to_string(n) + ": negative volume");
        VolumeUnit u;
        try {
            u = parse_volume_unit(unit);
        } catch (const Error&) {
            fail(ErrorCode::UnparseableOutput, "line " + std::to_string(n) + ": unknown unit '" + unit + "'");
        }
        if (!seen_unit) seen_unit = u;
        r.mm3[key] = tidy(convert_volume(value, u, VolumeUnit::mm3));
    }
    r.source_unit = seen_unit.value_or(VolumeUnit::mm3);
    finalize(r);
    return r;
}

std::vector<std::string> check_input_image(const fs::path& image, bool waive) {
    nifti::Header h;
    try {
        h = nifti::read_header(image);
    } catch (const Error& e) {
        fail(ErrorCode::InvalidImage, image.string() + ": " + e.what());
    }
    auto rep = nifti::validate_preprocessed_mri(h);
    std::vector<std::string> notices = rep.notices;
    if (!rep.ok()) {
        if (!waive) fail(ErrorCode::InvalidImage, image.filename().string() + ": " + rep.violations.front().message);
        for (const auto& v : rep.violations) notices.push_back("waived: " + v.message);
    }
    return notices;
}

ExternalCommand parse_external_command(const json& j, const std::string& default_result_file) {
    ExternalCommand c;
    try {
        c.argv = j.at("command").get<std::vector<std::string>>();
        c.result_file = j.value("result_file", default_result_file);
        c.timeout = std::chrono::milliseconds(j.value("timeout_ms", 30 * 60 * 1000));
    } catch (const json::exception& e) {
        fail(ErrorCode::ConfigInvalid, std::string("external command: ") + e.what());
    }
    if (c.argv.empty()) fail(ErrorCode::ConfigInvalid, "external command is empty");
    return c;
}

// ---------------------------------------------------------------- backends

namespace {

class FixtureVolumeBackend : public ToolBackend {
public:
    explicit FixtureVolumeBackend(VolumeKind kind) : kind_(kind) {}
    json run(const json& p, const ToolContext&) override {
        const fs::path image = p.at("image_path").get<std::string>();
        auto notices = check_input_image(image, p.value("waive_validation", false));
        auto r = read_volume_sidecar(kind_, image);
        r.notices = std::move(notices);
        return to_payload(r);
    }

private:
    VolumeKind kind_;
};

class ExternalVolumeBackend : public ToolBackend {
public:
    ExternalVolumeBackend(VolumeKind kind, ExternalCommand cmd) : kind_(kind), cmd_(std::move(cmd)) {}
    json run(const json& p, const ToolContext& ctx) override {
        const fs::path image = p.at("image_path").get<std::string>();
        auto notices = check_input_image(image, p.value("waive_validation", false));
        const fs::path out = fresh_output_dir(ctx, tool_name(kind_));
        auto argv = render_command(cmd_.argv, {{"input", image.string()}, {"output_dir", out.string()}});
        auto res = run_process(argv, out / "backend.log", cmd_.timeout);
        if (res.timed_out) fail(ErrorCode::BackendProcessFailed, argv[0] + " timed out");
        if (res.exit_code != 0)
            fail(ErrorCode::BackendProcessFailed, argv[0] + " exited with " + std::to_string(res.exit_code) + ": " + res.log);
        const fs::path result = out / cmd_.result_file;
        if (!fs::exists(result)) fail(ErrorCode::UnparseableOutput, "backend wrote no " + cmd_.result_file);
        auto r = parse_volume_result(kind_, read_text_file(result));
        r.notices = std::move(notices);
        return to_payload(r);
    }

private:
    VolumeKind kind_;
    ExternalCommand cmd_;
};

class PhsBackend : public ToolBackend {
public:
    explicit PhsBackend(std::shared_ptr<const phs::Model> model) : model_(std::move(model)) {}
    json run(const json& p, const ToolContext&) override {
        std::map<std::string, int> dosages;
        json sources = json::array(), notes = json::array();
        json apoe_inferred;
        if (p.contains("vcf_path")) {
            std::vector<vcf::WantedVariant> wanted;
            for (const auto& v : model_->variants) wanted.push_back({v.rsid, v.chrom, v.pos});
            auto table = vcf::read_genotypes(p["vcf_path"].get<std::string>(), wanted);
            for (const auto& [rsid, call] : table.calls)
                if (call.dosage) dosages[rsid] = *call.dosage;
            for (const auto& issue : table.issues) notes.push_back(issue.key + ": " + issue.message);
            if (table.calls.count(apoe::kRs429358) && table.calls.count(apoe::kRs7412)) {
                try {
                    auto inf = apoe::infer(table.calls.at(apoe::kRs429358), table.calls.at(apoe::kRs7412));
                    apoe_inferred = {{"genotype", inf.genotype}, {"ambiguous", inf.ambiguous}};
                } catch (const Error& e) {
                    notes.push_back(std::string("apoe inference: ") + e.what());
                }
            }
            sources.push_back("vcf");
        }
        if (p.contains("genotypes")) {
            for (const auto& [rsid, d] : p["genotypes"].items()) dosages[rsid] = d.get<int>();
            sources.push_back("genotypes");
        }
        if (p.contains("apoe_genotype")) {
            for (const auto& [rsid, d] : phs::apoe_dosages(p["apoe_genotype"].get<std::string>()))
                dosages.emplace(rsid, d);  // explicit calls take precedence
            sources.push_back("apoe_genotype");
        }
        std::optional<double> age;
        if (p.contains("age")) age = p["age"].get<double>();
        auto result = phs::compute(*model_, dosages, age);
        json out = phs::to_payload(result);
        out["sources"] = sources;
        out["notes"] = notes;
        out["model_version"] = model_->version;
        out["synthetic_model"] = model_->synthetic;
        if (!apoe_inferred.is_null()) out["apoe_inferred"] = apoe_inferred;
        return out;
    }

private:
    std::shared_ptr<const phs::Model> model_;
};

void check_prediction_inputs(const json& p) {
    if (!(p.at("age").get<double>() > 0)) fail(ErrorCode::BadParameters, "age must be > 0");
    if (!(p.at("future_years").get<double>() > 0)) fail(ErrorCode::BadParameters, "future_years must be > 0");
}

class StubMriPredictor : public ToolBackend {
public:
    json run(const json& p, const ToolContext&) override {
        check_prediction_inputs(p);
        const std::string image = p.at("image_path").get<std::string>();
        check_input_image(image, p.value("waive_validation", false));
        return json{{"predicted_image_ref", image},
                    {"horizon_years", p["future_years"].get<double>()},
                    {"model_id", "stub"},
                    {"note", "stub backend: no forecast was computed; the reference is the input scan"}};
    }
};

class ExternalMriPredictor : public ToolBackend {
public:
    explicit ExternalMriPredictor(ExternalCommand cmd, std::string model_id) : cmd_(std::move(cmd)), model_id_(std::move(model_id)) {}
    json run(const json& p, const ToolContext& ctx) override {
        check_prediction_inputs(p);
        const std::string image = p.at("image_path").get<std::string>();
        check_input_image(image, p.value("waive_validation", false));
        const fs::path out = fresh_output_dir(ctx, kMriPredictor);
        auto argv = render_command(cmd_.argv, {{"input", image},
                                               {"output_dir", out.string()},
                                               {"age", fmt_number(p["age"].get<double>())},
                                               {"future_years", fmt_number(p["future_years"].get<double>())}});
        auto res = run_process(argv, out / "backend.log", cmd_.timeout);
        if (res.timed_out) fail(ErrorCode::BackendProcessFailed, argv[0] + " timed out");
        if (res.exit_code != 0)
            fail(ErrorCode::BackendProcessFailed, argv[0] + " exited with " + std::to_string(res.exit_code) + ": " + res.log);
        const fs::path predicted = out / cmd_.result_file;
        nifti::Header h;
        try {
            h = nifti::read_header(predicted);
        } catch (const Error& e) {
            fail(ErrorCode::InvalidPredictedImage, std::string("predicted image unreadable: ") + e.what());
        }
        auto rep = nifti::validate_preprocessed_mri(h);
        if (!rep.ok()) fail(ErrorCode::InvalidPredictedImage, "predicted image rejected: " + rep.violations.front().message);
        return json{{"predicted_image_ref", predicted.string()},
                    {"horizon_years", p["future_years"].get<double>()},
                    {"model_id", model_id_}};
    }

private:
    ExternalCommand cmd_;
    std::string model_id_;
};

}  // namespace

std::shared_ptr<ToolBackend> make_fixture_volume_backend(VolumeKind kind) { return std::make_shared<FixtureVolumeBackend>(kind); }

std::shared_ptr<ToolBackend> make_external_volume_backend(VolumeKind kind, ExternalCommand command) {
    return std::make_shared<ExternalVolumeBackend>(kind, std::move(command));
}

std::shared_ptr<ToolBackend> make_phs_backend(std::shared_ptr<const phs::Model> model) {
    return std::make_shared<PhsBackend>(std::move(model));
}

std::shared_ptr<ToolBackend> make_stub_mri_predictor() { return std::make_shared<StubMriPredictor>(); }

std::shared_ptr<ToolBackend> make_external_mri_predictor(ExternalCommand command) {
    return std::make_shared<ExternalMriPredictor>(std::move(command), "external");
}

// ---------------------------------------------------------------- specs

namespace {

json image_param() {
    return {{"type", "string"}, {"pattern", "\\S"}, {"description", "path to a preprocessed NIfTI scan"}};
}

}  // namespace

ToolSpec volume_spec(VolumeKind kind, BackendKind backend) {
    ToolSpec s;
    s.name = tool_name(kind);
    switch (kind) {
        case VolumeKind::brain_volume: s.purpose = "Whole-brain volume and intracranial volume (ICV)"; break;
        case VolumeKind::hippocampus: s.purpose = "Left, right and total hippocampal volumes"; break;
        case VolumeKind::grey_matter: s.purpose = "Total grey-matter volume"; break;
        case VolumeKind::white_matter: s.purpose = "Total white-matter volume"; break;
    }
    s.input_schema = {{"type", "object"},
                      {"required", {"image_path"}},
                      {"properties", {{"image_path", image_param()}, {"waive_validation", {{"type", "boolean"}}}}}};
    json measures = {{"type", "object"},
                     {"required", measure_names(kind)},
                     {"additionalProperties", {{"type", "number"}, {"exclusiveMinimum", 0}}}};
    s.output_schema = {{"type", "object"},
                       {"required", {"measures", "unit", "source_unit"}},
                       {"properties",
                        {{"measures", measures},
                         {"unit", {{"enum", {"mm3"}}}},
                         {"source_unit", {{"enum", {"mL", "mm3"}}}},
                         {"notices", {{"type", "array"}, {"items", {{"type", "string"}}}}}}}};
    s.parameter_space = {{"image_path", "preprocessed T1 scan, ideally on the 182x218x182 MNI152 grid"},
                         {"waive_validation", {{"default", false}}}};
    s.backend = backend;
    return s;
}

ToolSpec phs_spec() {
    ToolSpec s;
    s.name = kPhsCalculator;
    s.purpose = "Polygenic hazard score with percentile and, given age, age-specific risk with a confidence band";
    s.input_schema = {
        {"type", "object"},
        {"properties",
         {{"vcf_path", {{"type", "string"}, {"pattern", "\\S"}}},
          {"genotypes", {{"type", "object"}, {"additionalProperties", {{"type", "integer"}, {"minimum", 0}, {"maximum", 2}}}}},
          {"apoe_genotype", {{"type", "string"}, {"pattern", "^[234]/[234]$"}}},
          {"age", {{"type", "number"}, {"exclusiveMinimum", 0}}}}},
        {"anyOf", {{{"required", {"vcf_path"}}}, {{"required", {"genotypes"}}}, {{"required", {"apoe_genotype"}}}}}};
    json point = {{"type", "object"},
                  {"required", {"age", "risk", "lower", "upper"}},
                  {"properties",
                   {{"age", {{"type", "number"}}},
                    {"risk", {{"type", "number"}, {"minimum", 0}, {"maximum", 1}}},
                    {"lower", {{"type", "number"}, {"minimum", 0}, {"maximum", 1}}},
                    {"upper", {{"type", "number"}, {"minimum", 0}, {"maximum", 1}}}}}};
    s.output_schema = {{"type", "object"},
                       {"required", {"raw_phs", "percentile", "variants_used"}},
                       {"properties",
                        {{"raw_phs", {{"type", "number"}}},
                         {"percentile", {{"type", "number"}, {"minimum", 0}, {"maximum", 100}}},
                         {"hazard_ratio", {{"type", "number"}, {"exclusiveMinimum", 0}}},
                         {"variants_used", {{"type", "integer"}, {"minimum", 1}}},
                         {"risk_curve", {{"type", "array"}, {"items", point}}},
                         {"missing_variants", {{"type", "array"}, {"items", {{"type", "string"}}}}}}}};
    s.parameter_space = {{"genotype_sources", {"vcf_path", "genotypes", "apoe_genotype"}},
                         {"age", "optional, years; enables the risk curve"},
                         {"percentile_convention", "inclusive: 100 * #(reference <= raw) / N"},
                         {"missing_variants", "contribute 0, never imputed"}};
    s.backend = BackendKind::native;
    return s;
}

ToolSpec mri_predictor_spec(BackendKind backend) {
    ToolSpec s;
    s.name = kMriPredictor;
    s.purpose = "Forecast of a follow-up structural MRI at a future horizon";
    s.input_schema = {{"type", "object"},
                      {"required", {"image_path", "age", "future_years"}},
                      {"properties",
                       {{"image_path", image_param()},
                        {"age", {{"type", "number"}, {"exclusiveMinimum", 0}}},
                        {"future_years", {{"type", "number"}, {"exclusiveMinimum", 0}}},
                        {"waive_validation", {{"type", "boolean"}}}}}};
    s.output_schema = {{"type", "object"},
                       {"required", {"predicted_image_ref", "horizon_years", "model_id"}},
                       {"properties",
                        {{"predicted_image_ref", {{"type", "string"}}},
                         {"horizon_years", {{"type", "number"}, {"exclusiveMinimum", 0}}},
                         {"model_id", {{"type", "string"}}}}}};
    s.parameter_space = {{"future_years", {{"default", 5.0}}}};
    s.backend = backend;
    return s;
}

ToolRegistry make_default_registry(const json& config) {
    ToolRegistry reg;
    const json imaging = config.value("imaging", json::object());
    const auto imaging_kind = parse_backend_kind(imaging.value("backend", "fixture"));
    for (auto kind : kVolumeKinds) {
        std::shared_ptr<ToolBackend> backend;
        if (imaging_kind == BackendKind::fixture) {
            backend = make_fixture_volume_backend(kind);
        } else if (imaging_kind == BackendKind::external_process) {
            json cmd = imaging;
            if (imaging.contains("commands") && imaging["commands"].contains(tool_name(kind)))
                cmd["command"] = imaging["commands"][tool_name(kind)];
            backend = make_external_volume_backend(kind, parse_external_command(cmd, "volumes.txt"));
        } else {
            fail(ErrorCode::ConfigInvalid, "imaging backend must be fixture or external_process");
        }
        reg.register_tool(volume_spec(kind, imaging_kind), backend);
    }

    const json phs_cfg = config.value("phs", json::object());
    std::shared_ptr<const phs::Model> model = phs_cfg.contains("model_path")
                                                  ? std::make_shared<phs::Model>(phs::load_model(phs_cfg["model_path"].get<std::string>()))
                                                  : std::make_shared<phs::Model>(phs::default_model());
    reg.register_tool(phs_spec(), make_phs_backend(model));

    const json mri = config.value("mri_predictor", json::object());
    const auto mri_kind = parse_backend_kind(mri.value("backend", "stub"));
    if (mri_kind == BackendKind::stub) {
        reg.register_tool(mri_predictor_spec(mri_kind), make_stub_mri_predictor());
    } else if (mri_kind == BackendKind::external_process) {
        auto cmd = parse_external_command(mri, "predicted.nii.gz");
        reg.register_tool(mri_predictor_spec(mri_kind),
                          std::make_shared<ExternalMriPredictor>(cmd, mri.value("model_id", std::string("external"))));
    } else {
        fail(ErrorCode::ConfigInvalid, "mri_predictor backend must be stub or external_process");
    }
    return reg;
}

}  // namespace dxagent::tools
