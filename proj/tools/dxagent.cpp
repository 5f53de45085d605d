// dxagent: command-line front end for single cases, batch evaluation,
// the evaluation statistics and the HTTP service.

#include <csignal>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dxagent/core/util.hpp"
#include "dxagent/eval/cost_table.hpp"
#include "dxagent/eval/metrics.hpp"
#include "dxagent/eval/reader_study.hpp"
#include "dxagent/eval/tables.hpp"
#include "dxagent/service/config.hpp"
#include "dxagent/service/http_api.hpp"
#include "dxagent/service/report_export.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dxagent;

namespace {

struct RuntimeFlags {
    std::optional<fs::path> config;
    std::optional<std::string> provider;
    std::optional<fs::path> mock_script;
    std::optional<fs::path> data_dir;

    void attach(CLI::App* app) {
        app->add_option("--config", config, "service config file (JSON)")->check(CLI::ExistingFile);
        app->add_option("--provider", provider, "'mock' or a provider id from the config's llm section");
        app->add_option("--mock-script", mock_script, "scripted replies for the mock provider")->check(CLI::ExistingFile);
        app->add_option("--data-dir", data_dir, "session storage directory");
    }

    service::ServiceConfig load() const {
        auto cfg = service::load_service_config(config);
        if (data_dir) cfg.data_dir = *data_dir;
        if (mock_script) cfg.mock_script = *mock_script;
        if (provider) {
            if (*provider == "mock") {
                cfg.provider = "mock";
            } else {
                // a named provider routes both roles through it
                cfg.provider = "config";
                for (const char* role : {"reasoning_engine", "aggregator"})
                    cfg.llm["roles"][role]["provider_id"] = *provider;
            }
        }
        return cfg;
    }
};

// "scan.nii.gz" -> "scan.volumes.json" in the same directory
fs::path sidecar_for(const fs::path& mri) {
    std::string name = mri.filename().string();
    for (const char* ext : {".nii.gz", ".nii"})
        if (name.size() > std::strlen(ext) && name.ends_with(ext)) {
            name.resize(name.size() - std::strlen(ext));
            break;
        }
    return mri.parent_path() / (name + ".volumes.json");
}

void add_upload(service::CaseRequest& req, const std::string& kind, const fs::path& path) {
    req.uploads.push_back({kind, path.filename().string(), read_text_file(path)});
}

// File references in a record become uploads; the stored copies replace them.
service::CaseRequest request_for(PatientRecord record, std::optional<fs::path> mri, std::optional<fs::path> vcf,
                                 std::optional<fs::path> volumes, const fs::path& base) {
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
    if (!mri && record.mri_ref) mri = resolve(*record.mri_ref);
    if (!vcf && record.vcf_ref) vcf = resolve(*record.vcf_ref);
    record.mri_ref.reset();
    record.vcf_ref.reset();
    service::CaseRequest req;
    req.record = std::move(record);
    if (mri) {
        add_upload(req, "mri", *mri);
        if (!volumes && fs::exists(sidecar_for(*mri))) volumes = sidecar_for(*mri);
    }
    if (volumes) add_upload(req, "mri_volumes", *volumes);
    if (vcf) add_upload(req, "vcf", *vcf);
    return req;
}

std::string print_validation(const service::ValidationError& e) {
    std::string out = e.what();
    for (const auto& v : e.report().violations) out += "\n  " + json(v).dump();
    return out;
}

void write_output(const std::optional<fs::path>& path, const std::string& text) {
    if (!path) {
        std::cout << text;
        if (!text.empty() && text.back() != '\n') std::cout << '\n';
        return;
    }
    if (path->has_parent_path()) fs::create_directories(path->parent_path());
    write_file_atomic(*path, text);
}

// ---------------------------------------------------------------------------

struct RunCmd {
    RuntimeFlags rt;
    fs::path case_file;
    std::optional<fs::path> mri, vcf, volumes, out;
    std::string format = "json";

    void attach(CLI::App& root) {
        auto* app = root.add_subcommand("run", "run one case through the pipeline");
        app->add_option("--case", case_file, "patient record (JSON)")->required()->check(CLI::ExistingFile);
        app->add_option("--mri", mri, "structural MRI (.nii / .nii.gz)")->check(CLI::ExistingFile);
        app->add_option("--vcf", vcf, "genotype file (.vcf / .vcf.gz)")->check(CLI::ExistingFile);
        app->add_option("--mri-volumes", volumes,
                        "volume sidecar for the fixture imaging backend (default: <scan>.volumes.json if present)")
            ->check(CLI::ExistingFile);
        app->add_option("--format", format, "json | markdown");
        app->add_option("--out", out, "write the report here instead of stdout");
        rt.attach(app);
        app->callback([this] { exit_code = execute(); });
    }

    int execute() {
        auto cfg = rt.load();
        if (!rt.data_dir && !rt.config && !service::process_env("DXAGENT_DATA_DIR"))
            cfg.data_dir = fs::temp_directory_path() / "dxagent-cli";
        const auto fmt = service::parse_export_format(format);
        auto runtime = service::build_runtime(cfg);
        auto req = request_for(parse_patient_record(read_text_file(case_file)), mri, vcf, volumes,
                               case_file.parent_path());
        const std::string id = runtime.engine->create_case_session(std::move(req));
        const auto status = runtime.engine->advance_pipeline(id);
        auto session = runtime.store->get(id);
        for (const auto& e : session->events) std::cerr << json(e).dump() << '\n';
        std::cerr << "session " << id << " " << service::to_string(status) << " (" << cfg.data_dir.string() << ")\n";
        if (!session->current_report()) return 1;
        write_output(out, runtime.engine->export_report(id, fmt));
        return status == service::CaseStatus::done ? 0 : 1;
    }

    int exit_code = 0;
};

struct EvalCmd {
    RuntimeFlags rt;
    fs::path cohort;
    std::optional<fs::path> out, predictions_out;
    int resamples = eval::kDefaultResamples;
    std::uint64_t seed = 0;
    std::vector<std::string> classes;

    void attach(CLI::App& root) {
        auto* app = root.add_subcommand("eval", "score a cohort; record lines are run through the pipeline first");
        app->add_option("--cohort", cohort,
                        "JSONL: prediction lines {truth, predicted, race?, age?} or patient records with a label")
            ->required()
            ->check(CLI::ExistingFile);
        app->add_option("--out", out, "metrics JSON (default stdout)");
        app->add_option("--predictions-out", predictions_out, "write the scored predictions as JSONL");
        app->add_option("--bootstrap", resamples, "bootstrap resamples, 0 disables")->check(CLI::NonNegativeNumber);
        app->add_option("--seed", seed, "bootstrap seed");
        app->add_option("--classes", classes, "class set, e.g. CN AD for a two-class cohort")->delimiter(',');
        rt.attach(app);
        app->callback([this] { exit_code = execute(); });
    }

    std::vector<eval::LabeledPrediction> collect() {
        std::vector<eval::LabeledPrediction> preds;
        std::optional<service::Runtime> runtime;
        std::size_t line_no = 0;
        for (const auto& line : split(read_text_file(cohort), '\n')) {
            ++line_no;
            if (trim(line).empty()) continue;
            const json j = json::parse(line, nullptr, false);
            if (!j.is_object()) fail(ErrorCode::InvalidRecord, "line " + std::to_string(line_no) + ": not a JSON object");
            if (j.contains("predicted")) {
                preds.push_back(j.get<eval::LabeledPrediction>());
                continue;
            }
            auto record = j.get<PatientRecord>();
            if (!record.label)
                fail(ErrorCode::InvalidRecord, "line " + std::to_string(line_no) + ": record has no label to score against");
            if (!runtime) {
                auto cfg = rt.load();
                if (!rt.data_dir && !rt.config) cfg.data_dir = fs::temp_directory_path() / "dxagent-eval";
                runtime = service::build_runtime(cfg);
            }
            eval::LabeledPrediction p;
            p.case_id = record.case_id;
            p.truth = *record.label;
            p.cohort = j.value("cohort", "");
            if (j.contains("race") && j["race"].is_string()) p.subgroup_keys["race"] = j["race"];
            if (record.age) p.subgroup_keys["age_bin"] = eval::age_bin(*record.age);
            record.label.reset();
            const std::string id = runtime->engine->create_case_session(
                request_for(record, std::nullopt, std::nullopt, std::nullopt, cohort.parent_path()));
            runtime->engine->advance_pipeline(id);
            const auto* report = runtime->store->get(id)->current_report();
            if (!report) fail(ErrorCode::StorageFailure, "case " + p.case_id + " finished without a report");
            p.predicted = report->report.diagnosis;
            preds.push_back(p);
        }
        return preds;
    }

    int execute() {
        auto preds = collect();
        std::vector<StagingLabel> class_set;
        for (const auto& c : classes) class_set.push_back(normalize_label(c));
        if (class_set.empty()) class_set.assign(std::begin(kAllLabels), std::end(kAllLabels));

        auto scored = [&](const std::vector<eval::LabeledPrediction>& set, std::uint64_t s) {
            auto m = eval::compute_metrics(set, class_set);
            if (resamples > 0)
                for (auto metric : eval::kAllMetrics) {
                    auto b = eval::bootstrap(set, metric, resamples, s, class_set);
                    m.ci[metric] = b.ci;
                    m.standard_error[metric] = b.standard_error;
                }
            return m;
        };

        json result{{"n", preds.size()}, {"bootstrap", {{"resamples", resamples}, {"seed", seed}}}};
        std::vector<eval::MetricsRow> rows;
        auto overall = scored(preds, seed);
        result["overall"] = overall;
        std::map<std::string, std::vector<eval::LabeledPrediction>> by_cohort;
        for (const auto& p : preds)
            if (!p.cohort.empty()) by_cohort[p.cohort].push_back(p);
        if (by_cohort.size() > 1) {
            for (const auto& [name, set] : by_cohort) {
                auto m = scored(set, seed);
                result["cohorts"][name] = m;
                rows.push_back({name, "dxagent", std::move(m)});
            }
        }
        rows.push_back({by_cohort.size() == 1 ? by_cohort.begin()->first : "all", "dxagent", overall});

        if (predictions_out) {
            std::string text;
            for (const auto& p : preds) text += json(p).dump() + "\n";
            write_output(predictions_out, text);
        }
        write_output(out, result.dump(2));
        if (out) std::cout << eval::metrics_markdown(rows);
        return 0;
    }

    int exit_code = 0;
};

struct FairnessCmd {
    fs::path predictions;
    std::string axis = "race";
    std::vector<std::string> metrics{"micro_accuracy"};
    std::optional<fs::path> out;

    void attach(CLI::App& root) {
        auto* app = root.add_subcommand("fairness", "subgroup metrics with std and max-min gap");
        app->add_option("--predictions", predictions, "prediction JSONL")->required()->check(CLI::ExistingFile);
        app->add_option("--by", axis, "race | age")->check(CLI::IsMember({"race", "age", "age_bin"}));
        app->add_option("--metric", metrics, "metric names, or 'all'")->delimiter(',');
        app->add_option("--out", out, "JSON output (default stdout)");
        app->callback([this] { exit_code = execute(); });
    }

    int execute() {
        const auto preds = eval::load_predictions_jsonl(read_text_file(predictions));
        const std::string key = axis == "race" ? "race" : "age_bin";
        std::vector<eval::Metric> chosen;
        for (const auto& m : metrics) {
            if (m == "all") {
                chosen.assign(std::begin(eval::kAllMetrics), std::end(eval::kAllMetrics));
                break;
            }
            chosen.push_back(eval::parse_metric(m));
        }
        json result = json::array();
        for (auto m : chosen) result.push_back(eval::fairness_dispersion(preds, key, m));
        write_output(out, result.dump(2));
        return 0;
    }

    int exit_code = 0;
};

struct ReaderCmd {
    fs::path records;
    std::optional<fs::path> out;

    void attach(CLI::App& root) {
        auto* app = root.add_subcommand("reader-study", "unaided vs assisted reader statistics");
        app->add_option("--records", records, std::string("CSV with header ") + std::string(eval::kReaderCsvHeader))
            ->required()
            ->check(CLI::ExistingFile);
        app->add_option("--out", out, "JSON output; the markdown tables go to stdout");
        app->callback([this] { exit_code = execute(); });
    }

    int execute() {
        const auto groups = eval::reader_study_stats(eval::load_reader_csv(read_text_file(records)));
        if (out) write_output(out, json(groups).dump(2));
        std::cout << eval::reader_performance_markdown(groups) << '\n' << eval::reader_time_markdown(groups);
        return 0;
    }

    int exit_code = 0;
};

struct CostCmd {
    fs::path rows;
    long n_cases = 0;
    std::optional<fs::path> out, plot_csv;

    void attach(CLI::App& root) {
        auto* app = root.add_subcommand("cost", "backbone cost table checks and Pareto frontier");
        app->add_option("--rows", rows, "cost CSV")->required()->check(CLI::ExistingFile);
        app->add_option("--n-cases", n_cases, "cases behind the overall cost")->required()->check(CLI::PositiveNumber);
        app->add_option("--out", out, "JSON report");
        app->add_option("--plot-csv", plot_csv, "model,overall_cost,accuracy,on_frontier");
        app->callback([this] { exit_code = execute(); });
    }

    int execute() {
        const auto report = eval::cost_effectiveness(eval::load_cost_csv(read_text_file(rows)), n_cases);
        std::vector<eval::CostPoint> pts;
        for (const auto& r : report.rows) pts.push_back({r.model, r.overall_cost, r.accuracy});
        const auto frontier = eval::pareto_frontier(pts);
        json j = report;
        j["frontier"] = json::array();
        for (const auto& p : frontier) j["frontier"].push_back(p.label);
        j["dominated"] = json::array();
        for (const auto& p : pts)
            if (std::find(frontier.begin(), frontier.end(), p) == frontier.end()) j["dominated"].push_back(p.label);
        if (out) write_output(out, j.dump(2));
        if (plot_csv) write_output(plot_csv, eval::cost_plot_csv(report));
        std::cout << eval::cost_markdown(report) << "\nfrontier: " << j["frontier"].dump()
                  << "\ndominated: " << j["dominated"].dump() << '\n';
        const auto bad = report.inconsistencies();
        for (const auto& c : bad) std::cout << "inconsistent: " << json(c).dump() << '\n';
        return bad.empty() ? 0 : 2;
    }

    int exit_code = 0;
};

service::HttpApi* g_api = nullptr;

extern "C" void on_signal(int) {
    if (g_api) g_api->stop();
}

struct ServeCmd {
    RuntimeFlags rt;
    std::optional<int> port;
    std::optional<std::string> host;
    std::optional<fs::path> static_dir;

    void attach(CLI::App& root) {
        auto* app = root.add_subcommand("serve", "run the HTTP API");
        app->add_option("--port", port, "listen port");
        app->add_option("--host", host, "listen address");
        app->add_option("--static-dir", static_dir, "web bundle served at /")->check(CLI::ExistingDirectory);
        rt.attach(app);
        app->callback([this] { exit_code = execute(); });
    }

    int execute() {
        auto cfg = rt.load();
        if (port) cfg.port = *port;
        if (host) cfg.host = *host;
        if (static_dir) cfg.static_dir = *static_dir;
        auto runtime = service::build_runtime(cfg);
        service::HttpOptions opts;
        opts.static_dir = cfg.static_dir;
        service::HttpApi api(runtime.engine, opts);
        g_api = &api;
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        std::cerr << "dxagent listening on http://" << cfg.host << ":" << cfg.port << " (data " << cfg.data_dir.string()
                  << ", provider " << cfg.provider << ")\n";
        const bool ok = api.listen(cfg.host, cfg.port);
        g_api = nullptr;
        runtime.engine->wait_idle();
        if (!ok) std::cerr << "could not bind " << cfg.host << ":" << cfg.port << '\n';
        return ok ? 0 : 1;
    }

    int exit_code = 0;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dxagent: staged diagnostic agent and evaluation tools"};
    app.require_subcommand(1);
    RunCmd run;
    EvalCmd ev;
    FairnessCmd fair;
    ReaderCmd reader;
    CostCmd cost;
    ServeCmd serve;
    run.attach(app);
    ev.attach(app);
    fair.attach(app);
    reader.attach(app);
    cost.attach(app);
    serve.attach(app);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const service::ValidationError& e) {
        std::cerr << print_validation(e) << '\n';
        return 3;
    } catch (const Error& e) {
        std::cerr << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    for (int code : {run.exit_code, ev.exit_code, fair.exit_code, reader.exit_code, cost.exit_code, serve.exit_code})
        if (code != 0) return code;
    return 0;
}
