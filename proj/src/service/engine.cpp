#include "dxagent/service/engine.hpp"

#include <algorithm>
#include <atomic>
#include <exception>

#include "dxagent/core/util.hpp"
#include "dxagent/parsers/nifti.hpp"
#include "dxagent/parsers/vcf.hpp"
#include "dxagent/service/report_export.hpp"

namespace dxagent::service {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string join_violations(const ValidationReport& r) {
    std::string out;
    for (const auto& v : r.violations) {
        if (!out.empty()) out += "; ";
        out += v.field + ": " + v.message;
    }
    return out;
}

std::string count_text(std::size_t n, std::string_view noun) {
    return std::to_string(n) + " " + std::string(noun) + (n == 1 ? "" : "s");
}

}  // namespace

ValidationError::ValidationError(ValidationReport report)
    : Error(ErrorCode::ValidationFailed, join_violations(report)), report_(std::move(report)) {}

ValidationReport validate_case_request(const CaseRequest& req) {
    ValidationReport out = validate_patient_record(req.record);
    bool has_mri = false, has_vcf = false;
    for (const auto& u : req.uploads) {
        if (u.kind == "mri") {
            has_mri = true;
            try {
                const auto header = nifti::parse_header(u.bytes);
                if (!header.single_file())
                    out.violations.push_back({"mri", "paired .hdr/.img uploads are not supported; send a .nii or .nii.gz"});
                auto rep = nifti::validate_preprocessed_mri(header);
                for (auto& v : rep.violations) out.violations.push_back({"mri." + v.field, v.message});
                for (auto& n : rep.notices) out.notices.push_back("mri: " + n);
            } catch (const Error& e) {
                out.violations.push_back({"mri", e.what()});
            }
        } else if (u.kind == "vcf") {
            has_vcf = true;
            if (!vcf::sniff(u.bytes)) out.violations.push_back({"vcf", "not a VCF file (missing ##fileformat=VCF)"});
        } else if (u.kind == "mri_volumes") {
            json j = json::parse(u.bytes, nullptr, false);
            if (!j.is_object()) out.violations.push_back({"mri_volumes", "volume sidecar must be a JSON object"});
        } else {
            out.violations.push_back({u.kind.empty() ? "upload" : u.kind, "unknown upload kind"});
        }
    }
    const auto count = [&](std::string_view kind) {
        return std::count_if(req.uploads.begin(), req.uploads.end(), [&](const auto& u) { return u.kind == kind; });
    };
    for (std::string_view kind : {"mri", "vcf", "mri_volumes"})
        if (count(kind) > 1) out.violations.push_back({std::string(kind), "at most one upload of this kind"});
    if (req.record.mri_ref && !has_mri) out.violations.push_back({"mri_ref", "imaging must be supplied as an upload"});
    if (req.record.vcf_ref && !has_vcf) out.violations.push_back({"vcf_ref", "genomic data must be supplied as an upload"});
    if (count("mri_volumes") && !has_mri) out.violations.push_back({"mri_volumes", "a volume sidecar needs an mri upload"});
    return out;
}

ExportFormat parse_export_format(std::string_view text) {
    const std::string t = to_lower(text);
    if (t == "json") return ExportFormat::json;
    if (t == "markdown" || t == "md") return ExportFormat::markdown;
    fail(ErrorCode::InvalidArgument, "format must be json or markdown");
}

std::string_view content_type(ExportFormat f) noexcept {
    return f == ExportFormat::json ? "application/json" : "text/markdown; charset=utf-8";
}

void to_json(json& j, const ChatResult& r) {
    j = json{{"reply", r.reply}, {"report_version", r.report_version}, {"revised", r.revised}};
    j["cross_check"] = r.cross_check ? json(*r.cross_check) : json(nullptr);
}

// ---------------------------------------------------------------- engine

Engine::Engine(std::shared_ptr<SessionStore> store, std::shared_ptr<const tools::ToolRegistry> registry,
               std::shared_ptr<llm::Gateway> gateway, EngineOptions options)
    : store_(std::move(store)), registry_(std::move(registry)), gateway_(std::move(gateway)), options_(std::move(options)) {
    if (!store_ || !registry_ || !gateway_) fail(ErrorCode::InvalidArgument, "engine needs a store, registry and gateway");
}

Engine::~Engine() {
    wait_idle();
    std::vector<Worker> workers;
    {
        std::lock_guard lock(running_mu_);
        workers.swap(workers_);
    }
    for (auto& w : workers) w.thread.join();
}

const guideline::ThresholdTable& Engine::thresholds() const {
    return options_.table ? *options_.table : guideline::default_threshold_table();
}

std::string Engine::create_case_session(CaseRequest request) {
    auto report = validate_case_request(request);
    if (!report.ok()) throw ValidationError(std::move(report));
    std::string query = request.record.doctor_prompt.value_or("");
    // Stored copies replace any client-side paths.
    request.record.mri_ref.reset();
    request.record.vcf_ref.reset();
    return store_->create(std::move(request.record), std::move(query), request.uploads)->session_id;
}

void Engine::claim(const std::string& id) {
    auto s = store_->get(id);  // SessionNotFound
    std::lock_guard lock(running_mu_);
    if (running_.count(id)) fail(ErrorCode::WrongState, "session " + id + " is already running");
    s = store_->get(id);
    if (is_terminal(s->status))
        fail(ErrorCode::WrongState, "session " + id + " is " + std::string(to_string(s->status)));
    running_.insert(id);
}

void Engine::release(const std::string& id) {
    {
        std::lock_guard lock(running_mu_);
        running_.erase(id);
    }
    idle_cv_.notify_all();
}

bool Engine::is_running(const std::string& id) const {
    std::lock_guard lock(running_mu_);
    return running_.count(id) > 0;
}

CaseStatus Engine::advance_pipeline(const std::string& id) {
    claim(id);
    struct Release {
        Engine& e;
        const std::string& id;
        ~Release() { e.release(id); }
    } guard{*this, id};
    return run(id);
}

void Engine::start_pipeline(const std::string& id) {
    claim(id);
    std::lock_guard lock(running_mu_);
    // Threads that have finished are joined here and in the destructor.
    for (auto it = workers_.begin(); it != workers_.end();) {
        if (*it->finished) {
            it->thread.join();
            it = workers_.erase(it);
        } else {
            ++it;
        }
    }
    auto finished = std::make_shared<std::atomic<bool>>(false);
    workers_.push_back({finished, std::thread([this, id, finished] {
                            try {
                                run(id);
                            } catch (...) {
                                // run() records failures in the event log itself
                            }
                            release(id);
                            *finished = true;
                        })});
}

void Engine::wait_idle() {
    std::unique_lock lock(running_mu_);
    idle_cv_.wait(lock, [&] { return running_.empty(); });
}

EventSink Engine::sink_for(const std::string& id) {
    return [this, id](std::string_view stage, EventKind kind, std::string detail) {
        store_->write(id, [&](SessionStore::Writer& w) { return w.event(stage, kind, std::move(detail)); });
    };
}

bool Engine::interrupted(std::string_view checkpoint) const {
    return options_.interrupt && options_.interrupt(checkpoint);
}

CaseStatus Engine::run(const std::string& id) {
    const auto sink = sink_for(id);
    const auto event = [&](std::string_view stage, EventKind kind, std::string detail) { sink(stage, kind, std::move(detail)); };
    try {
        auto s = store_->get(id);
        const bool resumed = s->status != CaseStatus::created;

        // 1-2. observation and planning
        if (!s->plan) {
            event(kPlanningStage, EventKind::started, resumed ? "resumed: planning again" : "observing record and planning");
            const auto bundle = planner::observe(s->query, s->record);
            auto result = planner::generate_plan(bundle, s->query, *registry_, *gateway_, id, options_.planner, sink);
            if (result.provenance == Provenance::guideline_fallback)
                event(kPlanningStage, EventKind::finished,
                      count_text(result.validation.resolved_actions.size(), "action") + " from rule-table plan");
            PlanRecord rec{result.plan, result.provenance, result.attempts, result.notes,
                           result.validation.resolved_actions, result.validation.violations};
            store_->write(id, [&](SessionStore::Writer& w) { w.plan(rec); });
            if (interrupted("planned")) return store_->get(id)->status;
        }

        // 3. tool execution, skipping actions that already have an outcome
        s = store_->get(id);
        if (s->reports.empty() && s->status != CaseStatus::aggregating) {
            std::vector<tools::ResolvedAction> pending;
            for (const auto& a : s->plan->actions)
                if (!s->outcome_for(a.fingerprint)) pending.push_back(a);
            const std::size_t reused = s->plan->actions.size() - pending.size();
            event(kToolsStage, EventKind::started,
                  count_text(pending.size(), "action") + " to run" + (reused ? ", " + std::to_string(reused) + " reused" : ""));

            std::atomic<std::size_t> next{0};
            std::atomic<bool> stop{false};
            std::exception_ptr error;
            std::mutex error_mu;
            const fs::path work = store_->session_dir(id) / "work";
            auto worker = [&] {
                for (std::size_t i; !stop && (i = next++) < pending.size();) {
                    try {
                        tools::ToolContext ctx{work / pending[i].fingerprint};
                        std::error_code ec;
                        fs::create_directories(ctx.work_dir, ec);
                        auto outcome = tools::execute_action(*registry_, pending[i], options_.tool_policy, ctx, sink);
                        store_->write(id, [&](SessionStore::Writer& w) { w.outcome(outcome); });
                        if (interrupted("outcome")) stop = true;
                    } catch (...) {
                        std::lock_guard lock(error_mu);
                        if (!error) error = std::current_exception();
                        stop = true;
                    }
                }
            };
            const std::size_t n_threads = std::min(std::max<std::size_t>(1, options_.max_parallel_tools), pending.size());
            std::vector<std::thread> threads;
            for (std::size_t t = 1; t < n_threads; ++t) threads.emplace_back(worker);
            if (n_threads > 0) worker();
            for (auto& t : threads) t.join();
            if (error) std::rethrow_exception(error);
            if (stop) return store_->get(id)->status;

            s = store_->get(id);
            const auto ordered = s->outcomes_in_plan_order();
            const auto ok = std::count_if(ordered.begin(), ordered.end(),
                                          [](const auto& o) { return o.status == tools::OutcomeStatus::ok; });
            event(kToolsStage, EventKind::finished,
                  std::to_string(ok) + " ok, " + std::to_string(ordered.size() - static_cast<std::size_t>(ok)) + " failed");
            if (interrupted("executed")) return store_->get(id)->status;
        }

        // 4. verification and aggregation
        s = store_->get(id);
        if (s->reports.empty()) {
            const auto ordered = s->outcomes_in_plan_order();
            event(kAggregationStage, EventKind::started, "aggregating " + count_text(ordered.size(), "outcome"));
            aggregator::AggregationContext ctx;
            ctx.outcomes = ordered;
            ctx.record = s->record;
            ctx.guidelines = options_.guideline_text;
            ctx.doctor_prompt = s->query;
            ctx.table = &thresholds();
            auto result = aggregator::aggregate(ctx, *gateway_, id, options_.aggregator, sink);
            store_->write(id, [&](SessionStore::Writer& w) {
                return w.report(result.report, result.cross_check, result.flags, "pipeline");
            });
            std::string detail = std::string(to_string(result.report.diagnosis)) + " (" +
                                 std::string(to_string(result.report.confidence)) + "), provenance " +
                                 std::string(to_string(result.report.provenance));
            if (!result.cross_check.agree) detail += "; " + result.cross_check.note;
            event(kAggregationStage, EventKind::finished, detail);
            if (interrupted("aggregated")) return store_->get(id)->status;
        }

        event(kPipelineStage, EventKind::finished, "done");
    } catch (const std::exception& e) {
        try {
            event(kPipelineStage, EventKind::finished, std::string("failed: ") + e.what());
        } catch (...) {
            // storage itself is gone; the journal keeps the last good state
        }
    }
    return store_->get(id)->status;
}

ChatResult Engine::chat_turn(const std::string& id, std::string_view message) {
    if (trim(message).empty()) fail(ErrorCode::InvalidArgument, "message must be non-empty");
    return store_->write(id, [&](SessionStore::Writer& w) {
        const CaseSession& s = w.session();
        if (s.status != CaseStatus::done)
            fail(ErrorCode::WrongState, "chat needs a finished session; " + id + " is " + std::string(to_string(s.status)));
        const ReportVersion* current = s.current_report();
        if (!current) fail(ErrorCode::NoReport, "session " + id + " has no report");

        aggregator::AggregationContext ctx;
        ctx.outcomes = s.outcomes_in_plan_order();
        ctx.record = s.record;
        ctx.guidelines = options_.guideline_text;
        ctx.history = s.history;
        ctx.doctor_prompt = s.query;
        ctx.table = &thresholds();
        const DiagnosisReport report = current->report;
        // Events are closed once the pipeline is done, so chat runs unobserved.
        auto reply = aggregator::chat(ctx, report, message, *gateway_, id);

        const auto last = s.history.size() ? s.history.turns().back().timestamp_ms : 0;
        const auto t_user = std::max(now_ms(), last);
        w.chat({Speaker::user, std::string(message), t_user});
        w.chat({Speaker::agent, reply.text, std::max(now_ms(), t_user)});

        ChatResult out;
        out.reply = reply.text;
        if (reply.revised_report && !(*reply.revised_report == report)) {
            w.report(*reply.revised_report, reply.cross_check, {}, "chat");
            out.revised = true;
            out.cross_check = reply.cross_check;
        }
        out.report_version = static_cast<int>(w.session().reports.size());
        return out;
    });
}

std::string Engine::export_report(const std::string& id, ExportFormat format, int version) {
    auto s = store_->get(id);
    if (s->reports.empty()) fail(ErrorCode::NoReport, "session " + id + " has no report yet");
    if (version < 0 || version > static_cast<int>(s->reports.size()))
        fail(ErrorCode::NoReport, "session " + id + " has no report version " + std::to_string(version));
    const ReportVersion& r = version == 0 ? s->reports.back() : s->reports[static_cast<std::size_t>(version - 1)];
    if (format == ExportFormat::json) return r.document;
    return render_report_markdown(r.report, id);
}

}  // namespace dxagent::service
