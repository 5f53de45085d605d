#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dxagent/aggregator/aggregator.hpp"
#include "dxagent/core/error.hpp"
#include "dxagent/core/events.hpp"
#include "dxagent/domain/domain.hpp"
#include "dxagent/planner/planner.hpp"
#include "dxagent/tools/registry.hpp"

namespace dxagent::service {

enum class CaseStatus { created, planning, executing, aggregating, done, failed };

std::string_view to_string(CaseStatus s) noexcept;
CaseStatus parse_case_status(std::string_view text);
bool is_terminal(CaseStatus s) noexcept;

/// Forward-only along created -> planning -> executing -> aggregating -> done;
/// failed from any non-terminal state. Staying put is allowed (resume).
bool transition_allowed(CaseStatus from, CaseStatus to) noexcept;

// Stage names used in the event log. Tool events come from the executor
// under kToolsStage.
inline constexpr std::string_view kPipelineStage = "pipeline";
inline constexpr std::string_view kPlanningStage = "planning";
inline constexpr std::string_view kToolsStage = "tools";
inline constexpr std::string_view kAggregationStage = "aggregation";

/// Status implied by a single event, if it marks a stage boundary.
std::optional<CaseStatus> status_after(const PipelineEvent& e);

/// Folds the event log into a status (the event-sourcing view).
CaseStatus replay_status(const std::vector<PipelineEvent>& events);

struct StoredUpload {
    std::string kind;      // "mri" | "vcf" | "mri_volumes"
    std::string filename;  // as supplied by the client
    std::string sha256;
    std::string path;      // absolute, under the session directory
    std::size_t bytes = 0;

    bool operator==(const StoredUpload&) const = default;
};

void to_json(nlohmann::json& j, const StoredUpload& u);
void from_json(const nlohmann::json& j, StoredUpload& u);

struct ReportVersion {
    int version = 1;
    std::string source;    // "pipeline" | "chat"
    std::string document;  // the persisted JSON bytes
    DiagnosisReport report;
    std::optional<aggregator::CrossCheck> cross_check;
};

struct PlanRecord {
    planner::DiagnosticPlan plan;
    Provenance provenance = Provenance::llm;
    int attempts = 0;
    std::vector<std::string> notes;
    std::vector<tools::ResolvedAction> actions;
    std::vector<planner::PlanViolation> violations;
};

struct CaseSession {
    std::string session_id;
    std::int64_t created_ms = 0;
    PatientRecord record;
    std::string query;  // doctor prompt used for observation
    std::vector<StoredUpload> uploads;
    std::optional<PlanRecord> plan;
    std::vector<tools::ToolOutcome> outcomes;  // persisted order (completion order)
    std::vector<ReportVersion> reports;        // version 1 from the pipeline, later from chat
    std::vector<std::string> aggregation_flags;
    ChatHistory history;
    std::vector<PipelineEvent> events;
    CaseStatus status = CaseStatus::created;

    const ReportVersion* current_report() const;
    const tools::ToolOutcome* outcome_for(std::string_view fingerprint) const;
    // Outcomes rearranged into plan order; missing actions are left out.
    std::vector<tools::ToolOutcome> outcomes_in_plan_order() const;
};

/// Summary view: status, events, plan, outcomes, report versions, history.
nlohmann::json to_summary_json(const CaseSession& s);

/// One journal line per state change. Sessions are rebuilt by replay.
///   created | event | plan | outcome | report | chat
nlohmann::json created_entry(const CaseSession& s);
void apply_entry(CaseSession& s, const nlohmann::json& entry, const std::filesystem::path& session_dir);

/// Append-only JSON-lines journal per session under <root>/sessions/<id>/,
/// with uploads stored as <sha256><ext> under uploads/ and every report
/// version written once as report_v<N>.json.
///
/// Writers hold the per-session lock; readers get immutable snapshots.
class SessionStore {
public:
    explicit SessionStore(std::filesystem::path root);

    const std::filesystem::path& root() const noexcept { return root_; }
    std::filesystem::path session_dir(std::string_view id) const;

    struct NewUpload {
        std::string kind;
        std::string filename;
        std::string bytes;
    };

    /// Persists a fresh session. Upload bytes are hashed and stored; the
    /// record's mri_ref/vcf_ref are pointed at the stored copies.
    std::shared_ptr<const CaseSession> create(PatientRecord record, std::string query,
                                              const std::vector<NewUpload>& uploads);

    /// Latest snapshot; loads from disk on first access. Throws SessionNotFound.
    std::shared_ptr<const CaseSession> get(std::string_view id);
    bool exists(std::string_view id);
    std::vector<std::string> list();

    /// Runs fn under the session's writer lock. fn receives a Writer.
    class Writer {
    public:
        const CaseSession& session() const { return *current_; }
        // Appends the next gapless event; returns it.
        PipelineEvent event(std::string_view stage, EventKind kind, std::string detail);
        void plan(const PlanRecord& record);
        void outcome(const tools::ToolOutcome& outcome);
        // Writes report_v<N>.json and journals it.
        const ReportVersion& report(const DiagnosisReport& report, const std::optional<aggregator::CrossCheck>& cc,
                                    const std::vector<std::string>& flags, std::string source);
        void chat(const ChatTurn& turn);

    private:
        friend class SessionStore;
        Writer(SessionStore& store, std::string id, std::shared_ptr<const CaseSession> current)
            : store_(store), id_(std::move(id)), current_(std::move(current)) {}
        void commit(const nlohmann::json& entry);

        SessionStore& store_;
        std::string id_;
        std::shared_ptr<const CaseSession> current_;
    };

    template <class F>
    auto write(std::string_view id, F&& fn) {
        auto slot = slot_for(id);
        std::lock_guard lock(slot->writer);
        Writer w(*this, std::string(id), load_slot(*slot, id));
        return fn(w);
    }

    /// Blocks until the session has more than `seen` events or is terminal,
    /// or the timeout elapses. Returns the latest snapshot.
    std::shared_ptr<const CaseSession> wait_for_events(std::string_view id, std::size_t seen,
                                                       std::chrono::milliseconds timeout);

private:
    struct Slot {
        std::mutex writer;
        std::mutex publish;  // guards `current` pointer swaps only
        std::condition_variable changed;
        std::shared_ptr<const CaseSession> current;
    };

    std::shared_ptr<Slot> slot_for(std::string_view id);
    std::shared_ptr<const CaseSession> load_slot(Slot& slot, std::string_view id);
    std::shared_ptr<const CaseSession> load_from_disk(std::string_view id) const;
    void publish(Slot& slot, std::shared_ptr<const CaseSession> next);

    std::filesystem::path root_;
    std::mutex slots_mu_;
    std::map<std::string, std::shared_ptr<Slot>, std::less<>> slots_;
};

std::string_view upload_extension(std::string_view filename);

}  // namespace dxagent::service
