#include "dxagent/service/session.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <random>
#include <regex>
#include <sstream>

#include "dxagent/core/util.hpp"

namespace dxagent::service {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kJournal = "journal.jsonl";

bool valid_session_id(std::string_view id) {
    static const std::regex re("[a-z0-9][a-z0-9-]{0,63}");
    return std::regex_match(id.begin(), id.end(), re);
}

std::string new_session_id() {
    static std::mutex mu;
    static std::mt19937_64 rng{std::random_device{}() ^ static_cast<std::uint64_t>(now_ms())};
    std::lock_guard lock(mu);
    std::ostringstream out;
    out << "case-" << std::hex << std::setw(12) << std::setfill('0') << (rng() & 0xffffffffffffULL);
    return out.str();
}

json violations_json(const std::vector<planner::PlanViolation>& vs) {
    json a = json::array();
    for (const auto& v : vs) a.push_back({{"index", v.index}, {"reason", v.reason}, {"warning", v.warning}});
    return a;
}

json plan_record_json(const PlanRecord& r) {
    return {{"plan", r.plan},
            {"provenance", to_string(r.provenance)},
            {"attempts", r.attempts},
            {"notes", r.notes},
            {"actions", r.actions},
            {"violations", violations_json(r.violations)}};
}

PlanRecord plan_record_from(const json& j) {
    PlanRecord r;
    r.plan = j.at("plan").get<planner::DiagnosticPlan>();
    r.provenance = parse_provenance(j.at("provenance").get<std::string>());
    r.attempts = j.value("attempts", 0);
    r.notes = j.value("notes", std::vector<std::string>{});
    r.actions = j.at("actions").get<std::vector<tools::ResolvedAction>>();
    for (const auto& v : j.value("violations", json::array()))
        r.violations.push_back({v.at("index").get<std::size_t>(), v.at("reason").get<std::string>(), v.value("warning", false)});
    return r;
}

aggregator::CrossCheck cross_check_from(const json& j) {
    aggregator::CrossCheck c;
    c.llm_label = normalize_label(j.at("llm_label").get<std::string>());
    c.oracle_label = normalize_label(j.at("oracle_label").get<std::string>());
    c.agree = j.at("agree").get<bool>();
    c.note = j.value("note", "");
    return c;
}

std::string report_file_name(int version) { return "report_v" + std::to_string(version) + ".json"; }

}  // namespace

// ---------------------------------------------------------------- status

std::string_view to_string(CaseStatus s) noexcept {
    switch (s) {
        case CaseStatus::created: return "created";
        case CaseStatus::planning: return "planning";
        case CaseStatus::executing: return "executing";
        case CaseStatus::aggregating: return "aggregating";
        case CaseStatus::done: return "done";
        case CaseStatus::failed: return "failed";
    }
    return "failed";
}

CaseStatus parse_case_status(std::string_view text) {
    for (auto s : {CaseStatus::created, CaseStatus::planning, CaseStatus::executing, CaseStatus::aggregating,
                   CaseStatus::done, CaseStatus::failed})
        if (to_string(s) == text) return s;
    fail(ErrorCode::InvalidArgument, "unknown status '" + std::string(text) + "'");
}

bool is_terminal(CaseStatus s) noexcept { return s == CaseStatus::done || s == CaseStatus::failed; }

bool transition_allowed(CaseStatus from, CaseStatus to) noexcept {
    if (is_terminal(from)) return false;
    if (to == CaseStatus::failed) return true;
    return static_cast<int>(to) >= static_cast<int>(from);
}

std::optional<CaseStatus> status_after(const PipelineEvent& e) {
    if (e.stage == kPipelineStage && e.kind == EventKind::finished)
        return e.detail.rfind("failed", 0) == 0 ? CaseStatus::failed : CaseStatus::done;
    if (e.kind != EventKind::started) return std::nullopt;
    if (e.stage == kPlanningStage) return CaseStatus::planning;
    if (e.stage == kToolsStage) return CaseStatus::executing;
    if (e.stage == kAggregationStage) return CaseStatus::aggregating;
    return std::nullopt;
}

CaseStatus replay_status(const std::vector<PipelineEvent>& events) {
    CaseStatus s = CaseStatus::created;
    for (const auto& e : events)
        if (auto next = status_after(e)) s = *next;
    return s;
}

// ---------------------------------------------------------------- session

void to_json(json& j, const StoredUpload& u) {
    j = json{{"kind", u.kind}, {"filename", u.filename}, {"sha256", u.sha256}, {"path", u.path}, {"bytes", u.bytes}};
}

void from_json(const json& j, StoredUpload& u) {
    u.kind = j.at("kind").get<std::string>();
    u.filename = j.value("filename", "");
    u.sha256 = j.at("sha256").get<std::string>();
    u.path = j.at("path").get<std::string>();
    u.bytes = j.value("bytes", std::size_t{0});
}

const ReportVersion* CaseSession::current_report() const { return reports.empty() ? nullptr : &reports.back(); }

const tools::ToolOutcome* CaseSession::outcome_for(std::string_view fingerprint) const {
    for (const auto& o : outcomes)
        if (o.fingerprint == fingerprint) return &o;
    return nullptr;
}

std::vector<tools::ToolOutcome> CaseSession::outcomes_in_plan_order() const {
    if (!plan) return outcomes;
    std::vector<tools::ToolOutcome> out;
    for (const auto& a : plan->actions)
        if (const auto* o = outcome_for(a.fingerprint)) out.push_back(*o);
    return out;
}

json to_summary_json(const CaseSession& s) {
    json j{{"session_id", s.session_id},
           {"status", to_string(s.status)},
           {"created_ms", s.created_ms},
           {"record", s.record},
           {"query", s.query},
           {"uploads", s.uploads},
           {"events", s.events},
           {"outcomes", s.outcomes_in_plan_order()},
           {"aggregation_flags", s.aggregation_flags},
           {"history", s.history.turns()}};
    j["plan"] = s.plan ? plan_record_json(*s.plan) : json(nullptr);
    json versions = json::array();
    for (const auto& r : s.reports) {
        json v{{"version", r.version}, {"source", r.source}};
        if (r.cross_check) v["cross_check"] = *r.cross_check;
        versions.push_back(std::move(v));
    }
    j["report_versions"] = std::move(versions);
    j["report"] = s.current_report() ? json::parse(s.current_report()->document) : json(nullptr);
    return j;
}

json created_entry(const CaseSession& s) {
    return {{"type", "created"},
            {"session_id", s.session_id},
            {"created_ms", s.created_ms},
            {"record", s.record},
            {"query", s.query},
            {"uploads", s.uploads}};
}

void apply_entry(CaseSession& s, const json& entry, const fs::path& session_dir) {
    const std::string type = entry.at("type").get<std::string>();
    if (type == "created") {
        s.session_id = entry.at("session_id").get<std::string>();
        s.created_ms = entry.value("created_ms", std::int64_t{0});
        s.record = entry.at("record").get<PatientRecord>();
        s.query = entry.value("query", "");
        s.uploads = entry.value("uploads", std::vector<StoredUpload>{});
    } else if (type == "event") {
        auto e = entry.at("event").get<PipelineEvent>();
        const auto expected = static_cast<std::int64_t>(s.events.size()) + 1;
        if (e.sequence != expected)
            fail(ErrorCode::StorageFailure, "event sequence gap: expected " + std::to_string(expected) + ", found " +
                                                std::to_string(e.sequence));
        if (auto next = status_after(e)) {
            if (!transition_allowed(s.status, *next))
                fail(ErrorCode::WrongState, "transition " + std::string(to_string(s.status)) + " -> " +
                                               std::string(to_string(*next)) + " is not allowed");
            s.status = *next;
        }
        s.events.push_back(std::move(e));
    } else if (type == "plan") {
        s.plan = plan_record_from(entry.at("plan"));
    } else if (type == "outcome") {
        auto o = entry.at("outcome").get<tools::ToolOutcome>();
        if (!o.fingerprint.empty() && s.outcome_for(o.fingerprint))
            fail(ErrorCode::StorageFailure, "duplicate outcome for " + o.fingerprint);
        s.outcomes.push_back(std::move(o));
    } else if (type == "report") {
        ReportVersion v;
        v.version = entry.at("version").get<int>();
        v.source = entry.value("source", "pipeline");
        if (v.version != static_cast<int>(s.reports.size()) + 1)
            fail(ErrorCode::StorageFailure, "report version gap at " + std::to_string(v.version));
        v.document = read_text_file(session_dir / entry.at("file").get<std::string>());
        v.report = json::parse(v.document).get<DiagnosisReport>();
        if (entry.contains("cross_check") && !entry["cross_check"].is_null())
            v.cross_check = cross_check_from(entry["cross_check"]);
        if (v.source == "pipeline") s.aggregation_flags = entry.value("flags", std::vector<std::string>{});
        s.reports.push_back(std::move(v));
    } else if (type == "chat") {
        s.history.append(entry.at("turn").get<ChatTurn>());
    } else {
        fail(ErrorCode::StorageFailure, "unknown journal entry type '" + type + "'");
    }
}

// ---------------------------------------------------------------- store

std::string_view upload_extension(std::string_view filename) {
    const std::string lower = to_lower(filename);
    for (std::string_view ext : {".nii.gz", ".vcf.gz", ".volumes.json", ".nii", ".vcf", ".json"})
        if (lower.size() >= ext.size() && lower.compare(lower.size() - ext.size(), ext.size(), ext) == 0) return ext;
    return "";
}

SessionStore::SessionStore(fs::path root) : root_(fs::absolute(std::move(root))) {
    std::error_code ec;
    fs::create_directories(root_ / "sessions", ec);
    if (ec) fail(ErrorCode::StorageFailure, "cannot create data directory " + root_.string() + ": " + ec.message());
}

fs::path SessionStore::session_dir(std::string_view id) const { return root_ / "sessions" / std::string(id); }

std::shared_ptr<const CaseSession> SessionStore::create(PatientRecord record, std::string query,
                                                        const std::vector<NewUpload>& uploads) {
    std::string id;
    fs::path dir;
    for (int tries = 0;; ++tries) {
        id = new_session_id();
        dir = session_dir(id);
        std::error_code ec;
        if (fs::create_directories(dir, ec)) break;
        if (ec || tries > 16) fail(ErrorCode::StorageFailure, "cannot allocate a session directory under " + root_.string());
    }

    auto s = std::make_shared<CaseSession>();
    s->session_id = id;
    s->created_ms = now_ms();
    s->query = std::move(query);

    // Images first so a fixture sidecar can take the image's stored name.
    std::string mri_stem;
    for (const auto& u : uploads) {
        StoredUpload stored;
        stored.kind = u.kind;
        stored.filename = u.filename;
        stored.sha256 = sha256_hex(u.bytes);
        stored.bytes = u.bytes.size();
        std::string ext(upload_extension(u.filename));
        if (u.kind == "mri_volumes") continue;
        if (ext.empty()) ext = u.kind == "mri" ? ".nii" : ".vcf";
        const fs::path path = dir / "uploads" / (stored.sha256 + ext);
        write_file_atomic(path, u.bytes);
        stored.path = path.string();
        if (u.kind == "mri") {
            record.mri_ref = stored.path;
            mri_stem = stored.sha256;
        } else if (u.kind == "vcf") {
            record.vcf_ref = stored.path;
        }
        s->uploads.push_back(std::move(stored));
    }
    for (const auto& u : uploads) {
        if (u.kind != "mri_volumes") continue;
        StoredUpload stored{u.kind, u.filename, sha256_hex(u.bytes), "", u.bytes.size()};
        if (mri_stem.empty()) fail(ErrorCode::ValidationFailed, "a volumes sidecar needs an mri upload");
        const fs::path path = dir / "uploads" / (mri_stem + ".volumes.json");
        write_file_atomic(path, u.bytes);
        stored.path = path.string();
        s->uploads.push_back(std::move(stored));
    }
    record.case_id = id;
    s->record = std::move(record);
    append_line(dir / kJournal, created_entry(*s).dump());

    auto slot = slot_for(id);
    publish(*slot, s);
    return s;
}

std::shared_ptr<SessionStore::Slot> SessionStore::slot_for(std::string_view id) {
    if (!valid_session_id(id)) fail(ErrorCode::SessionNotFound, "no session '" + std::string(id) + "'");
    std::lock_guard lock(slots_mu_);
    auto it = slots_.find(id);
    if (it == slots_.end()) it = slots_.emplace(std::string(id), std::make_shared<Slot>()).first;
    return it->second;
}

std::shared_ptr<const CaseSession> SessionStore::load_slot(Slot& slot, std::string_view id) {
    {
        std::lock_guard lock(slot.publish);
        if (slot.current) return slot.current;
    }
    auto loaded = load_from_disk(id);
    std::lock_guard lock(slot.publish);
    if (!slot.current) slot.current = loaded;
    return slot.current;
}

std::shared_ptr<const CaseSession> SessionStore::load_from_disk(std::string_view id) const {
    const fs::path dir = session_dir(id);
    const fs::path journal = dir / kJournal;
    std::error_code ec;
    if (!fs::exists(journal, ec)) fail(ErrorCode::SessionNotFound, "no session '" + std::string(id) + "'");
    std::ifstream in(journal, std::ios::binary);
    if (!in) fail(ErrorCode::StorageFailure, "cannot read " + journal.string());
    auto s = std::make_shared<CaseSession>();
    std::string line;
    std::size_t lineno = 0;
    bool torn = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (torn) fail(ErrorCode::StorageFailure, journal.string() + ": unreadable entry before line " + std::to_string(lineno));
        json entry = json::parse(line, nullptr, false);
        if (entry.is_discarded()) {
            // A torn final append (crash mid-write) is dropped; anywhere
            // else it is corruption.
            torn = true;
            continue;
        }
        try {
            apply_entry(*s, entry, dir);
        } catch (const json::exception& e) {
            fail(ErrorCode::StorageFailure, journal.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (s->session_id.empty()) fail(ErrorCode::StorageFailure, journal.string() + " has no created entry");
    return s;
}

void SessionStore::publish(Slot& slot, std::shared_ptr<const CaseSession> next) {
    {
        std::lock_guard lock(slot.publish);
        slot.current = std::move(next);
    }
    slot.changed.notify_all();
}

std::shared_ptr<const CaseSession> SessionStore::get(std::string_view id) {
    auto slot = slot_for(id);
    return load_slot(*slot, id);
}

bool SessionStore::exists(std::string_view id) {
    if (!valid_session_id(id)) return false;
    std::error_code ec;
    return fs::exists(session_dir(id) / kJournal, ec);
}

std::vector<std::string> SessionStore::list() {
    std::vector<std::string> ids;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(root_ / "sessions", ec)) {
        const std::string name = entry.path().filename().string();
        if (exists(name)) ids.push_back(name);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::shared_ptr<const CaseSession> SessionStore::wait_for_events(std::string_view id, std::size_t seen,
                                                                 std::chrono::milliseconds timeout) {
    auto slot = slot_for(id);
    load_slot(*slot, id);
    std::unique_lock lock(slot->publish);
    slot->changed.wait_for(lock, timeout, [&] {
        return slot->current->events.size() > seen || is_terminal(slot->current->status);
    });
    return slot->current;
}

// ---------------------------------------------------------------- writer

void SessionStore::Writer::commit(const json& entry) {
    auto next = std::make_shared<CaseSession>(*current_);
    apply_entry(*next, entry, store_.session_dir(id_));
    append_line(store_.session_dir(id_) / kJournal, entry.dump());
    current_ = next;
    store_.publish(*store_.slot_for(id_), std::move(next));
}

PipelineEvent SessionStore::Writer::event(std::string_view stage, EventKind kind, std::string detail) {
    PipelineEvent e;
    e.sequence = static_cast<std::int64_t>(current_->events.size()) + 1;
    e.stage = std::string(stage);
    e.kind = kind;
    e.detail = std::move(detail);
    e.timestamp_ms = std::max(now_ms(), current_->events.empty() ? 0 : current_->events.back().timestamp_ms);
    commit({{"type", "event"}, {"event", e}});
    return e;
}

void SessionStore::Writer::plan(const PlanRecord& record) { commit({{"type", "plan"}, {"plan", plan_record_json(record)}}); }

void SessionStore::Writer::outcome(const tools::ToolOutcome& outcome) {
    commit({{"type", "outcome"}, {"outcome", outcome}});
}

const ReportVersion& SessionStore::Writer::report(const DiagnosisReport& report,
                                                  const std::optional<aggregator::CrossCheck>& cc,
                                                  const std::vector<std::string>& flags, std::string source) {
    const int version = static_cast<int>(current_->reports.size()) + 1;
    const std::string file = report_file_name(version);
    const fs::path path = store_.session_dir(id_) / file;
    // Report files are write-once; an existing file means the journal entry
    // was lost in a crash after the write, so it is safe to replace.
    write_file_atomic(path, json(report).dump(2) + "\n");
    json entry{{"type", "report"}, {"version", version}, {"source", std::move(source)}, {"file", file}, {"flags", flags}};
    entry["cross_check"] = cc ? json(*cc) : json(nullptr);
    commit(entry);
    return current_->reports.back();
}

void SessionStore::Writer::chat(const ChatTurn& turn) { commit({{"type", "chat"}, {"turn", turn}}); }

}  // namespace dxagent::service
