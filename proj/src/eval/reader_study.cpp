#include "dxagent/eval/reader_study.hpp"

#include <cmath>

#include "dxagent/core/error.hpp"
#include "dxagent/core/util.hpp"

namespace dxagent::eval {

using nlohmann::json;

std::string_view to_string(Seniority s) noexcept {
    switch (s) {
        case Seniority::junior: return "junior";
        case Seniority::intermediate: return "intermediate";
        case Seniority::senior: return "senior";
    }
    return "junior";
}

std::string_view to_string(Specialty s) noexcept { return s == Specialty::neurologist ? "neurologist" : "radiologist"; }

namespace {

Seniority parse_seniority(std::string_view t) {
    const auto s = to_lower(trim(t));
    if (s == "junior") return Seniority::junior;
    if (s == "intermediate") return Seniority::intermediate;
    if (s == "senior") return Seniority::senior;
    fail(ErrorCode::InvalidRecord, "seniority '" + std::string(t) + "' is not junior, intermediate or senior");
}

Specialty parse_specialty(std::string_view t) {
    const auto s = to_lower(trim(t));
    if (s == "neurologist") return Specialty::neurologist;
    if (s == "radiologist") return Specialty::radiologist;
    fail(ErrorCode::InvalidRecord, "specialty '" + std::string(t) + "' is not neurologist or radiologist");
}

double parse_seconds(const std::string& t, std::size_t line) {
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(t, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != trim(t).size() || !(v > 0) || !std::isfinite(v))
        fail(ErrorCode::InvalidRecord, "line " + std::to_string(line) + ": time '" + t + "' must be a positive number");
    return v;
}

StagingLabel parse_label_at(const std::string& t, std::size_t line) {
    try {
        return normalize_label(t);
    } catch (const Error& e) {
        fail(ErrorCode::InvalidRecord, "line " + std::to_string(line) + ": " + e.what());
    }
}

GroupStats stats_for(const std::string& name, const std::vector<const ReaderRecord*>& rows) {
    GroupStats g;
    g.group = name;
    g.pairs = rows.size();
    std::vector<LabeledPrediction> unaided, assisted;
    std::vector<double> tu, ta, diffs;
    for (const auto* r : rows) {
        unaided.push_back({r->case_id, r->truth, r->unaided_label, {}, r->reader_id});
        assisted.push_back({r->case_id, r->truth, r->assisted_label, {}, r->reader_id});
        tu.push_back(r->unaided_seconds);
        ta.push_back(r->assisted_seconds);
        diffs.push_back(r->unaided_seconds - r->assisted_seconds);
    }
    g.unaided = compute_metrics(unaided);
    g.assisted = compute_metrics(assisted);
    for (auto m : kAllMetrics) {
        const double before = g.unaided.value(m);
        if (before > 0) g.improvement[m] = improvement_ratio(before, g.assisted.value(m));
    }
    g.times = summarize_times(tu, ta);
    try {
        g.t_test = paired_t_test(diffs);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::ZeroVariance && e.code() != ErrorCode::NoPairs) throw;
        g.t_test_note = e.what();
    }
    return g;
}

}  // namespace

std::vector<ReaderRecord> load_reader_csv(std::string_view text) {
    std::vector<ReaderRecord> out;
    const auto lines = split(text, '\n');
    std::size_t line_no = 0;
    bool header_seen = false;
    for (const auto& raw : lines) {
        ++line_no;
        const auto line = std::string(trim(raw));
        if (line.empty()) continue;
        if (!header_seen) {
            if (line != kReaderCsvHeader)
                fail(ErrorCode::InvalidRecord, "reader CSV header must be: " + std::string(kReaderCsvHeader));
            header_seen = true;
            continue;
        }
        auto f = split(line, ',');
        if (f.size() != 9)
            fail(ErrorCode::InvalidRecord, "line " + std::to_string(line_no) + ": expected 9 fields, got " + std::to_string(f.size()));
        ReaderRecord r;
        r.reader_id = std::string(trim(f[0]));
        r.seniority = parse_seniority(f[1]);
        r.specialty = parse_specialty(f[2]);
        r.case_id = std::string(trim(f[3]));
        r.truth = parse_label_at(f[4], line_no);
        r.unaided_label = parse_label_at(f[5], line_no);
        r.unaided_seconds = parse_seconds(f[6], line_no);
        r.assisted_label = parse_label_at(f[7], line_no);
        r.assisted_seconds = parse_seconds(f[8], line_no);
        out.push_back(std::move(r));
    }
    if (!header_seen) fail(ErrorCode::InvalidRecord, "reader CSV is empty");
    return out;
}

double improvement_ratio(double unaided, double assisted) {
    if (unaided == 0) fail(ErrorCode::InvalidArgument, "improvement ratio undefined for a zero baseline");
    return (assisted - unaided) / unaided * 100.0;
}

double speedup(double unaided_seconds, double assisted_seconds) {
    if (!(assisted_seconds > 0)) fail(ErrorCode::InvalidArgument, "assisted time must be positive");
    return unaided_seconds / assisted_seconds;
}

std::string group_name(Seniority s, Specialty sp) {
    std::string a(to_string(s)), b(to_string(sp));
    a[0] = static_cast<char>(std::toupper(a[0]));
    b[0] = static_cast<char>(std::toupper(b[0]));
    return a + " " + b;
}

TimeSummary summarize_times(const std::vector<double>& unaided, const std::vector<double>& assisted) {
    TimeSummary t;
    t.median_unaided = median(unaided);
    t.median_assisted = median(assisted);
    t.median_speedup = speedup(t.median_unaided, t.median_assisted);
    t.mean_unaided = mean(unaided);
    t.mean_assisted = mean(assisted);
    t.mean_speedup = speedup(t.mean_unaided, t.mean_assisted);
    return t;
}

void to_json(json& j, const GroupStats& g) {
    json imp = json::object();
    for (const auto& [m, v] : g.improvement) imp[std::string(to_string(m))] = v;
    j = json{{"group", g.group},
             {"pairs", g.pairs},
             {"unaided", g.unaided},
             {"assisted", g.assisted},
             {"improvement_ratio", imp},
             {"time",
              {{"median_unaided", g.times.median_unaided},
               {"median_assisted", g.times.median_assisted},
               {"median_speedup", g.times.median_speedup},
               {"mean_unaided", g.times.mean_unaided},
               {"mean_assisted", g.times.mean_assisted},
               {"mean_speedup", g.times.mean_speedup}}}};
    if (g.t_test) {
        j["t_test"] = {{"n", g.t_test->n}, {"t", g.t_test->t}, {"df", g.t_test->df}, {"p", g.t_test->p},
                       {"cohens_dz", g.t_test->cohens_dz}};
    } else {
        j["t_test"] = {{"undefined", g.t_test_note}};
    }
}

std::vector<GroupStats> reader_study_stats(const std::vector<ReaderRecord>& records) {
    if (records.empty()) fail(ErrorCode::NoPairs, "no reader records");
    const std::pair<Seniority, Specialty> order[] = {{Seniority::junior, Specialty::neurologist},
                                                     {Seniority::intermediate, Specialty::neurologist},
                                                     {Seniority::senior, Specialty::neurologist},
                                                     {Seniority::junior, Specialty::radiologist},
                                                     {Seniority::intermediate, Specialty::radiologist},
                                                     {Seniority::senior, Specialty::radiologist}};
    std::vector<GroupStats> out;
    for (const auto& [s, sp] : order) {
        std::vector<const ReaderRecord*> rows;
        for (const auto& r : records)
            if (r.seniority == s && r.specialty == sp) rows.push_back(&r);
        if (!rows.empty()) out.push_back(stats_for(group_name(s, sp), rows));
    }
    std::vector<const ReaderRecord*> all;
    for (const auto& r : records) all.push_back(&r);
    out.push_back(stats_for("Overall", all));
    return out;
}

}  // namespace dxagent::eval
