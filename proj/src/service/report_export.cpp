#include "dxagent/service/report_export.hpp"

#include <sstream>

namespace dxagent::service {

const std::vector<std::string>& report_section_titles() {
    static const std::vector<std::string> titles = {
        "Diagnosis and confidence", "Clinical reasoning", "Supporting evidence", "Contradicting evidence",
        "Conflict resolution",      "Diagnostic criteria", "Recommendations",   "Attachments",
        "Provenance",               "Guideline checksum"};
    return titles;
}

namespace {

// Keeps free text from opening a new section in the rendered document.
std::string escape_block(std::string_view text) {
    std::string out;
    bool line_start = true;
    for (char c : text) {
        if (line_start && c == '#') out += '\\';
        out += c;
        line_start = c == '\n';
    }
    return out;
}

void list(std::ostringstream& out, const std::vector<std::string>& items) {
    if (items.empty()) {
        out << "_None._\n";
        return;
    }
    for (const auto& item : items) out << "- " << escape_block(item) << "\n";
}

void paragraph(std::ostringstream& out, std::string_view text) {
    out << (text.empty() ? std::string("_None._") : escape_block(text)) << "\n";
}

}  // namespace

std::string render_report_markdown(const DiagnosisReport& r, std::string_view case_id) {
    const auto& t = report_section_titles();
    std::ostringstream out;
    out << "# Diagnosis report: " << case_id << "\n\n";
    out << "## " << t[0] << "\n\n**" << to_string(r.diagnosis) << "** (confidence: " << to_string(r.confidence)
        << ")\n\n";
    out << "## " << t[1] << "\n\n";
    paragraph(out, r.clinical_reasoning);
    out << "\n## " << t[2] << "\n\n";
    list(out, r.supporting_evidence);
    out << "\n## " << t[3] << "\n\n";
    list(out, r.contradicting_evidence);
    out << "\n## " << t[4] << "\n\n";
    paragraph(out, r.conflict_resolution);
    out << "\n## " << t[5] << "\n\n";
    paragraph(out, r.diagnostic_criteria);
    out << "\n## " << t[6] << "\n\n";
    list(out, r.recommendations);
    out << "\n## " << t[7] << "\n\n";
    list(out, r.attachments);
    out << "\n## " << t[8] << "\n\n" << to_string(r.provenance) << "\n";
    out << "\n## " << t[9] << "\n\n";
    out << (r.guideline_checksum.empty() ? std::string("_None._") : "`" + r.guideline_checksum + "`") << "\n";
    return out.str();
}

}  // namespace dxagent::service
