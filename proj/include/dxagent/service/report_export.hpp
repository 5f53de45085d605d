#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "dxagent/domain/domain.hpp"

namespace dxagent::service {

/// Section titles of the Markdown export, in render order.
const std::vector<std::string>& report_section_titles();

/// One "## " section per title; empty lists render as "_None._".
std::string render_report_markdown(const DiagnosisReport& report, std::string_view case_id);

}  // namespace dxagent::service
