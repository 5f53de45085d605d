#pragma once

#include <string_view>

namespace dxagent::assets {

// Versioned text assets compiled from assets/ at configure time.
std::string_view planner_system_prompt();
std::string_view planner_user_prompt();
std::string_view aggregator_system_prompt();
std::string_view aggregator_user_prompt();
std::string_view default_threshold_table();
std::string_view default_phs_model();  // synthetic, see tools/data

}  // namespace dxagent::assets
