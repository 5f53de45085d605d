#include "dxagent/core/events.hpp"

#include "dxagent/core/error.hpp"

namespace dxagent {

std::string_view to_string(EventKind kind) noexcept {
    switch (kind) {
        case EventKind::started: return "started";
        case EventKind::tool_ok: return "tool_ok";
        case EventKind::tool_failed: return "tool_failed";
        case EventKind::retry: return "retry";
        case EventKind::fallback: return "fallback";
        case EventKind::finished: return "finished";
    }
    return "started";
}

EventKind event_kind_from_string(std::string_view text) {
    for (auto k : {EventKind::started, EventKind::tool_ok, EventKind::tool_failed, EventKind::retry,
                   EventKind::fallback, EventKind::finished}) {
        if (to_string(k) == text) return k;
    }
    fail(ErrorCode::InvalidArgument, "unknown event kind '" + std::string(text) + "'");
}

void to_json(nlohmann::json& j, const PipelineEvent& e) {
    j = nlohmann::json{{"sequence", e.sequence},
                       {"stage", e.stage},
                       {"kind", to_string(e.kind)},
                       {"detail", e.detail},
                       {"timestamp_ms", e.timestamp_ms}};
}

void from_json(const nlohmann::json& j, PipelineEvent& e) {
    e.sequence = j.at("sequence").get<std::int64_t>();
    e.stage = j.at("stage").get<std::string>();
    e.kind = event_kind_from_string(j.at("kind").get<std::string>());
    e.detail = j.value("detail", "");
    e.timestamp_ms = j.value("timestamp_ms", std::int64_t{0});
}

}  // namespace dxagent
