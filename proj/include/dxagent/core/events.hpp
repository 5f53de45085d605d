#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace dxagent {

enum class EventKind { started, tool_ok, tool_failed, retry, fallback, finished };

std::string_view to_string(EventKind kind) noexcept;
EventKind event_kind_from_string(std::string_view text);

struct PipelineEvent {
    std::int64_t sequence = 0;
    std::string stage;
    EventKind kind = EventKind::started;
    std::string detail;
    std::int64_t timestamp_ms = 0;

    bool operator==(const PipelineEvent&) const = default;
};

void to_json(nlohmann::json& j, const PipelineEvent& e);
void from_json(const nlohmann::json& j, PipelineEvent& e);

// Receives stage/kind/detail; sequencing and timestamps belong to the session.
using EventSink = std::function<void(std::string_view stage, EventKind kind, std::string detail)>;

inline void emit(const EventSink& sink, std::string_view stage, EventKind kind, std::string detail) {
    if (sink) sink(stage, kind, std::move(detail));
}

}  // namespace dxagent
