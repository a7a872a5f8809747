#pragma once

#include "mad/core.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace mad {

// Line-delimited JSON trace files: one "meta" record, one "initial" record
// per agent, then "debate_event" records in sequence order.
inline constexpr int kTraceSchemaVersion = 1;

nlohmann::json to_json(const AnswerLabel& a);
AnswerLabel answer_from_json(const nlohmann::json& j);

nlohmann::json to_json(const AgentResponse& r);
AgentResponse response_from_json(const nlohmann::json& j);

nlohmann::json to_json(const DebateEvent& e);
DebateEvent event_from_json(const nlohmann::json& j);

void persist_trace(const DebateTrace& trace, const std::filesystem::path& path);

// Throws ParseError (with line number) on malformed/truncated files.
DebateTrace load_trace(const std::filesystem::path& path);

bool traces_equal(const DebateTrace& a, const DebateTrace& b);

}  // namespace mad
