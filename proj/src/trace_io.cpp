#include "mad/trace_io.hpp"

#include "mad/errors.hpp"

#include <fstream>

namespace mad {

using nlohmann::json;

json to_json(const AnswerLabel& a) {
    return json{{"raw", a.raw}, {"canonical", a.canonical}};
}

AnswerLabel answer_from_json(const json& j) {
    AnswerLabel a;
    a.raw = j.at("raw").get<std::string>();
    a.canonical = j.at("canonical").get<std::string>();
    return a;
}

json to_json(const AgentResponse& r) {
    json j{{"agent_id", r.agent_id},
           {"turn", r.turn},
           {"reasoning", r.reasoning},
           {"answer", to_json(r.answer)},
           {"token_logliks", r.token_logliks},
           {"input_tokens", r.input_tokens},
           {"output_tokens", r.output_tokens}};
    if (r.self_confidence) {
        j["self_confidence"] = *r.self_confidence;
    } else {
        j["self_confidence"] = nullptr;
    }
    return j;
}

AgentResponse response_from_json(const json& j) {
    AgentResponse r;
    r.agent_id = j.at("agent_id").get<int>();
    r.turn = j.at("turn").get<int>();
    r.reasoning = j.at("reasoning").get<std::string>();
    r.answer = answer_from_json(j.at("answer"));
    r.token_logliks = j.at("token_logliks").get<std::vector<double>>();
    r.input_tokens = j.at("input_tokens").get<std::int64_t>();
    r.output_tokens = j.at("output_tokens").get<std::int64_t>();
    if (!j.at("self_confidence").is_null()) {
        r.self_confidence = j.at("self_confidence").get<double>();
    }
    return r;
}

json to_json(const DebateEvent& e) {
    return json{{"sender_id", e.sender_id},
                {"receiver_id", e.receiver_id},
                {"receiver_pre", to_json(e.receiver_pre)},
                {"receiver_post", to_json(e.receiver_post)},
                {"retained", e.retained},
                {"sequence_index", e.sequence_index},
                {"counted_comm", e.counted_comm},
                {"carries_tokens", e.carries_tokens}};
}

DebateEvent event_from_json(const json& j) {
    DebateEvent e;
    e.sender_id = j.at("sender_id").get<int>();
    e.receiver_id = j.at("receiver_id").get<int>();
    e.receiver_pre = response_from_json(j.at("receiver_pre"));
    e.receiver_post = response_from_json(j.at("receiver_post"));
    e.retained = j.at("retained").get<bool>();
    e.sequence_index = j.at("sequence_index").get<int>();
    e.counted_comm = j.at("counted_comm").get<bool>();
    e.carries_tokens = j.at("carries_tokens").get<bool>();
    return e;
}

void persist_trace(const DebateTrace& trace, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open trace file for writing: " + path.string());

    json meta{{"type", "meta"},
              {"schema_version", kTraceSchemaVersion},
              {"question_id", trace.question_id},
              {"method", trace.method},
              {"final_answer", to_json(trace.final_answer)},
              {"termination_reason", to_string(trace.termination_reason)},
              {"n_initial", trace.initial_responses.size()},
              {"n_events", trace.events.size()}};
    if (trace.accepted_agent) {
        meta["accepted_agent"] = *trace.accepted_agent;
    } else {
        meta["accepted_agent"] = nullptr;
    }
    out << meta.dump() << "\n";

    for (const auto& r : trace.initial_responses) {
        json line{{"type", "initial"}, {"response", to_json(r)}};
        out << line.dump() << "\n";
    }
    for (const auto& e : trace.events) {
        json line = to_json(e);
        line["type"] = "debate_event";
        out << line.dump() << "\n";
    }
}

DebateTrace load_trace(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open trace file: " + path.string(), 0);

    DebateTrace trace;
    std::string line;
    std::size_t line_no = 0;
    bool meta_seen = false;
    std::size_t expect_initial = 0, expect_events = 0;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
        }
        try {
            const std::string type = j.at("type").get<std::string>();
            if (type == "meta") {
                meta_seen = true;
                trace.question_id = j.at("question_id").get<std::string>();
                trace.method = j.at("method").get<std::string>();
                trace.final_answer = answer_from_json(j.at("final_answer"));
                trace.termination_reason =
                    termination_reason_from_string(j.at("termination_reason").get<std::string>());
                expect_initial = j.at("n_initial").get<std::size_t>();
                expect_events = j.at("n_events").get<std::size_t>();
                if (!j.at("accepted_agent").is_null()) {
                    trace.accepted_agent = j.at("accepted_agent").get<int>();
                }
            } else if (type == "initial") {
                trace.initial_responses.push_back(response_from_json(j.at("response")));
            } else if (type == "debate_event") {
                trace.events.push_back(event_from_json(j));
            } else {
                throw ParseError("unknown record type: " + type, line_no);
            }
        } catch (const json::exception& e) {
            throw ParseError(std::string("bad record: ") + e.what(), line_no);
        }
    }

    if (!meta_seen) throw ParseError("missing meta record", line_no);
    if (trace.initial_responses.size() != expect_initial ||
        trace.events.size() != expect_events) {
        throw ParseError("truncated trace: record counts do not match meta", line_no);
    }
    for (std::size_t i = 0; i < trace.events.size(); ++i) {
        if (trace.events[i].sequence_index != static_cast<int>(i)) {
            throw ParseError("sequence_index gap at event " + std::to_string(i), line_no);
        }
    }
    return trace;
}

bool traces_equal(const DebateTrace& a, const DebateTrace& b) {
    auto dump = [](const DebateTrace& t) {
        json j{{"question_id", t.question_id},
               {"method", t.method},
               {"final_answer", to_json(t.final_answer)},
               {"termination_reason", to_string(t.termination_reason)}};
        j["initial"] = json::array();
        for (const auto& r : t.initial_responses) j["initial"].push_back(to_json(r));
        j["events"] = json::array();
        for (const auto& e : t.events) j["events"].push_back(to_json(e));
        return j;
    };
    return dump(a) == dump(b);
}

}  // namespace mad
