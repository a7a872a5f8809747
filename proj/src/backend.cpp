#include "mad/backend.hpp"

#include "mad/errors.hpp"
#include "mad/rng.hpp"
#include "mad/signals.hpp"
#include "mad/trace_io.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <thread>

namespace mad {

namespace {

const char* kDefaultDebateHint =
    "Using the solutions from other agents as additional information, reflect on "
    "your reasoning and provide an updated answer.";

const char* kAnswerInstruction =
    "End your response with a line 'Answer: <your final answer>'.";

const char* kConfidenceInstruction =
    "State your confidence as 'Confidence: <0-1>'.";

}  // namespace

std::string format_initial_prompt(const Question& question, bool elicit_confidence) {
    std::ostringstream out;
    out << "Solve the following problem. Think step by step.\n\n"
        << question.text << "\n\n"
        << kAnswerInstruction;
    if (elicit_confidence) out << " " << kConfidenceInstruction;
    return out.str();
}

std::string format_debate_prompt(const Question& question,
                                 const std::vector<AgentResponse>& receiver_history,
                                 const std::vector<AgentResponse>& peer_outputs,
                                 const std::vector<AnswerLabel>& answer_only_peers,
                                 const std::string& hint_override) {
    if (peer_outputs.empty()) {
        throw Error("format_debate_prompt: peer_outputs must be non-empty");
    }
    std::vector<const AgentResponse*> peers;
    peers.reserve(peer_outputs.size());
    for (const auto& p : peer_outputs) peers.push_back(&p);
    std::sort(peers.begin(), peers.end(),
              [](const AgentResponse* a, const AgentResponse* b) {
                  return a->agent_id < b->agent_id;
              });

    std::ostringstream out;
    out << question.text << "\n\n";
    if (!receiver_history.empty()) {
        out << "Your previous responses:\n";
        for (const auto& r : receiver_history) {
            out << "[turn " << r.turn << "] " << r.reasoning << "\n";
        }
        out << "\n";
    }
    out << "These are the solutions from other agents:\n";
    for (const auto* p : peers) {
        out << "Agent " << p->agent_id << " solution: " << p->reasoning << "\n";
    }
    if (!answer_only_peers.empty()) {
        out << "\nFinal answers reported by agents in other groups:";
        for (const auto& a : answer_only_peers) out << " " << a.raw << ";";
        out << "\n";
    }
    out << "\n" << (hint_override.empty() ? kDefaultDebateHint : hint_override)
        << " " << kAnswerInstruction;
    return out.str();
}

// ---------------------------------------------------------------------------
// SimulatedBackend

SimulatedBackend::SimulatedBackend(SimParams params, std::uint64_t seed,
                                   bool elicit_confidence)
    : params_(std::move(params)), seed_(seed), elicit_confidence_(elicit_confidence) {}

AgentResponse SimulatedBackend::synthesize(const Question& question, int agent_id,
                                           int turn, const AnswerLabel& answer,
                                           std::uint64_t draw_seed,
                                           std::int64_t extra_input_tokens) {
    rng::Rand rnd(rng::mix(draw_seed, 0x5e57a11u));
    const bool correct =
        question.gold_answer && answers_equal(answer, *question.gold_answer);

    AgentResponse resp;
    resp.agent_id = agent_id;
    resp.turn = turn;
    resp.answer = answer;

    double ll_mean = params_.loglik_base_mean +
                     (correct ? params_.prior_separation : 0.0);
    resp.token_logliks.reserve(static_cast<std::size_t>(params_.loglik_tokens));
    for (int i = 0; i < params_.loglik_tokens; ++i) {
        resp.token_logliks.push_back(
            std::min(0.0, rnd.normal(ll_mean, params_.loglik_stddev)));
    }

    resp.output_tokens = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::llround(
               rnd.normal(params_.output_tokens_mean, params_.output_tokens_stddev))));
    resp.input_tokens =
        std::max<std::int64_t>(
            1, static_cast<std::int64_t>(std::llround(rnd.normal(
                   params_.input_tokens_mean, params_.input_tokens_stddev)))) +
        extra_input_tokens;

    double conf_mean =
        0.5 + (correct ? 0.25 * std::min(params_.prior_separation, 2.0) : 0.0);
    double conf = std::clamp(rnd.normal(conf_mean, 0.12), 0.0, 1.0);
    resp.self_confidence = conf;

    std::ostringstream reasoning;
    reasoning << "Simulated reasoning for question " << question.id << " (agent "
              << agent_id << ", turn " << turn << ").\nAnswer: " << answer.raw;
    if (elicit_confidence_) {
        reasoning << "\nConfidence: " << conf;
    }
    resp.reasoning = reasoning.str();
    return resp;
}

AgentResponse SimulatedBackend::generate_initial(const Question& question,
                                                 int agent_id) {
    if (!question.gold_answer) {
        throw Error("SimulatedBackend requires a gold answer on every question");
    }
    std::uint64_t s = rng::derive_seed(seed_, question.id, "init",
                                       static_cast<std::uint64_t>(agent_id));
    rng::Rand rnd(s);

    AnswerLabel answer;
    if (rnd.bernoulli(params_.p_correct)) {
        answer = *question.gold_answer;
    } else {
        int pick = rnd.uniform_int(0, params_.answer_pool_size - 1);
        answer = canonicalize("alt-" + std::to_string(pick));
        if (answers_equal(answer, *question.gold_answer)) {
            answer = canonicalize("alt-x" + std::to_string(pick));
        }
    }
    return synthesize(question, agent_id, 0, answer, rng::mix(s, 1), 0);
}

AgentResponse SimulatedBackend::debate(const Question& question,
                                       const DebateContext& ctx) {
    if (!question.gold_answer) {
        throw Error("SimulatedBackend requires a gold answer on every question");
    }
    if (ctx.receiver_history.empty() || ctx.sender_outputs.empty()) {
        throw Error("SimulatedBackend::debate: receiver history and senders required");
    }
    const AgentResponse& current = ctx.receiver_history.back();
    const AnswerLabel& gold = *question.gold_answer;

    std::uint64_t s = rng::derive_seed(seed_, question.id, "debate", ctx.event_index);
    rng::Rand rnd(s);

    std::vector<const AgentResponse*> senders;
    for (const auto& so : ctx.sender_outputs) senders.push_back(&so);
    std::sort(senders.begin(), senders.end(),
              [](const AgentResponse* a, const AgentResponse* b) {
                  return a->agent_id < b->agent_id;
              });

    AnswerLabel answer = current.answer;
    for (const auto* sender : senders) {
        bool own_correct = answers_equal(answer, gold);
        bool sender_correct = answers_equal(sender->answer, gold);
        if (rnd.bernoulli(params_.p_retain(own_correct, sender_correct))) {
            continue;  // retained against this challenger
        }
        if (rnd.bernoulli(params_.adopt_prob)) {
            answer = sender->answer;
        } else {
            // switch to some other wrong answer
            for (int attempt = 0; attempt < 8; ++attempt) {
                int pick = rnd.uniform_int(0, params_.answer_pool_size - 1);
                AnswerLabel candidate = canonicalize("alt-" + std::to_string(pick));
                if (!answers_equal(candidate, gold) && !answers_equal(candidate, answer)) {
                    answer = candidate;
                    break;
                }
            }
        }
    }

    std::int64_t extra_input =
        150 * static_cast<std::int64_t>(ctx.sender_outputs.size()) +
        15 * static_cast<std::int64_t>(ctx.answer_only_peers.size());
    return synthesize(question, current.agent_id, current.turn + 1, answer,
                      rng::mix(s, 2), extra_input);
}

// ---------------------------------------------------------------------------
// ReplayBackend

ReplayBackend::ReplayBackend(const std::string& trace_dir) {
    if (trace_dir.empty()) return;
    namespace fs = std::filesystem;
    if (!fs::exists(trace_dir)) {
        throw TraceIncomplete("replay trace dir does not exist: " + trace_dir);
    }
    for (const auto& entry : fs::recursive_directory_iterator(trace_dir)) {
        if (!entry.is_regular_file()) continue;
        if (entry.path().extension() != ".jsonl") continue;
        add_trace(load_trace(entry.path()));
    }
}

void ReplayBackend::add_trace(const DebateTrace& trace) {
    traces_[trace.question_id] = trace;
}

const DebateTrace& ReplayBackend::trace_for(const std::string& question_id) const {
    auto it = traces_.find(question_id);
    if (it == traces_.end()) {
        throw TraceIncomplete("no trace for question " + question_id);
    }
    return it->second;
}

AgentResponse ReplayBackend::generate_initial(const Question& question, int agent_id) {
    const auto& trace = trace_for(question.id);
    for (const auto& r : trace.initial_responses) {
        if (r.agent_id == agent_id) return r;
    }
    throw TraceIncomplete("no turn-0 response for agent " + std::to_string(agent_id) +
                          " in question " + question.id);
}

AgentResponse ReplayBackend::debate(const Question& question, const DebateContext& ctx) {
    const auto& trace = trace_for(question.id);
    if (ctx.event_index >= trace.events.size()) {
        throw TraceIncomplete("trace for question " + question.id +
                              " has no event " + std::to_string(ctx.event_index));
    }
    const DebateEvent& ev = trace.events[ctx.event_index];
    if (!ctx.receiver_history.empty() &&
        ev.receiver_id != ctx.receiver_history.back().agent_id) {
        throw TraceIncomplete("replay divergence: event " +
                              std::to_string(ctx.event_index) + " receiver mismatch");
    }
    return ev.receiver_post;
}

// ---------------------------------------------------------------------------
// HttpBackend

HttpBackend::HttpBackend(std::string endpoint, std::string model,
                         SamplingParams sampling, bool elicit_confidence,
                         int max_attempts, int backoff_initial_ms)
    : endpoint_(std::move(endpoint)),
      model_(std::move(model)),
      sampling_(std::move(sampling)),
      elicit_confidence_(elicit_confidence),
      max_attempts_(max_attempts),
      backoff_initial_ms_(backoff_initial_ms) {}

AgentResponse HttpBackend::complete(const std::string& prompt, int agent_id, int turn) {
    using nlohmann::json;

    json body{{"model", model_},
              {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
              {"temperature", sampling_.temperature},
              {"top_p", sampling_.top_p},
              {"top_k", sampling_.top_k},
              {"max_tokens", sampling_.max_output_tokens},
              {"logprobs", true}};

    httplib::Headers headers;
    if (const char* key = std::getenv("MAD_API_KEY"); key != nullptr && *key != '\0') {
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    std::string last_error;
    int backoff_ms = backoff_initial_ms_;
    for (int attempt = 1; attempt <= max_attempts_; ++attempt) {
        if (attempt > 1) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
            backoff_ms *= 2;
        }
        httplib::Client client(endpoint_);
        client.set_read_timeout(600, 0);
        auto res = client.Post("/v1/chat/completions", headers, body.dump(),
                               "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "http status " + std::to_string(res->status);
            continue;
        }
        try {
            json j = json::parse(res->body);
            const json& choice = j.at("choices").at(0);
            std::string content = choice.at("message").at("content").get<std::string>();

            AgentResponse resp;
            resp.agent_id = agent_id;
            resp.turn = turn;
            resp.reasoning = content;
            resp.answer = extract_answer(content);  // no match -> EMPTY
            if (choice.contains("logprobs") && !choice.at("logprobs").is_null()) {
                for (const auto& tok : choice.at("logprobs").at("content")) {
                    resp.token_logliks.push_back(tok.at("logprob").get<double>());
                }
            }
            if (j.contains("usage")) {
                resp.input_tokens = j.at("usage").value("prompt_tokens", 0);
                resp.output_tokens = j.at("usage").value("completion_tokens", 0);
            }
            resp.self_confidence = signals::extract_self_confidence(content);
            return resp;
        } catch (const json::exception& e) {
            last_error = std::string("response parse error: ") + e.what();
        }
    }
    throw BackendError("chat completion failed after " + std::to_string(max_attempts_) +
                           " attempts: " + last_error,
                       /*retryable=*/true, max_attempts_);
}

AgentResponse HttpBackend::generate_initial(const Question& question, int agent_id) {
    return complete(format_initial_prompt(question, elicit_confidence_), agent_id, 0);
}

AgentResponse HttpBackend::debate(const Question& question, const DebateContext& ctx) {
    if (ctx.receiver_history.empty() || ctx.sender_outputs.empty()) {
        throw Error("HttpBackend::debate: receiver history and senders required");
    }
    std::string prompt = format_debate_prompt(question, ctx.receiver_history,
                                              ctx.sender_outputs, ctx.answer_only_peers);
    const AgentResponse& current = ctx.receiver_history.back();
    return complete(prompt, current.agent_id, current.turn + 1);
}

std::unique_ptr<Backend> make_backend(const BackendDescriptor& desc, std::uint64_t seed,
                                      bool elicit_confidence) {
    switch (desc.kind) {
        case BackendDescriptor::Kind::Simulated:
            return std::make_unique<SimulatedBackend>(desc.sim, seed, elicit_confidence);
        case BackendDescriptor::Kind::Replay:
            return std::make_unique<ReplayBackend>(desc.trace_dir);
        case BackendDescriptor::Kind::Http:
            return std::make_unique<HttpBackend>(desc.endpoint, desc.model,
                                                 desc.sampling, elicit_confidence);
    }
    throw ConfigError("unknown backend kind");
}

}  // namespace mad
