#pragma once

#include "mad/core.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace mad {

// Inputs to one post-debate regeneration. sender_outputs carry full peer
// context (ascending agent_id); answer_only_peers are final-answer-only
// messages (GroupDebate cross-group publications) that reach the prompt but
// are not full context transfers.
struct DebateContext {
    std::vector<AgentResponse> receiver_history;  // turn 0..t, last = current
    std::vector<AgentResponse> sender_outputs;    // non-empty
    std::vector<AnswerLabel> answer_only_peers;
    std::uint64_t event_index = 0;  // per-question event counter, seeds the draw
};

// Deterministic debate prompt: question, the receiver's own prior turns, peer
// solutions in ascending agent_id, then a reflection instruction.
std::string format_debate_prompt(const Question& question,
                                 const std::vector<AgentResponse>& receiver_history,
                                 const std::vector<AgentResponse>& peer_outputs,
                                 const std::vector<AnswerLabel>& answer_only_peers = {},
                                 const std::string& hint_override = "");

std::string format_initial_prompt(const Question& question, bool elicit_confidence);

class Backend {
public:
    virtual ~Backend() = default;

    virtual AgentResponse generate_initial(const Question& question, int agent_id) = 0;

    virtual AgentResponse debate(const Question& question, const DebateContext& ctx) = 0;
};

// Seeded behavioral simulator. Every draw is keyed on
// (seed, question id, tag, index) so runs are deterministic regardless of
// scheduling.
class SimulatedBackend : public Backend {
public:
    SimulatedBackend(SimParams params, std::uint64_t seed, bool elicit_confidence = true);

    AgentResponse generate_initial(const Question& question, int agent_id) override;
    AgentResponse debate(const Question& question, const DebateContext& ctx) override;

private:
    AgentResponse synthesize(const Question& question, int agent_id, int turn,
                             const AnswerLabel& answer, std::uint64_t draw_seed,
                             std::int64_t extra_input_tokens);

    SimParams params_;
    std::uint64_t seed_;
    bool elicit_confidence_;
};

// Replays stored traces; generate_initial/debate return the recorded
// responses keyed by (question id, agent) and (question id, event index).
class ReplayBackend : public Backend {
public:
    explicit ReplayBackend(const std::string& trace_dir);

    AgentResponse generate_initial(const Question& question, int agent_id) override;
    AgentResponse debate(const Question& question, const DebateContext& ctx) override;

    void add_trace(const DebateTrace& trace);  // for in-memory replay

private:
    const DebateTrace& trace_for(const std::string& question_id) const;
    std::map<std::string, DebateTrace> traces_;
};

// OpenAI-compatible chat-completions client with logprobs and retries.
// API key is read from MAD_API_KEY.
class HttpBackend : public Backend {
public:
    HttpBackend(std::string endpoint, std::string model, SamplingParams sampling,
                bool elicit_confidence = false, int max_attempts = 3,
                int backoff_initial_ms = 250);

    AgentResponse generate_initial(const Question& question, int agent_id) override;
    AgentResponse debate(const Question& question, const DebateContext& ctx) override;

private:
    AgentResponse complete(const std::string& prompt, int agent_id, int turn);

    std::string endpoint_;
    std::string model_;
    SamplingParams sampling_;
    bool elicit_confidence_;
    int max_attempts_;
    int backoff_initial_ms_;
};

std::unique_ptr<Backend> make_backend(const BackendDescriptor& desc, std::uint64_t seed,
                                      bool elicit_confidence);

}  // namespace mad
