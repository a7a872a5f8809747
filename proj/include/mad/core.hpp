#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mad {

// An answer as emitted by an agent plus its normalized form. Equality of
// canonical forms is the engine-wide definition of answer equivalence.
// Unparseable/empty answers all share one canonical value (empty string).
struct AnswerLabel {
    std::string raw;
    std::string canonical;

    bool is_empty() const { return canonical.empty(); }
};

// Normalization: trim, case-fold, strip trailing punctuation, collapse
// whitespace runs, canonical decimal form for numbers ("007" == "7" == "7.0"),
// single multiple-choice letters map to an uppercase letter.
AnswerLabel canonicalize(std::string_view raw);

bool answers_equal(const AnswerLabel& a, const AnswerLabel& b);

inline bool operator==(const AnswerLabel& a, const AnswerLabel& b) {
    return a.canonical == b.canonical;
}

struct Question {
    std::string id;
    std::string text;
    std::optional<AnswerLabel> gold_answer;  // absent in live serving
};

struct AgentResponse {
    int agent_id = 0;
    int turn = 0;
    std::string reasoning;
    AnswerLabel answer;
    std::vector<double> token_logliks;  // natural-log token probabilities, <= 0
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
    std::optional<double> self_confidence;  // in [0,1] when present
};

// Per-agent scoring state. debates/retentions/changes are the D/r/c counters;
// retentions + changes == debates always holds.
struct CorrectnessState {
    int agent_id = 0;
    double prior = 0.5;  // normalized to [0,1]
    int debates = 0;
    int retentions = 0;
    int changes = 0;
    AnswerLabel current_answer;
    std::vector<AnswerLabel> post_debate_answers;
    bool accepted = false;
};

// One directed context transfer. In all-to-all style rounds a single
// regeneration consumes several peer messages; each transfer is recorded as
// its own event and exactly one of them carries the generation's token usage.
struct DebateEvent {
    int sender_id = 0;
    int receiver_id = 0;
    AgentResponse receiver_pre;
    AgentResponse receiver_post;
    bool retained = false;
    int sequence_index = 0;
    bool counted_comm = true;    // contributes to NComm
    bool carries_tokens = true;  // contributes receiver_post token usage to Tok
};

enum class TerminationReason { Accepted, BudgetExhausted, Consensus };

std::string to_string(TerminationReason r);
TerminationReason termination_reason_from_string(const std::string& s);

struct DebateTrace {
    std::string question_id;
    std::string method;
    std::vector<AgentResponse> initial_responses;
    std::vector<DebateEvent> events;
    AnswerLabel final_answer;
    TerminationReason termination_reason = TerminationReason::Consensus;
    std::optional<int> accepted_agent;  // set when termination_reason == Accepted
};

enum class PriorSignalKind { MinLL, PPL, Conf };

std::string to_string(PriorSignalKind k);
PriorSignalKind prior_signal_from_string(const std::string& s);

struct BudgetPolicy {
    enum class Kind { ClusterScaled, FixedCap };
    Kind kind = Kind::ClusterScaled;
    int fixed_cap = 0;
};

struct SamplingParams {
    double temperature = 1.0;
    double top_p = 0.95;
    int top_k = 40;
    int max_output_tokens = 16384;
    std::string reasoning_effort = "medium";
};

// Behavior knobs for the seeded simulator. The retention matrix is indexed by
// (receiver currently correct, sender correct); prior_separation controls how
// informative the synthetic prior signals are (0 models the hallucination
// regime where priors carry no information).
struct SimParams {
    double p_correct = 0.5;
    int answer_pool_size = 4;  // distinct wrong answers
    double p_retain_correct_vs_correct = 0.95;
    double p_retain_correct_vs_wrong = 0.9;
    double p_retain_wrong_vs_correct = 0.35;
    double p_retain_wrong_vs_wrong = 0.6;
    double adopt_prob = 0.8;  // on change: adopt sender's answer vs new wrong one
    double prior_separation = 1.0;
    double input_tokens_mean = 800.0;
    double input_tokens_stddev = 100.0;
    double output_tokens_mean = 300.0;
    double output_tokens_stddev = 60.0;
    double loglik_base_mean = -2.0;
    double loglik_stddev = 0.8;
    int loglik_tokens = 32;

    double p_retain(bool receiver_correct, bool sender_correct) const {
        if (receiver_correct) {
            return sender_correct ? p_retain_correct_vs_correct
                                  : p_retain_correct_vs_wrong;
        }
        return sender_correct ? p_retain_wrong_vs_correct : p_retain_wrong_vs_wrong;
    }
};

struct BackendDescriptor {
    enum class Kind { Simulated, Replay, Http };
    Kind kind = Kind::Simulated;
    SimParams sim;
    std::string trace_dir;  // Replay
    std::string endpoint;   // Http
    std::string model;      // Http
    SamplingParams sampling;
};

struct ExperimentConfig {
    int n_agents = 6;
    int comms_per_round = 2;        // S
    int acceptance_challengers = 2; // C
    PriorSignalKind prior_signal = PriorSignalKind::MinLL;
    BudgetPolicy budget;
    int max_rounds = 2;             // baselines only
    int consensus_stop_count = 5;
    BackendDescriptor backend;
    std::uint64_t seed = 0;
};

// Extracts the answer from a generated response body: last line matching
// "Answer: <...>" (case-insensitive); no match yields the EMPTY label.
AnswerLabel extract_answer(const std::string& reasoning);

}  // namespace mad
