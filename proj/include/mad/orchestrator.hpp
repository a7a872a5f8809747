#pragma once

#include "mad/backend.hpp"
#include "mad/core.hpp"

#include <functional>
#include <optional>
#include <set>
#include <utility>
#include <vector>

namespace mad {

struct RunResult {
    AnswerLabel final_answer;
    TerminationReason termination_reason = TerminationReason::BudgetExhausted;
    DebateTrace trace;
    std::vector<CorrectnessState> states;
};

// Budget rule: S * (k + m) with k distinct answer clusters and m the largest
// cluster's size; FixedCap returns the configured value.
int compute_budget(const std::vector<AnswerLabel>& initial_answers, int comms_per_round,
                   const BudgetPolicy& policy);

using ScoreFn = std::function<double(const CorrectnessState&)>;

double default_score(const CorrectnessState& state);

// Highest-score eligible agent; ties broken by lowest agent id. Returns
// nullopt when no agent is eligible.
std::optional<int> select_receiver(const std::vector<CorrectnessState>& states,
                                   const std::vector<bool>& eligible,
                                   const ScoreFn& score = default_score);

// Up to S strongest disagreeing peers whose ordered (sender -> receiver) pair
// has not debated yet, descending score, ties by lowest id.
std::vector<int> select_challengers(int receiver,
                                    const std::vector<CorrectnessState>& states,
                                    const std::set<std::pair<int, int>>& already_debated,
                                    int comms_per_round,
                                    const ScoreFn& score = default_score);

void apply_outcome(CorrectnessState& state, const DebateEvent& event);

// SVR = 1 with at least C observed debates.
bool acceptance_check(const CorrectnessState& state, int acceptance_challengers);

// Per agent: mode of its post-debate answers with the pre-debate answer as
// tiebreaker; overall majority with pre-debate-majority tie-break, then
// lowest-agent-id vote among options still tied.
AnswerLabel fallback_vote(const std::vector<CorrectnessState>& states,
                          const std::vector<AnswerLabel>& initial_answers);

// Majority over a list of answers; ties go to the lowest-index answer among
// the tied options.
AnswerLabel majority_answer(const std::vector<AnswerLabel>& answers);
int max_agreement(const std::vector<AnswerLabel>& answers);

// Hook for swapping the posterior score/acceptance rule while keeping the
// incremental graph-construction control flow (used by the ablation sweep).
class ScoringPolicy {
public:
    virtual ~ScoringPolicy() = default;
    virtual double score(const CorrectnessState& state) const = 0;
    virtual bool accept(const CorrectnessState& state) const = 0;
    virtual void observe(const DebateEvent& event) {}
};

class SvrScoringPolicy : public ScoringPolicy {
public:
    explicit SvrScoringPolicy(int acceptance_challengers)
        : acceptance_challengers_(acceptance_challengers) {}
    double score(const CorrectnessState& state) const override;
    bool accept(const CorrectnessState& state) const override;

private:
    int acceptance_challengers_;
};

// Incremental-graph run with a custom scoring policy; svr_mad is the standard
// instantiation. When shared_initials is provided those responses are used
// instead of fresh generations so all methods share pre-debate state.
RunResult run_incremental(const Question& question, const ExperimentConfig& config,
                          Backend& backend, ScoringPolicy& policy,
                          const std::vector<AgentResponse>* shared_initials = nullptr);

RunResult svr_mad(const Question& question, const ExperimentConfig& config,
                  Backend& backend,
                  const std::vector<AgentResponse>* shared_initials = nullptr);

// Normalized prior scores for a set of initial responses under the configured
// signal kind.
std::vector<double> initial_priors(const std::vector<AgentResponse>& initials,
                                   PriorSignalKind kind);

std::vector<AgentResponse> generate_initials(const Question& question,
                                             const ExperimentConfig& config,
                                             Backend& backend);

}  // namespace mad
