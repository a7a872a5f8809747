#pragma once

#include "mad/backend.hpp"
#include "mad/core.hpp"
#include "mad/orchestrator.hpp"

#include <map>
#include <vector>

namespace mad::baselines {

struct GroupingPlan {
    std::vector<std::vector<int>> groups;  // disjoint, covering all agents
};

// Default 3-3 split with seeded random assignment.
GroupingPlan make_grouping_plan(int n_agents, std::uint64_t seed,
                                const std::string& question_id);

RunResult self_consistency(const Question& question,
                           const std::vector<AgentResponse>& initials);

// Full-context all-to-all within each group; final answers published across
// groups between rounds. Cross-group answer messages are token-counted but do
// not count toward NComm.
RunResult group_debate(const Question& question, const ExperimentConfig& config,
                       Backend& backend, const GroupingPlan& plan,
                       const std::vector<AgentResponse>& initials);

// Skip debate entirely when one agent's pre-debate min-LL clears the
// threshold; otherwise run all-to-all MAD with the consensus stop.
RunResult sid_et(const Question& question, const ExperimentConfig& config,
                 Backend& backend, double threshold,
                 const std::vector<AgentResponse>& initials);

// Link pruning by answer equivalence: j sends to i iff their round-start
// answers differ; agents with no incoming messages do not regenerate.
RunResult s2_mad(const Question& question, const ExperimentConfig& config,
                 Backend& backend, const std::vector<AgentResponse>& initials);

// Synchronous all-to-all MAD (every agent receives every peer each round),
// bounded by config.max_rounds with the consensus stop. Backbone of SID-ET's
// non-skip path.
RunResult all_to_all_mad(const Question& question, const ExperimentConfig& config,
                         Backend& backend, const std::vector<AgentResponse>& initials);

struct RateEvaluation {
    std::int64_t tokens = 0;
    double accuracy = 0.0;
};

// Skip-rate scan from 90 down to 10: first rate whose accuracy reaches the
// reference, else first rate whose token cost exceeds the reference, else 10.
int tune_sid_skip_rate(const std::map<int, RateEvaluation>& evaluations,
                       std::int64_t tok_ref, double acc_ref);

// Threshold over per-question max min-LL that skips approximately
// `skip_rate_pct` percent of questions.
double sid_threshold_for_skip_rate(std::vector<double> max_min_lls, int skip_rate_pct);

}  // namespace mad::baselines
