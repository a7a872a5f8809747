#include "mad/baselines.hpp"

#include "mad/errors.hpp"
#include "mad/rng.hpp"
#include "mad/signals.hpp"

#include <algorithm>
#include <functional>

namespace mad::baselines {

namespace {

std::vector<CorrectnessState> make_states(const std::vector<AgentResponse>& initials) {
    std::vector<CorrectnessState> states(initials.size());
    for (std::size_t i = 0; i < initials.size(); ++i) {
        states[i].agent_id = static_cast<int>(i);
        states[i].current_answer = initials[i].answer;
    }
    return states;
}

// Round plan: per receiver, the full-context senders and any answer-only peer
// messages for this round, computed from the round-start snapshot.
struct RoundPlan {
    std::vector<std::vector<int>> senders;                // per receiver
    std::vector<std::vector<AnswerLabel>> answer_only;    // per receiver
};

using PlanFn = std::function<RoundPlan(int round, const std::vector<AnswerLabel>&)>;

// Synchronous-round engine shared by all-to-all, GroupDebate and S2-MAD:
// every receiver regenerates from the round-start snapshot; results are
// applied in ascending agent id. One generation with k senders is recorded as
// k directed events, the first of which carries the generation's token usage.
RunResult run_rounds(const Question& question, const ExperimentConfig& config,
                     Backend& backend, const std::vector<AgentResponse>& initials,
                     const std::string& method, const PlanFn& plan_round) {
    const int n = static_cast<int>(initials.size());

    RunResult result;
    result.trace.question_id = question.id;
    result.trace.method = method;
    result.trace.initial_responses = initials;
    result.states = make_states(initials);

    std::vector<std::vector<AgentResponse>> histories(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) histories[i].push_back(initials[i]);

    TerminationReason reason = TerminationReason::BudgetExhausted;
    for (int round = 1; round <= config.max_rounds; ++round) {
        std::vector<AnswerLabel> snapshot_answers;
        for (const auto& s : result.states) snapshot_answers.push_back(s.current_answer);
        std::vector<AgentResponse> snapshot_latest;
        for (int i = 0; i < n; ++i) snapshot_latest.push_back(histories[i].back());

        RoundPlan plan = plan_round(round, snapshot_answers);
        bool any = false;
        for (const auto& s : plan.senders) any = any || !s.empty();
        if (!any) {
            reason = TerminationReason::Consensus;  // fully pruned
            break;
        }

        std::vector<std::optional<AgentResponse>> posts(static_cast<std::size_t>(n));
        for (int receiver = 0; receiver < n; ++receiver) {
            auto senders = plan.senders[receiver];
            if (senders.empty()) continue;
            std::sort(senders.begin(), senders.end());

            DebateContext ctx;
            ctx.receiver_history = histories[receiver];
            for (int s : senders) ctx.sender_outputs.push_back(snapshot_latest[s]);
            ctx.answer_only_peers = plan.answer_only[receiver];
            ctx.event_index = result.trace.events.size();
            AgentResponse post = backend.debate(question, ctx);

            for (std::size_t k = 0; k < senders.size(); ++k) {
                DebateEvent ev;
                ev.sender_id = senders[k];
                ev.receiver_id = receiver;
                ev.receiver_pre = snapshot_latest[receiver];
                ev.receiver_post = post;
                ev.retained = answers_equal(snapshot_latest[receiver].answer, post.answer);
                ev.sequence_index = static_cast<int>(result.trace.events.size());
                ev.carries_tokens = (k == 0);
                result.trace.events.push_back(ev);
                apply_outcome(result.states[receiver], ev);
            }
            posts[receiver] = std::move(post);
        }
        for (int i = 0; i < n; ++i) {
            if (posts[i]) histories[i].push_back(*posts[i]);
        }

        std::vector<AnswerLabel> current;
        for (const auto& s : result.states) current.push_back(s.current_answer);
        if (round < config.max_rounds &&
            max_agreement(current) >= config.consensus_stop_count) {
            reason = TerminationReason::Consensus;
            break;
        }
    }

    std::vector<AnswerLabel> last_answers;
    for (const auto& s : result.states) last_answers.push_back(s.current_answer);
    result.final_answer = majority_answer(last_answers);
    result.termination_reason = reason;
    result.trace.final_answer = result.final_answer;
    result.trace.termination_reason = reason;
    return result;
}

}  // namespace

GroupingPlan make_grouping_plan(int n_agents, std::uint64_t seed,
                                const std::string& question_id) {
    std::vector<int> ids(static_cast<std::size_t>(n_agents));
    for (int i = 0; i < n_agents; ++i) ids[i] = i;
    rng::Rand rnd(rng::derive_seed(seed, question_id, "grouping", 0));
    for (int i = n_agents - 1; i > 0; --i) {
        std::swap(ids[i], ids[rnd.uniform_int(0, i)]);
    }
    GroupingPlan plan;
    int half = n_agents / 2;
    plan.groups.emplace_back(ids.begin(), ids.begin() + half);
    plan.groups.emplace_back(ids.begin() + half, ids.end());
    return plan;
}

RunResult self_consistency(const Question& question,
                           const std::vector<AgentResponse>& initials) {
    RunResult result;
    result.trace.question_id = question.id;
    result.trace.method = "self_consistency";
    result.trace.initial_responses = initials;
    result.states = make_states(initials);

    std::vector<AnswerLabel> answers;
    for (const auto& r : initials) answers.push_back(r.answer);
    result.final_answer = majority_answer(answers);
    result.termination_reason = TerminationReason::Consensus;
    result.trace.final_answer = result.final_answer;
    result.trace.termination_reason = result.termination_reason;
    return result;
}

RunResult group_debate(const Question& question, const ExperimentConfig& config,
                       Backend& backend, const GroupingPlan& plan,
                       const std::vector<AgentResponse>& initials) {
    const int n = static_cast<int>(initials.size());
    std::vector<int> group_of(static_cast<std::size_t>(n), -1);
    for (std::size_t g = 0; g < plan.groups.size(); ++g) {
        for (int id : plan.groups[g]) group_of[id] = static_cast<int>(g);
    }
    for (int g : group_of) {
        if (g < 0) throw ConfigError("grouping plan does not cover all agents");
    }

    auto plan_round = [&](int, const std::vector<AnswerLabel>& answers) {
        RoundPlan rp;
        rp.senders.resize(static_cast<std::size_t>(n));
        rp.answer_only.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                if (group_of[j] == group_of[i]) {
                    rp.senders[i].push_back(j);
                } else {
                    rp.answer_only[i].push_back(answers[j]);
                }
            }
        }
        return rp;
    };
    auto result = run_rounds(question, config, backend, initials, "group_debate",
                             plan_round);
    return result;
}

RunResult all_to_all_mad(const Question& question, const ExperimentConfig& config,
                         Backend& backend, const std::vector<AgentResponse>& initials) {
    const int n = static_cast<int>(initials.size());
    auto plan_round = [&](int, const std::vector<AnswerLabel>&) {
        RoundPlan rp;
        rp.senders.resize(static_cast<std::size_t>(n));
        rp.answer_only.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if (j != i) rp.senders[i].push_back(j);
            }
        }
        return rp;
    };
    return run_rounds(question, config, backend, initials, "all_to_all", plan_round);
}

RunResult sid_et(const Question& question, const ExperimentConfig& config,
                 Backend& backend, double threshold,
                 const std::vector<AgentResponse>& initials) {
    int best_agent = -1;
    double best_ll = 0.0;
    for (const auto& r : initials) {
        double ll = signals::min_log_likelihood(r.token_logliks);
        if (best_agent < 0 || ll > best_ll) {
            best_agent = r.agent_id;
            best_ll = ll;
        }
    }
    if (best_ll >= threshold) {
        RunResult result;
        result.trace.question_id = question.id;
        result.trace.method = "sid_et";
        result.trace.initial_responses = initials;
        result.states = make_states(initials);
        result.final_answer = initials[static_cast<std::size_t>(best_agent)].answer;
        result.termination_reason = TerminationReason::Accepted;
        result.trace.final_answer = result.final_answer;
        result.trace.termination_reason = result.termination_reason;
        result.trace.accepted_agent = best_agent;
        return result;
    }
    auto result = all_to_all_mad(question, config, backend, initials);
    result.trace.method = "sid_et";
    return result;
}

RunResult s2_mad(const Question& question, const ExperimentConfig& config,
                 Backend& backend, const std::vector<AgentResponse>& initials) {
    const int n = static_cast<int>(initials.size());
    auto plan_round = [&](int, const std::vector<AnswerLabel>& answers) {
        RoundPlan rp;
        rp.senders.resize(static_cast<std::size_t>(n));
        rp.answer_only.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                if (!answers_equal(answers[j], answers[i])) rp.senders[i].push_back(j);
            }
        }
        return rp;
    };
    return run_rounds(question, config, backend, initials, "s2_mad", plan_round);
}

int tune_sid_skip_rate(const std::map<int, RateEvaluation>& evaluations,
                       std::int64_t tok_ref, double acc_ref) {
    for (int rate = 90; rate >= 10; rate -= 10) {
        const auto& ev = evaluations.at(rate);
        if (ev.accuracy >= acc_ref) return rate;
        if (ev.tokens > tok_ref) return rate;
    }
    return 10;
}

double sid_threshold_for_skip_rate(std::vector<double> max_min_lls, int skip_rate_pct) {
    if (max_min_lls.empty()) throw Error("sid_threshold_for_skip_rate: no data");
    std::sort(max_min_lls.begin(), max_min_lls.end(), std::greater<>());
    auto n = static_cast<std::int64_t>(max_min_lls.size());
    std::int64_t k = n * skip_rate_pct / 100;
    if (k <= 0) return max_min_lls.front() + 1.0;  // skip nothing
    if (k >= n) k = n;
    return max_min_lls[static_cast<std::size_t>(k - 1)];
}

}  // namespace mad::baselines
