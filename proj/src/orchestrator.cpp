#include "mad/orchestrator.hpp"

#include "mad/errors.hpp"
#include "mad/signals.hpp"

#include <algorithm>
#include <map>

namespace mad {

int compute_budget(const std::vector<AnswerLabel>& initial_answers, int comms_per_round,
                   const BudgetPolicy& policy) {
    if (policy.kind == BudgetPolicy::Kind::FixedCap) return policy.fixed_cap;
    std::map<std::string, int> clusters;
    for (const auto& a : initial_answers) ++clusters[a.canonical];
    int k = static_cast<int>(clusters.size());
    int m = 0;
    for (const auto& [_, n] : clusters) m = std::max(m, n);
    return comms_per_round * (k + m);
}

double default_score(const CorrectnessState& state) {
    return signals::correctness_score(state);
}

std::optional<int> select_receiver(const std::vector<CorrectnessState>& states,
                                   const std::vector<bool>& eligible,
                                   const ScoreFn& score) {
    std::optional<int> best;
    double best_score = 0.0;
    for (std::size_t i = 0; i < states.size(); ++i) {
        if (!eligible[i]) continue;
        double s = score(states[i]);
        if (!best || s > best_score) {
            best = static_cast<int>(i);
            best_score = s;
        }
    }
    return best;
}

std::vector<int> select_challengers(int receiver,
                                    const std::vector<CorrectnessState>& states,
                                    const std::set<std::pair<int, int>>& already_debated,
                                    int comms_per_round, const ScoreFn& score) {
    const AnswerLabel& receiver_answer = states[receiver].current_answer;
    std::vector<int> disagree;
    for (std::size_t j = 0; j < states.size(); ++j) {
        int id = static_cast<int>(j);
        if (id == receiver) continue;
        if (answers_equal(states[j].current_answer, receiver_answer)) continue;
        if (already_debated.count({id, receiver}) != 0) continue;
        disagree.push_back(id);
    }
    std::stable_sort(disagree.begin(), disagree.end(), [&](int a, int b) {
        double sa = score(states[a]), sb = score(states[b]);
        if (sa != sb) return sa > sb;
        return a < b;
    });
    if (static_cast<int>(disagree.size()) > comms_per_round) {
        disagree.resize(static_cast<std::size_t>(comms_per_round));
    }
    return disagree;
}

void apply_outcome(CorrectnessState& state, const DebateEvent& event) {
    if (event.receiver_id != state.agent_id) {
        throw InvalidCounters("apply_outcome: event receiver does not match state");
    }
    ++state.debates;
    if (event.retained) {
        ++state.retentions;
    } else {
        ++state.changes;
    }
    state.current_answer = event.receiver_post.answer;
    state.post_debate_answers.push_back(event.receiver_post.answer);
}

bool acceptance_check(const CorrectnessState& state, int acceptance_challengers) {
    return state.changes == 0 && state.debates >= acceptance_challengers;
}

namespace {

// Mode of `answers`; on ties returns the answer of the lowest index whose
// canonical form is among the tied options. Empty input yields EMPTY.
AnswerLabel mode_lowest_index(const std::vector<AnswerLabel>& answers) {
    std::map<std::string, int> counts;
    for (const auto& a : answers) ++counts[a.canonical];
    int best = 0;
    for (const auto& [_, n] : counts) best = std::max(best, n);
    for (const auto& a : answers) {
        if (counts[a.canonical] == best) return a;
    }
    return canonicalize("");
}

}  // namespace

AnswerLabel majority_answer(const std::vector<AnswerLabel>& answers) {
    return mode_lowest_index(answers);
}

int max_agreement(const std::vector<AnswerLabel>& answers) {
    std::map<std::string, int> counts;
    for (const auto& a : answers) ++counts[a.canonical];
    int best = 0;
    for (const auto& [_, n] : counts) best = std::max(best, n);
    return best;
}

AnswerLabel fallback_vote(const std::vector<CorrectnessState>& states,
                          const std::vector<AnswerLabel>& initial_answers) {
    const std::size_t n = states.size();

    // per-agent vote: mode of observed post-debate answers, ties (and empty
    // histories) resolve to the pre-debate answer
    std::vector<AnswerLabel> votes;
    votes.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& history = states[i].post_debate_answers;
        if (history.empty()) {
            votes.push_back(initial_answers[i]);
            continue;
        }
        std::map<std::string, int> counts;
        for (const auto& a : history) ++counts[a.canonical];
        int best = 0;
        int n_best = 0;
        for (const auto& [_, c] : counts) {
            if (c > best) {
                best = c;
                n_best = 1;
            } else if (c == best) {
                ++n_best;
            }
        }
        if (n_best > 1) {
            votes.push_back(initial_answers[i]);
        } else {
            for (const auto& a : history) {
                if (counts[a.canonical] == best) {
                    votes.push_back(a);
                    break;
                }
            }
        }
    }

    // majority over votes
    std::map<std::string, int> vote_counts;
    for (const auto& v : votes) ++vote_counts[v.canonical];
    int best = 0;
    for (const auto& [_, c] : vote_counts) best = std::max(best, c);
    std::set<std::string> tied;
    for (const auto& [canon, c] : vote_counts) {
        if (c == best) tied.insert(canon);
    }
    if (tied.size() > 1) {
        // pre-debate majority among the tied options
        std::map<std::string, int> pre_counts;
        for (const auto& y : initial_answers) ++pre_counts[y.canonical];
        int pre_best = -1;
        for (const auto& canon : tied) {
            auto it = pre_counts.find(canon);
            int c = it == pre_counts.end() ? 0 : it->second;
            pre_best = std::max(pre_best, c);
        }
        std::set<std::string> still_tied;
        for (const auto& canon : tied) {
            auto it = pre_counts.find(canon);
            int c = it == pre_counts.end() ? 0 : it->second;
            if (c == pre_best) still_tied.insert(canon);
        }
        tied = std::move(still_tied);
    }
    for (const auto& v : votes) {
        if (tied.count(v.canonical) != 0) return v;
    }
    return votes.empty() ? canonicalize("") : votes.front();
}

double SvrScoringPolicy::score(const CorrectnessState& state) const {
    return signals::correctness_score(state);
}

bool SvrScoringPolicy::accept(const CorrectnessState& state) const {
    return acceptance_check(state, acceptance_challengers_);
}

std::vector<double> initial_priors(const std::vector<AgentResponse>& initials,
                                   PriorSignalKind kind) {
    std::vector<signals::SignalValue> raw;
    raw.reserve(initials.size());
    for (const auto& r : initials) {
        raw.push_back({kind, signals::prior_signal_value(r, kind)});
    }
    return signals::normalize_priors(raw);
}

std::vector<AgentResponse> generate_initials(const Question& question,
                                             const ExperimentConfig& config,
                                             Backend& backend) {
    std::vector<AgentResponse> initials;
    initials.reserve(static_cast<std::size_t>(config.n_agents));
    for (int i = 0; i < config.n_agents; ++i) {
        initials.push_back(backend.generate_initial(question, i));
    }
    return initials;
}

RunResult run_incremental(const Question& question, const ExperimentConfig& config,
                          Backend& backend, ScoringPolicy& policy,
                          const std::vector<AgentResponse>* shared_initials) {
    RunResult result;
    result.trace.question_id = question.id;
    result.trace.method = "svr_mad";

    std::vector<AgentResponse> initials =
        shared_initials ? *shared_initials : generate_initials(question, config, backend);
    result.trace.initial_responses = initials;

    const int n = static_cast<int>(initials.size());
    std::vector<AnswerLabel> initial_answers;
    for (const auto& r : initials) initial_answers.push_back(r.answer);

    std::vector<double> priors = initial_priors(initials, config.prior_signal);
    std::vector<CorrectnessState> states(static_cast<std::size_t>(n));
    std::vector<std::vector<AgentResponse>> histories(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        states[i].agent_id = i;
        states[i].prior = priors[i];
        states[i].current_answer = initial_answers[i];
        histories[i].push_back(initials[i]);
    }

    auto finish = [&](AnswerLabel answer, TerminationReason reason,
                      std::optional<int> accepted_agent) {
        result.final_answer = std::move(answer);
        result.termination_reason = reason;
        result.trace.final_answer = result.final_answer;
        result.trace.termination_reason = reason;
        result.trace.accepted_agent = accepted_agent;
        result.states = std::move(states);
        return result;
    };

    // pre-debate clear consensus
    if (max_agreement(initial_answers) >= config.consensus_stop_count) {
        return finish(majority_answer(initial_answers), TerminationReason::Consensus,
                      std::nullopt);
    }

    int budget = compute_budget(initial_answers, config.comms_per_round, config.budget);
    std::set<std::pair<int, int>> used_pairs;
    auto score = [&policy](const CorrectnessState& s) { return policy.score(s); };

    while (budget > 0) {
        std::vector<bool> eligible(static_cast<std::size_t>(n), false);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                if (answers_equal(states[j].current_answer, states[i].current_answer)) {
                    continue;
                }
                if (used_pairs.count({j, i}) != 0) continue;
                eligible[i] = true;
                break;
            }
        }
        auto receiver_opt = select_receiver(states, eligible, score);
        if (!receiver_opt) break;  // NoReceiver -> fallback
        int receiver = *receiver_opt;

        std::vector<int> challengers =
            select_challengers(receiver, states, used_pairs, config.comms_per_round,
                               score);
        if (static_cast<int>(challengers.size()) > budget) {
            challengers.resize(static_cast<std::size_t>(budget));
        }
        // outcomes are order-independent counter updates; execute and apply
        // in ascending sender id for determinism
        std::sort(challengers.begin(), challengers.end());

        const AgentResponse snapshot = histories[receiver].back();
        std::vector<AgentResponse> posts;
        for (int sender : challengers) {
            DebateContext ctx;
            ctx.receiver_history = histories[receiver];
            ctx.sender_outputs = {histories[sender].back()};
            ctx.event_index = result.trace.events.size() + posts.size();
            posts.push_back(backend.debate(question, ctx));
        }
        for (std::size_t i = 0; i < challengers.size(); ++i) {
            DebateEvent ev;
            ev.sender_id = challengers[i];
            ev.receiver_id = receiver;
            ev.receiver_pre = snapshot;
            ev.receiver_post = posts[i];
            ev.retained = answers_equal(snapshot.answer, posts[i].answer);
            ev.sequence_index = static_cast<int>(result.trace.events.size());
            result.trace.events.push_back(ev);
            used_pairs.insert({challengers[i], receiver});
            apply_outcome(states[receiver], ev);
            policy.observe(ev);
            histories[receiver].push_back(posts[i]);
            --budget;
        }

        if (policy.accept(states[receiver])) {
            states[receiver].accepted = true;
            return finish(states[receiver].current_answer, TerminationReason::Accepted,
                          receiver);
        }
    }

    return finish(fallback_vote(states, initial_answers),
                  TerminationReason::BudgetExhausted, std::nullopt);
}

RunResult svr_mad(const Question& question, const ExperimentConfig& config,
                  Backend& backend, const std::vector<AgentResponse>* shared_initials) {
    SvrScoringPolicy policy(config.acceptance_challengers);
    return run_incremental(question, config, backend, policy, shared_initials);
}

}  // namespace mad
