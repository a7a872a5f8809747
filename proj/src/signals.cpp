#include "mad/signals.hpp"

#include "mad/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <regex>

namespace mad::signals {

double min_log_likelihood(std::span<const double> token_logliks) {
    if (token_logliks.empty()) {
        throw SignalUnavailable("min_log_likelihood: empty token_logliks");
    }
    return *std::min_element(token_logliks.begin(), token_logliks.end());
}

double perplexity(std::span<const double> token_logliks) {
    if (token_logliks.empty()) {
        throw SignalUnavailable("perplexity: empty token_logliks");
    }
    double mean = std::accumulate(token_logliks.begin(), token_logliks.end(), 0.0) /
                  static_cast<double>(token_logliks.size());
    return std::exp(-mean);
}

std::optional<double> extract_self_confidence(const std::string& reasoning) {
    static const std::regex re(R"(confidence\s*[:=]?\s*([0-9]*\.?[0-9]+)\s*(%)?)",
                               std::regex::icase);
    auto begin = std::sregex_iterator(reasoning.begin(), reasoning.end(), re);
    auto end = std::sregex_iterator();
    std::optional<double> last;
    for (auto it = begin; it != end; ++it) {
        double v = std::stod((*it)[1].str());
        if ((*it)[2].matched) v /= 100.0;
        last = std::clamp(v, 0.0, 1.0);
    }
    return last;
}

double prior_signal_value(const AgentResponse& response, PriorSignalKind kind) {
    switch (kind) {
        case PriorSignalKind::MinLL:
            return min_log_likelihood(response.token_logliks);
        case PriorSignalKind::PPL:
            return perplexity(response.token_logliks);
        case PriorSignalKind::Conf: {
            if (response.self_confidence) return *response.self_confidence;
            if (auto parsed = extract_self_confidence(response.reasoning)) return *parsed;
            return 0.5;  // neutral fallback
        }
    }
    throw SignalUnavailable("unknown signal kind");
}

std::vector<double> normalize_priors(const std::vector<SignalValue>& raw) {
    std::vector<double> oriented;
    oriented.reserve(raw.size());
    for (const auto& sv : raw) {
        double v = sv.value;
        if (orientation(sv.kind) == Orientation::LowerIsBetter) v = -v;
        oriented.push_back(v);
    }
    if (oriented.empty()) return {};
    auto [mn_it, mx_it] = std::minmax_element(oriented.begin(), oriented.end());
    double mn = *mn_it, mx = *mx_it;
    std::vector<double> out(oriented.size(), 0.5);
    if (mx > mn) {
        for (std::size_t i = 0; i < oriented.size(); ++i) {
            out[i] = (oriented[i] - mn) / (mx - mn);
        }
    }
    return out;
}

double svr(int debates, int retentions, int changes) {
    if (retentions < 0 || changes < 0 || retentions + changes != debates) {
        throw InvalidCounters("svr: r + c must equal D with non-negative counters");
    }
    if (debates == 0) {
        throw SvrUndefined("svr: no debates observed");
    }
    return static_cast<double>(retentions - changes) / static_cast<double>(debates);
}

double correctness_score(const CorrectnessState& state) {
    if (state.debates > 0) {
        return (svr(state.debates, state.retentions, state.changes) + 1.0) / 2.0;
    }
    return state.prior;
}

double mean_posterior_signal(const std::vector<DebateEvent>& events,
                             PriorSignalKind kind) {
    if (events.empty()) {
        throw SignalUnavailable("mean_posterior_signal: no events");
    }
    double sum = 0.0;
    for (const auto& ev : events) {
        switch (kind) {
            case PriorSignalKind::MinLL:
                sum += min_log_likelihood(ev.receiver_post.token_logliks);
                break;
            case PriorSignalKind::PPL:
                sum += perplexity(ev.receiver_post.token_logliks);
                break;
            case PriorSignalKind::Conf: {
                const auto& resp = ev.receiver_post;
                if (resp.self_confidence) {
                    sum += *resp.self_confidence;
                } else if (auto parsed = extract_self_confidence(resp.reasoning)) {
                    sum += *parsed;
                } else {
                    throw SignalUnavailable("mean_posterior_signal: confidence absent");
                }
                break;
            }
        }
    }
    return sum / static_cast<double>(events.size());
}

}  // namespace mad::signals
