#pragma once

#include "mad/core.hpp"

#include <optional>
#include <span>
#include <vector>

namespace mad::signals {

enum class Orientation { HigherIsBetter, LowerIsBetter };

struct SignalValue {
    PriorSignalKind kind = PriorSignalKind::MinLL;
    double value = 0.0;
};

constexpr Orientation orientation(PriorSignalKind k) {
    return k == PriorSignalKind::PPL ? Orientation::LowerIsBetter
                                     : Orientation::HigherIsBetter;
}

// Minimum per-token log-likelihood; throws SignalUnavailable on empty input.
double min_log_likelihood(std::span<const double> token_logliks);

// exp(-mean log-likelihood); >= 1 when all logliks <= 0.
double perplexity(std::span<const double> token_logliks);

// Parses the LAST "Confidence: <number>[%]" occurrence (case-insensitive);
// percent values divided by 100, result clamped to [0,1].
std::optional<double> extract_self_confidence(const std::string& reasoning);

// Prior signal for one response under the configured kind. For Conf, falls
// back to parsing the reasoning text and finally to the neutral 0.5.
double prior_signal_value(const AgentResponse& response, PriorSignalKind kind);

// Min-max normalization within one question's N agents; LowerIsBetter kinds
// are negated first. All-equal inputs map to 0.5 everywhere.
std::vector<double> normalize_priors(const std::vector<SignalValue>& raw);

// (r - c) / D. Throws SvrUndefined when debates == 0, InvalidCounters when
// retentions + changes != debates.
double svr(int debates, int retentions, int changes);

// Posterior-dominant score in [0,1]: affine-mapped SVR once debate evidence
// exists, the prior otherwise.
double correctness_score(const CorrectnessState& state);

// Ablation posterior: mean per-event signal read from the
// receiver's post-debate responses (orientation preserved, not normalized).
double mean_posterior_signal(const std::vector<DebateEvent>& events,
                             PriorSignalKind kind);

}  // namespace mad::signals
