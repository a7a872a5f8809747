#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mad {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A requested signal (logprobs, confidence) is missing from a response.
struct SignalUnavailable : Error {
    using Error::Error;
};

// r + c != D, or counters negative.
struct InvalidCounters : Error {
    using Error::Error;
};

// SVR requested with D = 0; callers must fall back to the prior.
struct SvrUndefined : Error {
    using Error::Error;
};

struct BackendError : Error {
    BackendError(const std::string& msg, bool retryable, int attempts)
        : Error(msg), retryable(retryable), attempts(attempts) {}
    bool retryable = false;
    int attempts = 0;
};

// Replay backend asked for a response the trace does not contain.
struct TraceIncomplete : Error {
    using Error::Error;
};

struct ParseError : Error {
    ParseError(const std::string& msg, std::size_t line)
        : Error(msg + " (line " + std::to_string(line) + ")"), line(line) {}
    std::size_t line = 0;
};

struct ConfigError : Error {
    using Error::Error;
};

struct DatasetError : Error {
    using Error::Error;
};

}  // namespace mad
