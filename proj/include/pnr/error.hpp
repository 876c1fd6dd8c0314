#pragma once

#include <stdexcept>
#include <string>

namespace pnr {

/// Base for every error raised by the engine.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller violated an operation's precondition (empty text, out-of-range
/// temperature, mismatched dimensions, ...).
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Missing or inconsistent configuration: unknown keys, a metric level
/// without its annotations, unreadable input files.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Network or server failure talking to a live backend. Retryable.
class TransportError : public Error {
public:
    using Error::Error;
};

/// A scripted backend was asked for something its script does not cover.
class ScriptError : public Error {
public:
    using Error::Error;
};

/// Malformed on-disk data (corpus records, index files, heads, traces).
class FormatError : public Error {
public:
    using Error::Error;
};

/// The planner retry ladder ran out of attempts for a plan slot.
class PlanLadderExhausted : public Error {
public:
    using Error::Error;
};

/// Reward training produced a non-finite loss or weight.
class TrainingDiverged : public Error {
public:
    TrainingDiverged(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

}  // namespace pnr
