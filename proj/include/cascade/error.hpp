#pragma once

#include <stdexcept>
#include <string>

namespace cascade {

// Base of every error thrown by the library. `kind()` is a stable
// machine-readable tag used by the CLI when it reports errors as JSON.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

struct InvalidArgument : Error {
    explicit InvalidArgument(const std::string& what) : Error("invalid_argument", what) {}
};

struct DimensionMismatch : Error {
    explicit DimensionMismatch(const std::string& what) : Error("dimension_mismatch", what) {}
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error("io_error", what) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string& what) : Error("format_error", what) {}
};

struct ProviderError : Error {
    explicit ProviderError(const std::string& what) : Error("provider_unavailable", what) {}
};

struct TrainingError : Error {
    explicit TrainingError(const std::string& what) : Error("training_diverged", what) {}
};

struct CalibrationError : Error {
    explicit CalibrationError(const std::string& what) : Error("calibration_error", what) {}
};

struct InfeasibleExperiment : Error {
    explicit InfeasibleExperiment(const std::string& what) : Error("infeasible_experiment", what) {}
};

// LLM transport failures. Each failure mode is a distinct type so callers
// can retry timeouts without retrying malformed payloads.
struct LlmError : Error {
    using Error::Error;
};

struct LlmTimeout : LlmError {
    explicit LlmTimeout(const std::string& what) : LlmError("llm_timeout", what) {}
};

struct LlmTransportError : LlmError {
    explicit LlmTransportError(const std::string& what) : LlmError("llm_transport", what) {}
};

struct LlmMalformedResponse : LlmError {
    explicit LlmMalformedResponse(const std::string& what) : LlmError("llm_malformed_response", what) {}
};

struct ParseFailureError : Error {
    explicit ParseFailureError(const std::string& what) : Error("answer_parse_failure", what) {}
};

} // namespace cascade
