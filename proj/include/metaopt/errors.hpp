#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace metaopt {

// All toolkit errors derive from Error and carry a short machine-parsable
// class tag, printed by the CLI as "error: <tag>: <message>".
class Error : public std::runtime_error {
public:
    Error(std::string tag, const std::string& msg)
        : std::runtime_error(msg), tag_(std::move(tag)) {}
    const std::string& tag() const noexcept { return tag_; }

private:
    std::string tag_;
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& msg) : Error("DimensionError", msg) {}
};

// Violated API precondition (non-scalar loss, foreign tape, ...).
struct ContractError : Error {
    explicit ContractError(const std::string& msg) : Error("ContractError", msg) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string& msg) : Error("FormatError", msg) {}
};

struct LengthError : Error {
    explicit LengthError(const std::string& msg) : Error("LengthError", msg) {}
};

struct DataError : Error {
    explicit DataError(const std::string& msg) : Error("DataError", msg) {}
};

// A non-finite value appeared where the computation must stay finite.
struct NumericalHealthError : Error {
    explicit NumericalHealthError(const std::string& msg)
        : Error("NumericalHealthError", msg) {}
};

struct TuningError : Error {
    explicit TuningError(const std::string& msg) : Error("TuningError", msg) {}
};

// An inner-optimization episode produced a non-finite loss; carries the
// 1-based inner step at which the trajectory went bad.
struct EpisodeAbortError : Error {
    EpisodeAbortError(const std::string& msg, std::size_t step)
        : Error("EpisodeAbortError", msg + " (inner step " + std::to_string(step) + ")"),
          step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

struct TrainingFailureError : Error {
    explicit TrainingFailureError(const std::string& msg)
        : Error("TrainingFailureError", msg) {}
};

struct CheckFailureError : Error {
    explicit CheckFailureError(const std::string& msg) : Error("CheckFailureError", msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error("IoError", msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("ConfigError", msg) {}
};

}  // namespace metaopt
