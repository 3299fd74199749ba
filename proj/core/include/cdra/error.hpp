#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cdra {

enum class ErrorCode {
    Parse,
    EmptyDataset,
    DegenerateDataset,
    SplitInfeasible,
    SamplingInfeasible,
    Divergence,
    FrozenViolation,
    OutOfRange,
    UndefinedSimilarity,
    DimensionMismatch,
    TrainingInfeasible,
    UnknownUser,
    DirectionMismatch,
    InvalidArgument,
    Format,
    Io,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace cdra
