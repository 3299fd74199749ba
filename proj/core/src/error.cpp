#include "cdra/error.hpp"

namespace cdra {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::Parse: return "parse error";
        case ErrorCode::EmptyDataset: return "empty dataset";
        case ErrorCode::DegenerateDataset: return "degenerate dataset";
        case ErrorCode::SplitInfeasible: return "split infeasible";
        case ErrorCode::SamplingInfeasible: return "sampling infeasible";
        case ErrorCode::Divergence: return "divergence";
        case ErrorCode::FrozenViolation: return "frozen violation";
        case ErrorCode::OutOfRange: return "index out of range";
        case ErrorCode::UndefinedSimilarity: return "undefined similarity";
        case ErrorCode::DimensionMismatch: return "dimension mismatch";
        case ErrorCode::TrainingInfeasible: return "training infeasible";
        case ErrorCode::UnknownUser: return "unknown user";
        case ErrorCode::DirectionMismatch: return "direction mismatch";
        case ErrorCode::InvalidArgument: return "invalid argument";
        case ErrorCode::Format: return "format error";
        case ErrorCode::Io: return "io error";
    }
    return "error";
}

}  // namespace cdra
