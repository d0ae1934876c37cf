#include "leukopipe/error.hpp"

namespace leukopipe {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MissingDirectory: return "MissingDirectory";
        case ErrorCode::UnreadableImage: return "UnreadableImage";
        case ErrorCode::DuplicatePath: return "DuplicatePath";
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::EmptyClass: return "EmptyClass";
        case ErrorCode::AlreadySplit: return "AlreadySplit";
        case ErrorCode::AlreadyCarved: return "AlreadyCarved";
        case ErrorCode::AlreadyAugmented: return "AlreadyAugmented";
        case ErrorCode::FractionOutOfRange: return "FractionOutOfRange";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::SchemaVersionMismatch: return "SchemaVersionMismatch";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::InvariantViolation: return "InvariantViolation";
        case ErrorCode::UndecodableImage: return "UndecodableImage";
        case ErrorCode::ZeroDimensionImage: return "ZeroDimensionImage";
        case ErrorCode::ZeroStd: return "ZeroStd";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::NoSplit: return "NoSplit";
        case ErrorCode::DiskFull: return "DiskFull";
        case ErrorCode::ParentMissing: return "ParentMissing";
        case ErrorCode::WeightsUnavailable: return "WeightsUnavailable";
        case ErrorCode::UnknownArch: return "UnknownArch";
        case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
        case ErrorCode::NonFiniteLogits: return "NonFiniteLogits";
        case ErrorCode::EmptySplit: return "EmptySplit";
        case ErrorCode::DivergedLoss: return "DivergedLoss";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::SingleClassOnly: return "SingleClassOnly";
        case ErrorCode::MalformedLiteratureFile: return "MalformedLiteratureFile";
        case ErrorCode::StagePrereqMissing: return "StagePrereqMissing";
        case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    }
    return "Unknown";
}

ExitStatus exit_status_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::ConfigInvalid:
        case ErrorCode::InvalidConfig:
        case ErrorCode::FractionOutOfRange:
        case ErrorCode::UnknownArch:
        case ErrorCode::MalformedLiteratureFile:
            return ExitStatus::ConfigError;
        case ErrorCode::DivergedLoss:
        case ErrorCode::NonFiniteLogits:
            return ExitStatus::TrainingDivergence;
        case ErrorCode::EmptyInput:
        case ErrorCode::SingleClassOnly:
            return ExitStatus::Failure;
        default:
            return ExitStatus::DataError;
    }
}

Error::Error(ErrorCode code, const std::string& message, std::vector<std::string> details)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code),
      details_(std::move(details)) {}

Error Error::with_stage(std::string_view stage) const {
    Error copy = *this;
    static_cast<std::runtime_error&>(copy) =
        std::runtime_error("[" + std::string(stage) + "] " + what());
    return copy;
}

}  // namespace leukopipe
