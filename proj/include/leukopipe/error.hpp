#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace leukopipe {

enum class ErrorCode {
    // dataset
    MissingDirectory,
    UnreadableImage,
    DuplicatePath,
    DuplicateId,
    EmptyClass,
    AlreadySplit,
    AlreadyCarved,
    AlreadyAugmented,
    FractionOutOfRange,
    IoFailure,
    SchemaVersionMismatch,
    ParseError,
    InvariantViolation,
    // preprocess
    UndecodableImage,
    ZeroDimensionImage,
    ZeroStd,
    ShapeMismatch,
    // augment
    InvalidConfig,
    NoSplit,
    DiskFull,
    ParentMissing,
    // backbone
    WeightsUnavailable,
    UnknownArch,
    ChecksumMismatch,
    // train
    NonFiniteLogits,
    EmptySplit,
    DivergedLoss,
    // metrics
    EmptyInput,
    SingleClassOnly,
    // report
    MalformedLiteratureFile,
    // pipeline
    StagePrereqMissing,
    ConfigInvalid,
};

std::string_view to_string(ErrorCode code);

/// Process exit codes used by the CLI.
enum class ExitStatus : int {
    Success = 0,
    Failure = 1,
    ConfigError = 2,
    DataError = 3,
    TrainingDivergence = 4,
};

ExitStatus exit_status_for(ErrorCode code);

/// Every failure raised by the library. `details` carries offending items
/// (paths, ids) when there are several of them.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::vector<std::string> details = {});

    ErrorCode code() const noexcept { return code_; }
    const std::vector<std::string>& details() const noexcept { return details_; }

    /// Copy of this error with a "[stage] " prefix on the message.
    Error with_stage(std::string_view stage) const;

private:
    ErrorCode code_;
    std::vector<std::string> details_;
};

}  // namespace leukopipe
