#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dxagent {

enum class ErrorCode {
    InvalidArgument,
    // domain
    UnknownLabel,
    NegativeVolume,
    InvalidRecord,
    // parsers
    BadMagic,
    BadHeaderSize,
    TruncatedInput,
    NotVcf,
    NoSampleColumn,
    UnsupportedVcf,
    MissingCall,
    InconsistentAlleles,
    IoError,
    // llm gateway
    ProviderUnavailable,
    AuthFailure,
    ContextTooLong,
    EmptyLedger,
    ConfigInvalid,
    // tools
    DuplicateName,
    InvalidSchema,
    UnknownTool,
    BadParameters,
    BackendProcessFailed,
    UnparseableOutput,
    MissingSidecar,
    InvalidImage,
    InvalidPredictedImage,
    NoUsableGenotypes,
    ModelFileInvalid,
    // guideline engine
    UnknownIndicator,
    OutOfRange,
    NoEvidence,
    // aggregator
    NotJson,
    SchemaViolation,
    InvalidEnum,
    // evaluation
    EmptyInput,
    InsufficientSubgroups,
    NoPairs,
    ZeroVariance,
    // service
    ValidationFailed,
    StorageFailure,
    SessionNotFound,
    WrongState,
    NoReport,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace dxagent
