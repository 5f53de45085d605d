#include "dxagent/core/error.hpp"

namespace dxagent {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::UnknownLabel: return "UnknownLabel";
        case ErrorCode::NegativeVolume: return "NegativeVolume";
        case ErrorCode::InvalidRecord: return "InvalidRecord";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::BadHeaderSize: return "BadHeaderSize";
        case ErrorCode::TruncatedInput: return "TruncatedInput";
        case ErrorCode::NotVcf: return "NotVcf";
        case ErrorCode::NoSampleColumn: return "NoSampleColumn";
        case ErrorCode::UnsupportedVcf: return "UnsupportedVcf";
        case ErrorCode::MissingCall: return "MissingCall";
        case ErrorCode::InconsistentAlleles: return "InconsistentAlleles";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
        case ErrorCode::AuthFailure: return "AuthFailure";
        case ErrorCode::ContextTooLong: return "ContextTooLong";
        case ErrorCode::EmptyLedger: return "EmptyLedger";
        case ErrorCode::ConfigInvalid: return "ConfigInvalid";
        case ErrorCode::DuplicateName: return "DuplicateName";
        case ErrorCode::InvalidSchema: return "InvalidSchema";
        case ErrorCode::UnknownTool: return "UnknownTool";
        case ErrorCode::BadParameters: return "BadParameters";
        case ErrorCode::BackendProcessFailed: return "BackendProcessFailed";
        case ErrorCode::UnparseableOutput: return "UnparseableOutput";
        case ErrorCode::MissingSidecar: return "MissingSidecar";
        case ErrorCode::InvalidImage: return "InvalidImage";
        case ErrorCode::InvalidPredictedImage: return "InvalidPredictedImage";
        case ErrorCode::NoUsableGenotypes: return "NoUsableGenotypes";
        case ErrorCode::ModelFileInvalid: return "ModelFileInvalid";
        case ErrorCode::UnknownIndicator: return "UnknownIndicator";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::NoEvidence: return "NoEvidence";
        case ErrorCode::NotJson: return "NotJson";
        case ErrorCode::SchemaViolation: return "SchemaViolation";
        case ErrorCode::InvalidEnum: return "InvalidEnum";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::InsufficientSubgroups: return "InsufficientSubgroups";
        case ErrorCode::NoPairs: return "NoPairs";
        case ErrorCode::ZeroVariance: return "ZeroVariance";
        case ErrorCode::ValidationFailed: return "ValidationFailed";
        case ErrorCode::StorageFailure: return "StorageFailure";
        case ErrorCode::SessionNotFound: return "SessionNotFound";
        case ErrorCode::WrongState: return "WrongState";
        case ErrorCode::NoReport: return "NoReport";
    }
    return "Unknown";
}

}  // namespace dxagent
