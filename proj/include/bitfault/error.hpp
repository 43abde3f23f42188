#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bitfault {

enum class ErrorCode {
    InvalidArgument,
    RangeExceeded,
    IndexOutOfRange,
    ShapeMismatch,
    ConflictingStuckAt,
    InvalidSite,
    UnknownLayer,
    DoubleArm,
    NotArmed,
    EmptyDataset,
    NonDifferentiableLayer,
    FormatError,
    IoError,
    SchemaVersionMismatch,
    ForeignKeyViolation,
    DuplicateRecord,
    ConfigError,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

    ErrorCode code() const noexcept { return code_; }
    /// Message without the code prefix.
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::RangeExceeded: return "RangeExceeded";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::ConflictingStuckAt: return "ConflictingStuckAt";
    case ErrorCode::InvalidSite: return "InvalidSite";
    case ErrorCode::UnknownLayer: return "UnknownLayer";
    case ErrorCode::DoubleArm: return "DoubleArm";
    case ErrorCode::NotArmed: return "NotArmed";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::NonDifferentiableLayer: return "NonDifferentiableLayer";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorCode::ForeignKeyViolation: return "ForeignKeyViolation";
    case ErrorCode::DuplicateRecord: return "DuplicateRecord";
    case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

} // namespace bitfault
