#include "xbn/error.hpp"

namespace xbn {

const char* to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InsufficientSamples: return "InsufficientSamples";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::NotNormalized: return "NotNormalized";
        case ErrorCode::NonFiniteInput: return "NonFiniteInput";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::FormatError: return "FormatError";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

Error::Error(ErrorCode code, const std::string& message, std::uint64_t offset_or_step)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), offset_(offset_or_step) {}

}  // namespace xbn
