#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace xbn {

enum class ErrorCode {
    InsufficientSamples,
    DimensionMismatch,
    InvalidConfig,
    NotNormalized,
    NonFiniteInput,
    ShapeMismatch,
    FormatError,
    NonFiniteLoss,
    IoError,
};

const char* to_string(ErrorCode code) noexcept;

/// Exception type for every failure raised by the library. `offset` is set for
/// FormatError (byte offset into the file) and `step` for NonFiniteLoss.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);
    Error(ErrorCode code, const std::string& message, std::uint64_t offset_or_step);

    ErrorCode code() const noexcept { return code_; }
    std::optional<std::uint64_t> offset() const noexcept { return offset_; }
    std::optional<std::uint64_t> step() const noexcept { return offset_; }

private:
    ErrorCode code_;
    std::optional<std::uint64_t> offset_;
};

}  // namespace xbn
