#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace vaudit {

enum class ErrorCode {
  kInvalidArgument,
  kDimensionMismatch,
  kDegenerateMask,
  kTooFewImages,
  kUnknownCaption,
  kInvalidScore,
  kTransport,
  kTimeout,
  kProtocol,
  kMalformedImage,
  kRetrieval,
  kMissingImage,
  kMissingLabel,
  kIo,
  kConfig,
  kFailureBudget,
};

const char* to_string(ErrorCode code);
std::optional<ErrorCode> error_code_from_string(std::string_view name);

/// All library failures are reported through this exception type; `code()`
/// lets callers (the CLI in particular) map failures to exit codes and
/// per-caption error records without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace vaudit
