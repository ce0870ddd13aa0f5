#include "vaudit/error.hpp"

namespace vaudit {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kDimensionMismatch: return "dimension_mismatch";
    case ErrorCode::kDegenerateMask: return "degenerate_mask";
    case ErrorCode::kTooFewImages: return "too_few_images";
    case ErrorCode::kUnknownCaption: return "unknown_caption";
    case ErrorCode::kInvalidScore: return "invalid_score";
    case ErrorCode::kTransport: return "transport";
    case ErrorCode::kTimeout: return "timeout";
    case ErrorCode::kProtocol: return "protocol";
    case ErrorCode::kMalformedImage: return "malformed_image";
    case ErrorCode::kRetrieval: return "retrieval";
    case ErrorCode::kMissingImage: return "missing_image";
    case ErrorCode::kMissingLabel: return "missing_label";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kFailureBudget: return "failure_budget";
  }
  return "unknown";
}

std::optional<ErrorCode> error_code_from_string(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(ErrorCode::kFailureBudget); ++i) {
    const auto code = static_cast<ErrorCode>(i);
    if (name == to_string(code)) return code;
  }
  return std::nullopt;
}

}  // namespace vaudit
