#include "dclone/error.hpp"

namespace dclone {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "E_INVALID_ARGUMENT";
    case ErrorCode::kContractViolation: return "E_CONTRACT";
    case ErrorCode::kIo: return "E_IO";
    case ErrorCode::kParse: return "E_PARSE";
    case ErrorCode::kMissingClass: return "E_MISSING_CLASS";
    case ErrorCode::kEmptyDefinition: return "E_EMPTY_DEFINITION";
    case ErrorCode::kUnknownTemplate: return "E_UNKNOWN_TEMPLATE";
    case ErrorCode::kMissingBackgrounds: return "E_MISSING_BACKGROUNDS";
    case ErrorCode::kDuplicateKey: return "E_DUPLICATE_KEY";
    case ErrorCode::kBackendRetryable: return "E_BACKEND_RETRYABLE";
    case ErrorCode::kBackendFatal: return "E_BACKEND_FATAL";
    case ErrorCode::kMaskMismatch: return "E_MASK_MISMATCH";
    case ErrorCode::kNanLoss: return "E_NAN_LOSS";
    case ErrorCode::kSingleClass: return "E_SINGLE_CLASS";
    case ErrorCode::kUnsupported: return "E_UNSUPPORTED";
    case ErrorCode::kRefuseOverwrite: return "E_REFUSE_OVERWRITE";
    case ErrorCode::kIntegrity: return "E_INTEGRITY";
  }
  return "E_UNKNOWN";
}

}  // namespace dclone
