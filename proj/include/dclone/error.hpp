#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dclone {

// Machine-parseable failure categories. The CLI prints these as
// `error: code=<name> message="..."` and exits nonzero.
enum class ErrorCode {
  kInvalidArgument,
  kContractViolation,
  kIo,
  kParse,
  kMissingClass,
  kEmptyDefinition,
  kUnknownTemplate,
  kMissingBackgrounds,
  kDuplicateKey,
  kBackendRetryable,
  kBackendFatal,
  kMaskMismatch,
  kNanLoss,
  kSingleClass,
  kUnsupported,
  kRefuseOverwrite,
  kIntegrity,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(ErrorCode::kContractViolation, message);
}

}  // namespace dclone
