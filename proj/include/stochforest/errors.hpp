#ifndef STOCHFOREST_ERRORS_HPP_
#define STOCHFOREST_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace stochforest {

enum class ErrorCode {
  kSchema,           // missing / mismatched columns or artifact metadata
  kParse,            // malformed CSV cell or JSON document
  kEmptyInput,
  kDegenerateScale,  // zero-variance outcome
  kDimension,        // length / shape mismatch
  kInvalidArgument,
  kStructure,        // tree or artifact structural violation
  kRange,            // index out of range, unknown group / level
  kNumeric,          // NaN residuals, singular precision
  kIo,
};

/// Single exception type for the library. Callers that need to distinguish
/// user errors from runtime failures use is_validation().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  bool is_validation() const noexcept {
    return code_ != ErrorCode::kNumeric && code_ != ErrorCode::kIo;
  }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace stochforest

#endif  // STOCHFOREST_ERRORS_HPP_
