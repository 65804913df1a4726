#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rarunet {

enum class ErrorCode {
  kShapeMismatch,
  kInvalidArgument,
  kGradient,
  kFormat,
  kIo,
  kConfig,
  kUndefinedMetric,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries a machine-readable code so the
/// CLI can report it on a single line.
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

}  // namespace rarunet

/// Throws rarunet::Error when `cond` is false. The message expression is
/// only evaluated on failure.
#define RARUNET_CHECK(cond, code, message)       \
  do {                                           \
    if (!(cond)) ::rarunet::fail(code, message); \
  } while (false)
