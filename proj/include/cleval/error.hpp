#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cleval {

enum class ErrorCode {
  dimension,
  numeric,
  invalid_argument,
  io,
  parse,
  config,
  solver,
  stream_end,
  ordering,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library. `code()` is stable and is what the CLI
/// prints in its machine-readable error line.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cleval
