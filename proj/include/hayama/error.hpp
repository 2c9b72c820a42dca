#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hayama {

enum class ErrorCode {
  Io,
  Validation,
  EmptyCatalog,
  BadFormat,
  VersionMismatch,
  Truncated,
  ChecksumMismatch,
  Integrity,
  Compile,
  SingleClass,
  Shape,
  Alignment,
  MissingKey,
};

std::string_view to_string(ErrorCode code);

/// Every failure surfaced by the library carries one of the codes above so
/// callers (and the CLI exit-status mapping) can branch without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hayama
