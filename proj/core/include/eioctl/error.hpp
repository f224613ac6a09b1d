#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace eioctl {

enum class Errc {
  // manifest
  SyntaxError,
  SchemaError,
  DanglingReference,
  DuplicateRequestCode,
  // arena
  UnmappedAddress,
  OutOfUntrustedMemory,
  OutOfEnclaveMemory,
  WorldViolation,
  // marshal
  SizeNameUnavailable,
  NameUnavailable,
  TokenTooWide,
  LimitExceeded,
  NegativeSize,
  Overflow,
  PointerWorldError,
  VariableStride,
  // runtime
  AccessDenied,
  NoDevice,
  BadFlags,
  BadFd,
  OutOfMemory,
  NotAllowed,
  // devices / shim
  UnknownOp,
  UnknownParam,
  UnknownRequest,
  // scenario files
  ScenarioError,
};

std::string_view to_string(Errc code) noexcept;

/// Linux-style negative errno reported for an error code at the syscall
/// boundary. NotAllowed maps to -ENOTTY, which is what Linux returns for a
/// request code no driver recognizes.
int to_errno(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string message);

  Errc code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }

 private:
  Errc code_;
  std::string message_;
};

[[noreturn]] void raise(Errc code, std::string message);

}  // namespace eioctl
