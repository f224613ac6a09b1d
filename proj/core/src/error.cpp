#include "eioctl/error.hpp"

#include <cerrno>

namespace eioctl {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::SyntaxError: return "SyntaxError";
    case Errc::SchemaError: return "SchemaError";
    case Errc::DanglingReference: return "DanglingReference";
    case Errc::DuplicateRequestCode: return "DuplicateRequestCode";
    case Errc::UnmappedAddress: return "UnmappedAddress";
    case Errc::OutOfUntrustedMemory: return "OutOfUntrustedMemory";
    case Errc::OutOfEnclaveMemory: return "OutOfEnclaveMemory";
    case Errc::WorldViolation: return "WorldViolation";
    case Errc::SizeNameUnavailable: return "SizeNameUnavailable";
    case Errc::NameUnavailable: return "NameUnavailable";
    case Errc::TokenTooWide: return "TokenTooWide";
    case Errc::LimitExceeded: return "LimitExceeded";
    case Errc::NegativeSize: return "NegativeSize";
    case Errc::Overflow: return "Overflow";
    case Errc::PointerWorldError: return "PointerWorldError";
    case Errc::VariableStride: return "VariableStride";
    case Errc::AccessDenied: return "AccessDenied";
    case Errc::NoDevice: return "NoDevice";
    case Errc::BadFlags: return "BadFlags";
    case Errc::BadFd: return "BadFd";
    case Errc::OutOfMemory: return "OutOfMemory";
    case Errc::NotAllowed: return "NotAllowed";
    case Errc::UnknownOp: return "UnknownOp";
    case Errc::UnknownParam: return "UnknownParam";
    case Errc::UnknownRequest: return "UnknownRequest";
    case Errc::ScenarioError: return "ScenarioError";
  }
  return "Unknown";
}

int to_errno(Errc code) noexcept {
  switch (code) {
    case Errc::AccessDenied: return -EACCES;
    case Errc::NoDevice: return -ENODEV;
    case Errc::BadFlags: return -EINVAL;
    case Errc::BadFd: return -EBADF;
    case Errc::OutOfMemory:
    case Errc::OutOfUntrustedMemory:
    case Errc::OutOfEnclaveMemory: return -ENOMEM;
    case Errc::NotAllowed: return -ENOTTY;
    case Errc::WorldViolation:
    case Errc::UnmappedAddress:
    case Errc::PointerWorldError: return -EFAULT;
    case Errc::LimitExceeded: return -E2BIG;
    default: return -EINVAL;
  }
}

Error::Error(Errc code, std::string message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code),
      message_(std::move(message)) {}

void raise(Errc code, std::string message) { throw Error(code, std::move(message)); }

}  // namespace eioctl
