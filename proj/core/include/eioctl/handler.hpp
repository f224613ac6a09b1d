#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "eioctl/arena.hpp"

namespace eioctl {

/// What a device sees of one ioctl: the request code and the argument. For
/// requests with a struct descriptor `arg` is the untrusted root of the deep
/// copy (0 for a null argument); otherwise it is the caller's value verbatim.
struct DeviceCall {
  std::uint32_t request = 0;
  std::uint64_t arg = 0;
  std::string device_path;
};

/// Untrusted-side implementation of a device. Handlers only ever get an
/// UntrustedView, so they cannot reach enclave memory.
using DeviceHandler = std::function<std::int64_t(const DeviceCall&, const UntrustedView&)>;

}  // namespace eioctl
