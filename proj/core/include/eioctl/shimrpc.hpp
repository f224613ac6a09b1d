#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>

#include "eioctl/arena.hpp"
#include "eioctl/handler.hpp"
#include "eioctl/runtime.hpp"

namespace eioctl::shim {

/// A library function moved out of the enclave. Its argument record is
/// described by `struct_name` in the session manifest, conventionally
/// {len: 8 out; data: ptr -> len bytes out; result: 8 in}.
struct SlicedCallDesc {
  std::string function;
  std::uint32_t request = 0;
  std::string struct_name;
};

/// Untrusted implementation of a sliced function: argument bytes in, result out.
using UntrustedFunction = std::function<std::int64_t(std::span<const std::byte>)>;

// Offsets inside the conventional argument record.
inline constexpr std::uint64_t kRecordLen = 0;
inline constexpr std::uint64_t kRecordData = 8;
inline constexpr std::uint64_t kRecordResult = 16;
inline constexpr std::uint64_t kRecordSize = 24;

/// Error value reported when an untrusted implementation throws.
inline constexpr std::int64_t kUntrustedFailure = -5;  // -EIO

/// The untrusted half: maps request codes to local implementations and
/// serves them as a pseudo-device.
class UntrustedLibrary {
 public:
  void add(std::uint32_t request, std::string function, UntrustedFunction impl);

  /// De-wraps the staged argument record, calls the implementation, and
  /// stores its result in the record's result field.
  std::int64_t dispatch_untrusted(std::uint32_t request, GuestAddress root, const UntrustedView& view) const;

  DeviceHandler as_device() const;

 private:
  struct Entry {
    std::string function;
    UntrustedFunction impl;
  };
  std::map<std::uint32_t, Entry> functions_;
};

/// Lays out an argument record (and a copy of `data`) in enclave memory.
GuestAddress stage_call_record(Session& session, std::span<const std::byte> data);

// Fixture functions served by fixture_library().
inline constexpr std::uint32_t kByteLengthRequest = 0x20001;
inline constexpr std::uint32_t kByteSumRequest = 0x20002;
inline constexpr std::uint32_t kCountVowelsRequest = 0x20003;
inline constexpr std::uint32_t kAlwaysFailsRequest = 0x20004;

std::int64_t byte_length(std::span<const std::byte> data);
std::int64_t byte_sum(std::span<const std::byte> data);
std::int64_t count_vowels(std::span<const std::byte> data);

UntrustedLibrary fixture_library();

/// The enclave half: issues the call as an ioctl on `fd` and returns the
/// copied-back result, or the negative ioctl return on failure.
std::int64_t shim_invoke(Session& session, int fd, const SlicedCallDesc& call, GuestAddress record);

}  // namespace eioctl::shim
