#include "eioctl/shimrpc.hpp"

#include <memory>
#include <stdexcept>

#include "eioctl/error.hpp"
#include "eioctl/hex.hpp"

namespace eioctl::shim {

void UntrustedLibrary::add(std::uint32_t request, std::string function, UntrustedFunction impl) {
  functions_[request] = Entry{std::move(function), std::move(impl)};
}

std::int64_t UntrustedLibrary::dispatch_untrusted(std::uint32_t request, GuestAddress root,
                                                  const UntrustedView& view) const {
  auto it = functions_.find(request);
  if (it == functions_.end()) raise(Errc::UnknownRequest, "no untrusted function for " + hex_u64(request));
  std::uint64_t len = view.read_u64(root + kRecordLen);
  GuestAddress data{view.read_u64(root + kRecordData)};
  Bytes args = len == 0 || data.is_null() ? Bytes{} : view.read_bytes(data, len);
  std::int64_t result = 0;
  try {
    result = it->second.impl(args);
  } catch (const std::exception&) {
    return kUntrustedFailure;
  }
  view.write_u64(root + kRecordResult, static_cast<std::uint64_t>(result));
  return 0;
}

DeviceHandler UntrustedLibrary::as_device() const {
  auto self = std::make_shared<UntrustedLibrary>(*this);
  return [self](const DeviceCall& call, const UntrustedView& view) {
    return self->dispatch_untrusted(call.request, GuestAddress{call.arg}, view);
  };
}

GuestAddress stage_call_record(Session& session, std::span<const std::byte> data) {
  auto& arenas = session.arenas();
  GuestAddress record = arenas.alloc_enclave(kRecordSize + data.size(), 8);
  GuestAddress payload = record + kRecordSize;
  arenas.write_bytes(payload, data);
  arenas.write_u64(record + kRecordLen, data.size());
  arenas.write_u64(record + kRecordData, payload.value);
  arenas.write_u64(record + kRecordResult, 0);
  return record;
}

std::int64_t byte_length(std::span<const std::byte> data) { return static_cast<std::int64_t>(data.size()); }

std::int64_t byte_sum(std::span<const std::byte> data) {
  std::int64_t sum = 0;
  for (std::byte b : data) sum += std::to_integer<std::int64_t>(b);
  return sum;
}

std::int64_t count_vowels(std::span<const std::byte> data) {
  std::int64_t n = 0;
  for (std::byte b : data) {
    switch (std::to_integer<char>(b) | 0x20) {
      case 'a': case 'e': case 'i': case 'o': case 'u': ++n; break;
      default: break;
    }
  }
  return n;
}

UntrustedLibrary fixture_library() {
  UntrustedLibrary lib;
  lib.add(kByteLengthRequest, "byte_length", byte_length);
  lib.add(kByteSumRequest, "byte_sum", byte_sum);
  lib.add(kCountVowelsRequest, "count_vowels", count_vowels);
  lib.add(kAlwaysFailsRequest, "always_fails",
          [](std::span<const std::byte>) -> std::int64_t { throw std::runtime_error("untrusted failure"); });
  return lib;
}

std::int64_t shim_invoke(Session& session, int fd, const SlicedCallDesc& call, GuestAddress record) {
  const auto& manifest = session.manifest();
  const StructDesc& desc = manifest.resolve_struct(call.struct_name);
  auto result_offset = static_field_offset(manifest, desc.root, "result");
  if (!result_offset)
    raise(Errc::SchemaError, "struct '" + call.struct_name + "' has no statically placed 'result' field");
  std::int64_t rc = session.ioctl(fd, call.request, record.value);
  if (rc < 0) return rc;
  return static_cast<std::int64_t>(session.arenas().read_u64(record + *result_offset));
}

}  // namespace eioctl::shim
