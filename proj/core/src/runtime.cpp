#include "eioctl/runtime.hpp"

#include <algorithm>

#include "eioctl/error.hpp"
#include "eioctl/hex.hpp"

namespace eioctl {

Session::Session(std::shared_ptr<const Manifest> manifest, ArenaConfig arenas, CopyLimits limits)
    : manifest_(std::move(manifest)), arenas_(arenas), limits_(limits) {
  if (!manifest_) throw std::invalid_argument("session needs a manifest");
}

int Session::allocate_fd(FdEntry entry) {
  int fd = next_fd_++;
  fds_.emplace(fd, std::move(entry));
  return fd;
}

const FdEntry* Session::find_fd(int fd) const noexcept {
  auto it = fds_.find(fd);
  return it == fds_.end() ? nullptr : &it->second;
}

int Session::open(std::string_view path, int /*flags*/) {
  const AllowedFile* allowed = manifest_->find_file(path);
  if (!allowed) raise(Errc::AccessDenied, "'" + std::string(path) + "' is not listed in allowed_files");
  if (allowed->is_device) {
    if (!devices_.contains(path))
      raise(Errc::NoDevice, "no device handler registered for '" + std::string(path) + "'");
    return allocate_fd(FdEntry{FdKind::Device, std::string(path)});
  }
  return allocate_fd(FdEntry{FdKind::File, std::string(path)});
}

void Session::close(int fd) {
  if (fds_.erase(fd) == 0) raise(Errc::BadFd, "fd " + std::to_string(fd) + " is not open");
}

int Session::create_fence_fd(std::string label) { return allocate_fd(FdEntry{FdKind::Fence, std::move(label)}); }

GuestAddress Session::mmap(GuestAddress /*addr_hint*/, std::uint64_t length, std::uint32_t /*prot*/,
                           std::uint32_t flags, int fd, std::uint64_t offset) {
  if (length == 0) raise(Errc::BadFlags, "mmap of zero length");
  const std::uint64_t rounded = align_up(length, kPageSize);
  if (rounded < length) raise(Errc::OutOfMemory, "mmap length overflows");
  const bool anonymous = (flags & kMapAnonymous) != 0;
  const FdEntry* entry = fd >= 0 ? find_fd(fd) : nullptr;

  // Device-backed mappings go to untrusted memory so the device can share
  // them; everything else stays in the enclave.
  if (entry && entry->kind == FdKind::Device) {
    if (anonymous) raise(Errc::BadFlags, "device mmap must not set MAP_ANONYMOUS");
    if (!(flags & kMapShared)) raise(Errc::BadFlags, "device mmap requires MAP_SHARED");
    GuestAddress addr;
    try {
      addr = arenas_.alloc_untrusted(rounded, kPageSize);
    } catch (const Error& e) {
      raise(Errc::OutOfMemory, e.message());
    }
    arenas_.fill_zero(addr, rounded);
    mappings_.push_back(Mapping{addr, rounded, MappingKind::Device, fd});
    return addr;
  }
  if (anonymous) {
    GuestAddress addr;
    try {
      addr = arenas_.alloc_enclave(rounded, kPageSize);
    } catch (const Error& e) {
      raise(Errc::OutOfMemory, e.message());
    }
    mappings_.push_back(Mapping{addr, rounded, MappingKind::Anonymous, -1});
    return addr;
  }
  if (!entry || entry->kind != FdKind::File)
    raise(Errc::BadFd, "fd " + std::to_string(fd) + " cannot back a mapping");
  GuestAddress addr;
  try {
    addr = arenas_.alloc_enclave(rounded, kPageSize);
  } catch (const Error& e) {
    raise(Errc::OutOfMemory, e.message());
  }
  if (auto it = files_.find(entry->path); it != files_.end() && offset < it->second.size()) {
    std::uint64_t n = std::min<std::uint64_t>(length, it->second.size() - offset);
    arenas_.write_bytes(addr, std::span<const std::byte>(it->second).subspan(offset, n));
  }
  mappings_.push_back(Mapping{addr, rounded, MappingKind::File, fd});
  return addr;
}

std::int64_t Session::ioctl(int fd, std::uint32_t request, std::uint64_t arg) {
  const FdEntry* entry = find_fd(fd);
  if (!entry) raise(Errc::BadFd, "fd " + std::to_string(fd) + " is not open");
  const IoctlRule* rule = manifest_->lookup_ioctl(request);
  if (!rule) raise(Errc::NotAllowed, "ioctl request " + hex_u64(request) + " is not in allowed_ioctls");
  if (entry->kind != FdKind::Device)
    raise(Errc::NoDevice, "fd " + std::to_string(fd) + " is not a device");
  auto dev = devices_.find(entry->path);
  if (dev == devices_.end()) raise(Errc::NoDevice, "device '" + entry->path + "' has no handler");

  DeviceCall call{request, arg, entry->path};
  IoctlCall done{.fd = fd, .request = request, .arg = arg};
  // Staging space is recycled once the request, including its hook, is done.
  const std::uint64_t staging_mark = arenas_.staging_cursor();
  struct Release {
    ArenaPair& arenas;
    std::uint64_t mark;
    ~Release() { arenas.release_untrusted(mark); }
  } release{arenas_, staging_mark};

  std::optional<EmulationResult> emulated;
  if (rule->struct_name) {
    const StructDesc& desc = manifest_->resolve_struct(*rule->struct_name);
    emulated = emulate_ioctl_copy(*manifest_, desc.root, GuestAddress{arg}, dev->second, call, arenas_,
                                  limits_, copy_mode_);
    done.result = emulated->result;
    done.plan = &emulated->plan;
    done.untrusted_root = emulated->plan.root_untrusted;
  } else {
    done.result = dev->second(call, UntrustedView(arenas_));
  }
  if (auto hook = hooks_.find(request); hook != hooks_.end()) hook->second(*this, *rule, done);
  return done.result;
}

void Session::register_device(std::string path, DeviceHandler handler) {
  if (devices_.contains(path)) diagnostics_.push_back("device handler for '" + path + "' replaced");
  devices_[std::move(path)] = std::move(handler);
}

void Session::register_post_hook(std::uint32_t request, PostHook hook) {
  if (hooks_.contains(request)) diagnostics_.push_back("post hook for " + hex_u64(request) + " replaced");
  hooks_[request] = std::move(hook);
}

void Session::add_virtual_file(std::string path, Bytes contents) { files_[std::move(path)] = std::move(contents); }

}  // namespace eioctl
