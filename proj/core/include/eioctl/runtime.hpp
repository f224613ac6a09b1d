#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eioctl/arena.hpp"
#include "eioctl/handler.hpp"
#include "eioctl/manifest.hpp"
#include "eioctl/marshal.hpp"

namespace eioctl {

// Linux values, so scenario files can be written with familiar numbers.
inline constexpr std::uint32_t kProtRead = 0x1;
inline constexpr std::uint32_t kProtWrite = 0x2;
inline constexpr std::uint32_t kMapShared = 0x01;
inline constexpr std::uint32_t kMapPrivate = 0x02;
inline constexpr std::uint32_t kMapAnonymous = 0x20;
inline constexpr std::uint64_t kPageSize = 4096;

enum class FdKind { File, Device, Fence };

struct FdEntry {
  FdKind kind = FdKind::File;
  std::string path;
};

enum class MappingKind { Anonymous, File, Device };

struct Mapping {
  GuestAddress addr;
  std::uint64_t length = 0;
  MappingKind kind = MappingKind::Anonymous;
  int fd = -1;
};

class Session;

/// Everything a post hook may want to know about the finished ioctl.
struct IoctlCall {
  int fd = -1;
  std::uint32_t request = 0;
  std::uint64_t arg = 0;  // enclave argument as passed by the application
  GuestAddress untrusted_root;
  const CopyPlan* plan = nullptr;  // null for by-value requests
  std::int64_t result = 0;
};

/// Request-specific logic that runs after copy-back, inside the trusted
/// runtime: minting fds, sanitizing returned values and similar.
using PostHook = std::function<void(Session&, const IoctlRule&, const IoctlCall&)>;

/// One emulated application: manifest, two-world memory, fd table, devices
/// and hooks. Single-owner; independent sessions may run in parallel.
class Session {
 public:
  explicit Session(std::shared_ptr<const Manifest> manifest, ArenaConfig arenas = {},
                   CopyLimits limits = {});

  const Manifest& manifest() const noexcept { return *manifest_; }
  ArenaPair& arenas() noexcept { return arenas_; }
  const ArenaPair& arenas() const noexcept { return arenas_; }
  const CopyLimits& limits() const noexcept { return limits_; }

  int open(std::string_view path, int flags = 0);
  void close(int fd);
  GuestAddress mmap(GuestAddress addr_hint, std::uint64_t length, std::uint32_t prot, std::uint32_t flags,
                    int fd, std::uint64_t offset);
  std::int64_t ioctl(int fd, std::uint32_t request, std::uint64_t arg);

  // Replacing an existing binding records a diagnostic.
  void register_device(std::string path, DeviceHandler handler);
  void register_post_hook(std::uint32_t request, PostHook hook);

  // Contents backing file mmaps.
  void add_virtual_file(std::string path, Bytes contents);

  /// New fence-kind fd, as minted by hooks.
  int create_fence_fd(std::string label);

  const std::map<int, FdEntry>& fds() const noexcept { return fds_; }
  const FdEntry* find_fd(int fd) const noexcept;
  const std::vector<Mapping>& mappings() const noexcept { return mappings_; }
  const std::vector<std::string>& diagnostics() const noexcept { return diagnostics_; }

  // Test hook: run every described ioctl with CopyMode::Shallow.
  void set_copy_mode(CopyMode mode) noexcept { copy_mode_ = mode; }

 private:
  int allocate_fd(FdEntry entry);

  std::shared_ptr<const Manifest> manifest_;
  ArenaPair arenas_;
  CopyLimits limits_;
  std::map<int, FdEntry> fds_;
  int next_fd_ = 3;
  std::map<std::string, DeviceHandler, std::less<>> devices_;
  std::map<std::uint32_t, PostHook> hooks_;
  std::map<std::string, Bytes, std::less<>> files_;
  std::vector<Mapping> mappings_;
  std::vector<std::string> diagnostics_;
  CopyMode copy_mode_ = CopyMode::Deep;
};

}  // namespace eioctl
