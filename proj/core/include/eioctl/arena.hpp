#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "eioctl/hex.hpp"

namespace eioctl {

/// 64-bit address in the emulated guest. The world an address belongs to is
/// decided purely by which arena range contains it; 0 is the null pointer.
struct GuestAddress {
  std::uint64_t value = 0;

  constexpr bool is_null() const noexcept { return value == 0; }
  constexpr GuestAddress operator+(std::uint64_t offset) const noexcept {
    return GuestAddress{value + offset};
  }
  friend constexpr auto operator<=>(GuestAddress, GuestAddress) = default;
};

enum class World { Null, Enclave, Untrusted, Unmapped };

std::string_view to_string(World world) noexcept;

struct ArenaConfig {
  std::uint64_t enclave_base = 0x1000'0000;
  std::uint64_t enclave_size = 16u << 20;
  std::uint64_t untrusted_base = 0x8000'0000;
  std::uint64_t untrusted_size = 16u << 20;
  // Anonymous and file-backed mappings are carved from the enclave arena
  // starting here; the bytes below are left to scenarios and tests.
  std::uint64_t enclave_heap_offset = 8u << 20;
};

struct Extent {
  GuestAddress addr;
  std::uint64_t length = 0;

  friend bool operator==(const Extent&, const Extent&) = default;
};

/// One contiguous run of bytes in a world, as written by arena dumps and
/// consumed by memdump/scenario files.
struct ArenaRecord {
  World world = World::Unmapped;
  GuestAddress base;
  Bytes bytes;

  bool operator==(const ArenaRecord&) const = default;
};

/// Trusted enclave arena plus untrusted shared arena. Values are little-endian
/// and guest pointers are 8 bytes wide.
class ArenaPair {
 public:
  explicit ArenaPair(ArenaConfig config = {});

  const ArenaConfig& config() const noexcept { return config_; }

  World world_of(GuestAddress addr) const noexcept;
  // World of the whole range; Unmapped when it leaves or straddles an arena.
  // An empty range takes the world of its start address.
  World world_of_range(GuestAddress addr, std::uint64_t length) const noexcept;

  Bytes read_bytes(GuestAddress addr, std::uint64_t length) const;
  void read_into(GuestAddress addr, std::span<std::byte> out) const;
  void write_bytes(GuestAddress addr, std::span<const std::byte> data);
  void fill_zero(GuestAddress addr, std::uint64_t length);

  std::uint64_t read_uint(GuestAddress addr, std::uint64_t width) const;
  void write_uint(GuestAddress addr, std::uint64_t value, std::uint64_t width);
  std::uint64_t read_u64(GuestAddress addr) const { return read_uint(addr, 8); }
  void write_u64(GuestAddress addr, std::uint64_t value) { write_uint(addr, value, 8); }

  /// Bump allocation in the untrusted arena. Padding skipped for alignment
  /// is zero-filled; the block itself is left as-is.
  GuestAddress alloc_untrusted(std::uint64_t length, std::uint64_t align);
  std::uint64_t staging_cursor() const noexcept { return untrusted_cursor_; }
  // Rolls the untrusted cursor back to an earlier value, discarding every
  // block allocated since. Used to recycle per-ioctl staging space.
  void release_untrusted(std::uint64_t cursor);

  /// Zero-filled allocation from the enclave heap.
  GuestAddress alloc_enclave(std::uint64_t length, std::uint64_t align);
  std::size_t enclave_alloc_count() const noexcept { return enclave_allocations_.size(); }
  const std::vector<Extent>& enclave_allocations() const noexcept { return enclave_allocations_; }

  std::span<const std::byte> enclave_bytes() const noexcept { return enclave_; }
  std::span<const std::byte> untrusted_bytes() const noexcept { return untrusted_; }

  /// Non-zero content of both arenas, grouped in 64-byte lines.
  std::vector<ArenaRecord> dump() const;

 private:
  std::span<std::byte> locate(GuestAddress addr, std::uint64_t length);
  std::span<const std::byte> locate(GuestAddress addr, std::uint64_t length) const;

  ArenaConfig config_;
  std::vector<std::byte> enclave_;
  std::vector<std::byte> untrusted_;
  std::uint64_t untrusted_cursor_ = 0;
  std::uint64_t enclave_cursor_ = 0;
  std::vector<Extent> enclave_allocations_;
};

/// Accessor handed to device handlers. Only untrusted-world ranges are
/// reachable; touching enclave memory raises WorldViolation.
class UntrustedView {
 public:
  explicit UntrustedView(ArenaPair& arenas) noexcept : arenas_(&arenas) {}

  Bytes read_bytes(GuestAddress addr, std::uint64_t length) const;
  void write_bytes(GuestAddress addr, std::span<const std::byte> data) const;
  std::uint64_t read_uint(GuestAddress addr, std::uint64_t width) const;
  void write_uint(GuestAddress addr, std::uint64_t value, std::uint64_t width) const;
  std::uint64_t read_u64(GuestAddress addr) const { return read_uint(addr, 8); }
  void write_u64(GuestAddress addr, std::uint64_t value) const { write_uint(addr, value, 8); }

 private:
  void check(GuestAddress addr, std::uint64_t length) const;

  ArenaPair* arenas_;
};

constexpr bool is_power_of_two(std::uint64_t v) noexcept { return v != 0 && (v & (v - 1)) == 0; }

constexpr std::uint64_t align_up(std::uint64_t v, std::uint64_t align) noexcept {
  return (v + align - 1) & ~(align - 1);
}

}  // namespace eioctl
