#include "eioctl/arena.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <utility>

#include "eioctl/error.hpp"

namespace eioctl {

namespace {

constexpr std::uint64_t kDumpLine = 64;

bool contains(std::uint64_t base, std::uint64_t size, std::uint64_t addr, std::uint64_t length) {
  if (addr < base) return false;
  std::uint64_t offset = addr - base;
  return offset <= size && length <= size - offset;
}

void dump_arena(std::span<const std::byte> bytes, World world, std::uint64_t base,
                std::vector<ArenaRecord>& out) {
  std::uint64_t line = 0;
  const std::uint64_t size = bytes.size();
  while (line < size) {
    auto line_bytes = bytes.subspan(line, std::min(kDumpLine, size - line));
    bool nonzero = std::any_of(line_bytes.begin(), line_bytes.end(),
                               [](std::byte b) { return b != std::byte{0}; });
    if (!nonzero) {
      line += kDumpLine;
      continue;
    }
    std::uint64_t start = line;
    while (line < size) {
      auto next = bytes.subspan(line, std::min(kDumpLine, size - line));
      if (std::none_of(next.begin(), next.end(), [](std::byte b) { return b != std::byte{0}; }))
        break;
      line += kDumpLine;
    }
    std::uint64_t end = std::min(line, size);
    auto run = bytes.subspan(start, end - start);
    out.push_back(ArenaRecord{world, GuestAddress{base + start}, Bytes(run.begin(), run.end())});
  }
}

}  // namespace

std::string_view to_string(World world) noexcept {
  switch (world) {
    case World::Null: return "null";
    case World::Enclave: return "enclave";
    case World::Untrusted: return "untrusted";
    case World::Unmapped: return "unmapped";
  }
  return "unmapped";
}

ArenaPair::ArenaPair(ArenaConfig config) : config_(config) {
  const auto& c = config_;
  if (c.enclave_base == 0 || c.untrusted_base == 0 || c.enclave_size == 0 || c.untrusted_size == 0)
    throw std::invalid_argument("arena bases and sizes must be non-zero");
  if (c.enclave_base + c.enclave_size < c.enclave_base ||
      c.untrusted_base + c.untrusted_size < c.untrusted_base)
    throw std::invalid_argument("arena range overflows the address space");
  // Disjoint and not adjacent: at least one unmapped byte between the ranges.
  bool enclave_first = c.enclave_base < c.untrusted_base;
  bool separated = enclave_first ? c.enclave_base + c.enclave_size < c.untrusted_base
                                 : c.untrusted_base + c.untrusted_size < c.enclave_base;
  if (!separated) throw std::invalid_argument("arenas must be disjoint and non-adjacent");
  if (c.enclave_heap_offset > c.enclave_size)
    throw std::invalid_argument("enclave heap offset lies outside the enclave arena");
  enclave_.assign(c.enclave_size, std::byte{0});
  untrusted_.assign(c.untrusted_size, std::byte{0});
  enclave_cursor_ = c.enclave_heap_offset;
}

World ArenaPair::world_of(GuestAddress addr) const noexcept {
  if (addr.is_null()) return World::Null;
  if (contains(config_.enclave_base, config_.enclave_size, addr.value, 1)) return World::Enclave;
  if (contains(config_.untrusted_base, config_.untrusted_size, addr.value, 1)) return World::Untrusted;
  return World::Unmapped;
}

World ArenaPair::world_of_range(GuestAddress addr, std::uint64_t length) const noexcept {
  if (length == 0) {
    // An empty range may sit exactly at an arena's end.
    if (contains(config_.enclave_base, config_.enclave_size, addr.value, 0)) return World::Enclave;
    if (contains(config_.untrusted_base, config_.untrusted_size, addr.value, 0))
      return World::Untrusted;
    return world_of(addr);
  }
  if (contains(config_.enclave_base, config_.enclave_size, addr.value, length)) return World::Enclave;
  if (contains(config_.untrusted_base, config_.untrusted_size, addr.value, length))
    return World::Untrusted;
  return World::Unmapped;
}

std::span<std::byte> ArenaPair::locate(GuestAddress addr, std::uint64_t length) {
  auto span = std::as_const(*this).locate(addr, length);
  return {const_cast<std::byte*>(span.data()), span.size()};
}

std::span<const std::byte> ArenaPair::locate(GuestAddress addr, std::uint64_t length) const {
  if (contains(config_.enclave_base, config_.enclave_size, addr.value, length))
    return std::span<const std::byte>(enclave_).subspan(addr.value - config_.enclave_base, length);
  if (contains(config_.untrusted_base, config_.untrusted_size, addr.value, length))
    return std::span<const std::byte>(untrusted_).subspan(addr.value - config_.untrusted_base,
                                                          length);
  raise(Errc::UnmappedAddress,
        "range [" + hex_u64(addr.value) + ", +" + std::to_string(length) + ") is not inside one arena");
}

Bytes ArenaPair::read_bytes(GuestAddress addr, std::uint64_t length) const {
  auto span = locate(addr, length);
  return Bytes(span.begin(), span.end());
}

void ArenaPair::read_into(GuestAddress addr, std::span<std::byte> out) const {
  auto span = locate(addr, out.size());
  std::copy(span.begin(), span.end(), out.begin());
}

void ArenaPair::write_bytes(GuestAddress addr, std::span<const std::byte> data) {
  auto span = locate(addr, data.size());
  std::copy(data.begin(), data.end(), span.begin());
}

void ArenaPair::fill_zero(GuestAddress addr, std::uint64_t length) {
  auto span = locate(addr, length);
  std::fill(span.begin(), span.end(), std::byte{0});
}

std::uint64_t ArenaPair::read_uint(GuestAddress addr, std::uint64_t width) const {
  if (width > 8) throw std::invalid_argument("integer width exceeds 8 bytes");
  auto span = locate(addr, width);
  std::uint64_t value = 0;
  for (std::uint64_t i = 0; i < width; ++i)
    value |= std::to_integer<std::uint64_t>(span[i]) << (8 * i);
  return value;
}

void ArenaPair::write_uint(GuestAddress addr, std::uint64_t value, std::uint64_t width) {
  if (width > 8) throw std::invalid_argument("integer width exceeds 8 bytes");
  auto span = locate(addr, width);
  for (std::uint64_t i = 0; i < width; ++i) span[i] = static_cast<std::byte>(value >> (8 * i));
}

GuestAddress ArenaPair::alloc_untrusted(std::uint64_t length, std::uint64_t align) {
  if (!is_power_of_two(align)) throw std::invalid_argument("alignment must be a power of two");
  const std::uint64_t base = config_.untrusted_base;
  const std::uint64_t size = config_.untrusted_size;
  std::uint64_t start = align_up(base + untrusted_cursor_, align) - base;
  if (start < untrusted_cursor_ || start > size || length > size - start)
    raise(Errc::OutOfUntrustedMemory, "cannot allocate " + std::to_string(length) +
                                          " bytes (align " + std::to_string(align) +
                                          ") at staging offset " + std::to_string(untrusted_cursor_));
  std::fill(untrusted_.begin() + untrusted_cursor_, untrusted_.begin() + start, std::byte{0});
  untrusted_cursor_ = start + length;
  return GuestAddress{base + start};
}

void ArenaPair::release_untrusted(std::uint64_t cursor) {
  if (cursor > untrusted_cursor_) throw std::invalid_argument("cannot release forward");
  untrusted_cursor_ = cursor;
}

GuestAddress ArenaPair::alloc_enclave(std::uint64_t length, std::uint64_t align) {
  if (!is_power_of_two(align)) throw std::invalid_argument("alignment must be a power of two");
  const std::uint64_t base = config_.enclave_base;
  const std::uint64_t size = config_.enclave_size;
  std::uint64_t start = align_up(base + enclave_cursor_, align) - base;
  if (start < enclave_cursor_ || start > size || length > size - start)
    raise(Errc::OutOfEnclaveMemory, "cannot allocate " + std::to_string(length) + " enclave bytes");
  std::fill(enclave_.begin() + start, enclave_.begin() + start + length, std::byte{0});
  enclave_cursor_ = start + length;
  enclave_allocations_.push_back(Extent{GuestAddress{base + start}, length});
  return GuestAddress{base + start};
}

std::vector<ArenaRecord> ArenaPair::dump() const {
  std::vector<ArenaRecord> out;
  dump_arena(enclave_, World::Enclave, config_.enclave_base, out);
  dump_arena(untrusted_, World::Untrusted, config_.untrusted_base, out);
  return out;
}

void UntrustedView::check(GuestAddress addr, std::uint64_t length) const {
  World range = arenas_->world_of_range(addr, length);
  if (range == World::Untrusted) return;
  // Any byte of the range landing in the enclave is a world violation, even
  // when the range also straddles out of the arena.
  const auto& c = arenas_->config();
  std::uint64_t end = length > std::numeric_limits<std::uint64_t>::max() - addr.value
                          ? std::numeric_limits<std::uint64_t>::max()
                          : addr.value + length;
  bool overlaps_enclave = addr.value < c.enclave_base + c.enclave_size && end > c.enclave_base;
  if (overlaps_enclave || range == World::Enclave)
    raise(Errc::WorldViolation, "untrusted access to enclave address " + hex_u64(addr.value));
  raise(Errc::UnmappedAddress,
        "untrusted access to unmapped range [" + hex_u64(addr.value) + ", +" + std::to_string(length) + ")");
}

Bytes UntrustedView::read_bytes(GuestAddress addr, std::uint64_t length) const {
  check(addr, length);
  return arenas_->read_bytes(addr, length);
}

void UntrustedView::write_bytes(GuestAddress addr, std::span<const std::byte> data) const {
  check(addr, data.size());
  arenas_->write_bytes(addr, data);
}

std::uint64_t UntrustedView::read_uint(GuestAddress addr, std::uint64_t width) const {
  check(addr, width);
  return arenas_->read_uint(addr, width);
}

void UntrustedView::write_uint(GuestAddress addr, std::uint64_t value, std::uint64_t width) const {
  check(addr, width);
  arenas_->write_uint(addr, value, width);
}

}  // namespace eioctl
