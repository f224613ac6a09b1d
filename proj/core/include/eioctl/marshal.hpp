#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eioctl/arena.hpp"
#include "eioctl/handler.hpp"
#include "eioctl/manifest.hpp"

namespace eioctl {

struct CopyLimits {
  std::size_t max_regions = 512;
  std::size_t max_sub_regions = 4096;
  // Region-graph distance from the root region.
  std::size_t max_depth = 64;
};

/// Default untrusted alignment of a copied region; `align` can only raise it.
inline constexpr std::uint64_t kDefaultRegionAlign = 8;
inline constexpr std::uint64_t kPointerSize = 8;

struct ResolvedSubRegion {
  GuestAddress addr;  // enclave address
  std::uint64_t size = 0;
  std::uint64_t align = 1;
  Direction direction = Direction::None;
  bool rewire = false;
  GuestAddress untrusted_addr;  // assigned by copy_out
  std::optional<std::string> name;
  std::size_t region_index = 0;
  // For rewire sub-regions: the regions enqueued for this pointer.
  std::size_t target_region = 0;
  std::uint64_t target_count = 0;

  friend bool operator==(const ResolvedSubRegion&, const ResolvedSubRegion&) = default;
};

struct PlannedRegion {
  RegionId desc = 0;
  GuestAddress enclave_addr;
  std::uint64_t flat_size = 0;
  std::uint64_t align = kDefaultRegionAlign;
  std::size_t depth = 0;
  std::size_t first_sub = 0;
  std::size_t sub_count = 0;
  // Element index inside a ptr array; elements after the first are laid out
  // back to back with their predecessor.
  std::uint64_t array_index = 0;
  std::optional<std::size_t> parent_sub;
  GuestAddress untrusted_addr;

  friend bool operator==(const PlannedRegion&, const PlannedRegion&) = default;
};

/// Phase-1 output. Sub-regions are in BFS collection order: every
/// sub-region of region i precedes those of region i+1.
struct CopyPlan {
  std::vector<PlannedRegion> regions;
  std::vector<ResolvedSubRegion> sub_regions;
  GuestAddress root_untrusted;
  CopyLimits limits;

  bool empty() const noexcept { return regions.empty(); }
  // Most recently collected sub-region with this name, if any.
  const ResolvedSubRegion* find_by_name(std::string_view name) const noexcept;

  friend bool operator==(const CopyPlan& a, const CopyPlan& b) {
    return a.regions == b.regions && a.sub_regions == b.sub_regions &&
           a.root_untrusted == b.root_untrusted;
  }
};

/// Phase 1: breadth-first walk of the descriptor graph over enclave memory.
/// Null root yields an empty plan.
CopyPlan collect_sub_regions(const Manifest& manifest, RegionId root_desc, GuestAddress root,
                             const ArenaPair& arenas, const CopyLimits& limits = {});
inline CopyPlan collect_sub_regions(const Manifest& manifest, const StructDesc& desc, GuestAddress root,
                                    const ArenaPair& arenas, const CopyLimits& limits = {}) {
  return collect_sub_regions(manifest, desc.root, root, arenas, limits);
}

/// Evaluates an onlyif condition against the sub-regions collected so far.
/// Name tokens read the nearest previously collected sub-region of that
/// name as an unsigned little-endian integer of its resolved size.
bool evaluate_condition(const Condition& cond, const CopyPlan& so_far, const ArenaPair& arenas);
bool evaluate_condition(std::string_view expr, const CopyPlan& so_far, const ArenaPair& arenas);

enum class CopyMode {
  Deep,
  // Only the root region is staged and pointers are copied verbatim; the
  // broken behaviour deep copy exists to avoid. Test use only.
  Shallow,
};

/// Phase 2: stage the plan in untrusted memory. Returns the untrusted root
/// (null for an empty plan).
GuestAddress copy_out(CopyPlan& plan, ArenaPair& arenas, CopyMode mode = CopyMode::Deep);

/// Phase 3: copy in/inout sub-regions back into the enclave. Never allocates.
void copy_back(const CopyPlan& plan, ArenaPair& arenas, CopyMode mode = CopyMode::Deep);

struct EmulationResult {
  std::int64_t result = 0;
  CopyPlan plan;
};

/// The whole deep-copy round trip around one device call.
EmulationResult emulate_ioctl_copy(const Manifest& manifest, RegionId root_desc, GuestAddress root,
                                   const DeviceHandler& handler, DeviceCall call, ArenaPair& arenas,
                                   const CopyLimits& limits = {}, CopyMode mode = CopyMode::Deep);

/// Flat size of a region descriptor when it does not depend on runtime data.
std::optional<std::uint64_t> static_flat_size(const Manifest& manifest, RegionId region);
/// Byte offset of the first sub-region called `name`, when every sub-region
/// before it has a static size.
std::optional<std::uint64_t> static_field_offset(const Manifest& manifest, RegionId region,
                                                 std::string_view name);

/// Table with columns index, region, name, enclave-addr, size, direction,
/// rewire, untrusted-addr.
std::string format_plan(const CopyPlan& plan);

}  // namespace eioctl
