#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "eioctl/arena.hpp"
#include "eioctl/error.hpp"
#include "eioctl/manifest.hpp"

namespace eioctl::testing {

/// Expected staging image produced by an independent recursive copier.
struct ReferenceLayout {
  GuestAddress base;
  Bytes image;                             // bytes from base up to the end of the last region
  std::vector<std::uint64_t> region_offsets;  // level order, relative to base
};

/// Recursive deep copy used as an oracle for collect + copy_out.
///
/// Only valid for the restricted input class: every size-by-name and onlyif
/// name refers to an unconditional sub-region earlier in the same region, and
/// the data forms a tree. Builds the region tree depth-first, then lays the
/// regions out level by level from `base`.
ReferenceLayout reference_deep_copy(const Manifest& manifest, RegionId root_desc, GuestAddress root,
                                    const ArenaPair& arenas, GuestAddress base);

/// Outcome of a depth-first collection walk where by-name lookups bind to the
/// nearest sub-region collected earlier in DFS preorder. Nullopt means the
/// walk succeeded; otherwise the error it stopped with.
std::optional<Errc> dfs_collect_status(const Manifest& manifest, RegionId root_desc, GuestAddress root,
                                       const ArenaPair& arenas, std::size_t max_regions = 512);

}  // namespace eioctl::testing
