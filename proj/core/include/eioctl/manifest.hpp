#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace eioctl {

enum class Direction { None, Out, In, Inout };

std::string_view to_string(Direction dir) noexcept;
std::optional<Direction> parse_direction(std::string_view text) noexcept;

constexpr bool copies_out(Direction d) noexcept { return d == Direction::Out || d == Direction::Inout; }
constexpr bool copies_in(Direction d) noexcept { return d == Direction::In || d == Direction::Inout; }

/// Index of a memory-region descriptor in Manifest::regions().
using RegionId = std::uint32_t;

/// A constant byte count / region count, or the name of a sub-region whose
/// runtime value supplies it.
using SizeSpec = std::variant<std::uint64_t, std::string>;
using Token = std::variant<std::uint64_t, std::string>;

enum class ConditionOp {
  Equal,     // ==
  NotEqual,  // !=
  AllBits,   // &=  every bit of rhs set in lhs
  AnyBits,   // |=  at least one bit of rhs set in lhs
};

struct Condition {
  Token lhs;
  ConditionOp op = ConditionOp::Equal;
  Token rhs;

  friend bool operator==(const Condition&, const Condition&) = default;
};

/// Parses `t1 OP t2` with OP one of ==, !=, &=, |=. Tokens are decimal or
/// 0x-hex literals, or identifiers. Throws SchemaError.
Condition parse_condition(std::string_view text);
std::string to_string(const Condition& cond);

struct PtrSpec {
  // Inline nested region (ptr=[...]) or a by-name reference (ptr="name").
  bool is_inline = true;
  std::string ref_name;
  // Statically resolved target descriptor.
  RegionId target = 0;

  friend bool operator==(const PtrSpec&, const PtrSpec&) = default;
};

struct SubRegionDesc {
  std::optional<std::string> name;
  std::optional<std::uint64_t> align;
  // Mandatory for data sub-regions; for ptr sub-regions it is the region
  // count and defaults to 1.
  std::optional<SizeSpec> size;
  std::uint64_t unit = 1;
  std::int64_t adjust = 0;
  std::optional<Direction> type;
  std::optional<PtrSpec> ptr;
  std::optional<Condition> onlyif;

  bool is_ptr() const noexcept { return ptr.has_value(); }
  // Pointer slots carry no copy direction of their own.
  Direction direction() const noexcept { return is_ptr() ? Direction::None : type.value_or(Direction::None); }

  friend bool operator==(const SubRegionDesc&, const SubRegionDesc&) = default;
};

struct RegionDesc {
  std::vector<SubRegionDesc> subs;

  friend bool operator==(const RegionDesc&, const RegionDesc&) = default;
};

struct StructDesc {
  std::string name;
  RegionId root = 0;

  friend bool operator==(const StructDesc&, const StructDesc&) = default;
};

struct IoctlRule {
  std::string id;  // opaque label, e.g. "io1"
  std::uint32_t request = 0;
  std::optional<std::string> struct_name;

  friend bool operator==(const IoctlRule&, const IoctlRule&) = default;
};

struct AllowedFile {
  std::string path;  // without the dev: prefix
  bool is_device = false;

  friend bool operator==(const AllowedFile&, const AllowedFile&) = default;
};

/// Validated manifest. Immutable after parse_manifest returns; safe to share
/// between sessions.
class Manifest {
 public:
  const std::vector<AllowedFile>& allowed_files() const noexcept { return files_; }
  const std::vector<IoctlRule>& rules() const noexcept { return rules_; }
  const std::map<std::string, StructDesc, std::less<>>& structs() const noexcept { return structs_; }
  const std::vector<RegionDesc>& regions() const noexcept { return regions_; }
  const RegionDesc& region(RegionId id) const { return regions_.at(id); }
  // TOML path of the array a region descriptor was parsed from.
  const std::string& region_path(RegionId id) const { return region_paths_.at(id); }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  /// Exact-match lookup; nullptr means the request is blocked.
  const IoctlRule* lookup_ioctl(std::uint32_t request) const noexcept;
  /// Throws DanglingReference.
  const StructDesc& resolve_struct(std::string_view name) const;
  /// Resolves a ptr-by-name the way the parser does: the first inline
  /// ptr-bearing sub-region with that name inside `context`'s descriptor
  /// tree, then a top-level struct name. Throws DanglingReference.
  RegionId resolve_ptr(std::string_view context, std::string_view name) const;

  const AllowedFile* find_file(std::string_view path) const noexcept;

  /// Structural equality of the descriptor trees and tables (ignores source
  /// paths and warnings).
  friend bool operator==(const Manifest& a, const Manifest& b) {
    return a.files_ == b.files_ && a.rules_ == b.rules_ && a.structs_ == b.structs_ &&
           a.regions_ == b.regions_;
  }

 private:
  friend class ManifestBuilder;

  std::vector<AllowedFile> files_;
  std::vector<IoctlRule> rules_;
  std::map<std::string, StructDesc, std::less<>> structs_;
  std::vector<RegionDesc> regions_;
  std::vector<std::string> region_paths_;
  // struct name -> (sub-region name -> region owned by that inline ptr)
  std::map<std::string, std::map<std::string, RegionId, std::less<>>, std::less<>> ptr_names_;
  std::vector<std::string> warnings_;
};

/// Parses and validates a manifest document. Keys are read both at top level
/// and under `sgx.`. Throws Error with SyntaxError, SchemaError,
/// DanglingReference or DuplicateRequestCode; messages start with the TOML
/// path of the offending value.
Manifest parse_manifest(std::string_view text, std::string_view source_name = "manifest");

/// Canonical TOML re-emission; parse_manifest(to_canonical_toml(m)) == m.
std::string to_canonical_toml(const Manifest& manifest);

}  // namespace eioctl
