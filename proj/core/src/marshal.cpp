#include "eioctl/marshal.hpp"

#include <iomanip>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "eioctl/error.hpp"
#include "eioctl/hex.hpp"

namespace eioctl {

const ResolvedSubRegion* CopyPlan::find_by_name(std::string_view name) const noexcept {
  for (auto it = sub_regions.rbegin(); it != sub_regions.rend(); ++it)
    if (it->name && *it->name == name) return &*it;
  return nullptr;
}

namespace {

__extension__ typedef __int128 i128;  // checked size arithmetic


std::uint64_t read_token_value(const ResolvedSubRegion& sub, const ArenaPair& arenas, Errc too_wide,
                               std::string_view name) {
  if (sub.size > 8)
    raise(too_wide, "sub-region '" + std::string(name) + "' is " + std::to_string(sub.size) +
                        " bytes wide; at most 8 can be read as an integer");
  return arenas.read_uint(sub.addr, sub.size);
}

template <typename Lookup>
bool evaluate_with(const Condition& cond, Lookup&& lookup, const ArenaPair& arenas) {
  auto value = [&](const Token& t) -> std::uint64_t {
    if (auto* v = std::get_if<std::uint64_t>(&t)) return *v;
    const auto& name = std::get<std::string>(t);
    const ResolvedSubRegion* sub = lookup(name);
    if (!sub) raise(Errc::NameUnavailable, "condition operand '" + name + "' has not been collected yet");
    return read_token_value(*sub, arenas, Errc::TokenTooWide, name);
  };
  std::uint64_t lhs = value(cond.lhs);
  std::uint64_t rhs = value(cond.rhs);
  switch (cond.op) {
    case ConditionOp::Equal: return lhs == rhs;
    case ConditionOp::NotEqual: return lhs != rhs;
    case ConditionOp::AllBits: return (lhs & rhs) == rhs;
    case ConditionOp::AnyBits: return (lhs & rhs) != 0;
  }
  return false;
}

/// Phase-1 state for one collection run.
class Collector {
 public:
  Collector(const Manifest& manifest, const ArenaPair& arenas, const CopyLimits& limits)
      : manifest_(manifest), arenas_(arenas), limits_(limits) {}

  CopyPlan run(RegionId root_desc, GuestAddress root) {
    plan_.limits = limits_;
    if (root.is_null()) return std::move(plan_);
    check_target(root, "ioctl argument");
    plan_.regions.push_back(PlannedRegion{.desc = root_desc, .enclave_addr = root});
    for (std::size_t next = 0; next < plan_.regions.size(); ++next) collect_region(next);
    return std::move(plan_);
  }

 private:
  std::string where(RegionId desc, std::size_t index) const {
    return manifest_.region_path(desc) + "[" + std::to_string(index) + "]";
  }

  void check_target(GuestAddress addr, const std::string& what) const {
    switch (arenas_.world_of(addr)) {
      case World::Enclave: return;
      case World::Untrusted:
        raise(Errc::PointerWorldError,
              what + " " + hex_u64(addr.value) + " points into untrusted memory; describe it as 8-byte data");
      default: raise(Errc::UnmappedAddress, what + " " + hex_u64(addr.value) + " is not mapped");
    }
  }

  std::uint64_t resolve_size(const SubRegionDesc& sub, const std::string& ctx) {
    std::uint64_t base = 1;
    if (sub.size) {
      if (auto* v = std::get_if<std::uint64_t>(&*sub.size)) {
        base = *v;
      } else {
        const auto& name = std::get<std::string>(*sub.size);
        auto it = last_by_name_.find(name);
        if (it == last_by_name_.end())
          raise(Errc::SizeNameUnavailable, ctx + ": size sub-region '" + name + "' has not been collected yet");
        base = read_token_value(plan_.sub_regions[it->second], arenas_, Errc::TokenTooWide, name);
      }
    }
    i128 total = static_cast<i128>(base) * sub.unit + sub.adjust;
    if (total < 0)
      raise(Errc::NegativeSize, ctx + ": size " + std::to_string(base) + " * " + std::to_string(sub.unit) +
                                    " + " + std::to_string(sub.adjust) + " is negative");
    if (total > static_cast<i128>(std::numeric_limits<std::uint64_t>::max()))
      raise(Errc::Overflow, ctx + ": size overflows 64 bits");
    return static_cast<std::uint64_t>(total);
  }

  void enqueue(RegionId desc, GuestAddress addr, std::size_t depth, std::size_t parent,
               std::uint64_t index, const std::string& ctx) {
    if (plan_.regions.size() >= limits_.max_regions)
      raise(Errc::LimitExceeded, ctx + ": more than " + std::to_string(limits_.max_regions) + " regions");
    if (depth > limits_.max_depth)
      raise(Errc::LimitExceeded, ctx + ": nesting deeper than " + std::to_string(limits_.max_depth));
    check_target(addr, ctx + ": pointer target");
    plan_.regions.push_back(PlannedRegion{
        .desc = desc, .enclave_addr = addr, .depth = depth, .array_index = index, .parent_sub = parent});
  }

  void collect_region(std::size_t region_index) {
    const PlannedRegion current = plan_.regions[region_index];
    const RegionDesc& desc = manifest_.region(current.desc);
    std::uint64_t offset = 0;
    std::size_t first_sub = plan_.sub_regions.size();
    std::uint64_t region_align = kDefaultRegionAlign;
    if (!desc.subs.empty() && desc.subs.front().align)
      region_align = std::max(region_align, *desc.subs.front().align);

    for (std::size_t k = 0; k < desc.subs.size(); ++k) {
      const SubRegionDesc& sub = desc.subs[k];
      const std::string ctx = "region " + std::to_string(region_index) + " " + where(current.desc, k);
      if (sub.onlyif) {
        bool keep = evaluate_with(
            *sub.onlyif,
            [&](const std::string& name) -> const ResolvedSubRegion* {
              auto it = last_by_name_.find(name);
              return it == last_by_name_.end() ? nullptr : &plan_.sub_regions[it->second];
            },
            arenas_);
        if (!keep) continue;
      }
      if (plan_.sub_regions.size() >= limits_.max_sub_regions)
        raise(Errc::LimitExceeded, ctx + ": more than " + std::to_string(limits_.max_sub_regions) + " sub-regions");

      ResolvedSubRegion out;
      out.size = resolve_size(sub, ctx);
      if (offset > std::numeric_limits<std::uint64_t>::max() - current.enclave_addr.value)
        raise(Errc::Overflow, ctx + ": address overflows 64 bits");
      out.addr = current.enclave_addr + offset;
      out.align = plan_.sub_regions.size() == first_sub ? region_align : 1;
      out.direction = sub.direction();
      out.name = sub.name;
      out.region_index = region_index;
      std::size_t self = plan_.sub_regions.size();

      if (sub.is_ptr()) {
        std::uint64_t count = out.size;
        out.size = kPointerSize;
        if (arenas_.world_of_range(out.addr, kPointerSize) != World::Enclave)
          raise(Errc::UnmappedAddress, ctx + ": pointer slot " + hex_u64(out.addr.value) + " is not enclave memory");
        GuestAddress target{arenas_.read_u64(out.addr)};
        if (!target.is_null() && count > 0) {
          check_target(target, ctx + ": pointer");
          std::uint64_t stride = 0;
          if (count > 1) {
            auto flat = static_flat_size(manifest_, sub.ptr->target);
            if (!flat)
              raise(Errc::VariableStride, ctx + ": array of " + std::to_string(count) +
                                              " regions needs a statically sized element");
            stride = *flat;
          }
          out.rewire = true;
          out.target_region = plan_.regions.size();
          out.target_count = count;
          for (std::uint64_t i = 0; i < count; ++i) {
            i128 elem = static_cast<i128>(target.value) + static_cast<i128>(stride) * i;
            if (elem > static_cast<i128>(std::numeric_limits<std::uint64_t>::max()))
              raise(Errc::Overflow, ctx + ": array element address overflows");
            enqueue(sub.ptr->target, GuestAddress{static_cast<std::uint64_t>(elem)}, current.depth + 1, self, i, ctx);
          }
        }
      } else if (arenas_.world_of_range(out.addr, out.size) != World::Enclave) {
        raise(Errc::UnmappedAddress, ctx + ": [" + hex_u64(out.addr.value) + ", +" + std::to_string(out.size) +
                                         ") is not enclave memory");
      }

      if (out.size > std::numeric_limits<std::uint64_t>::max() - offset)
        raise(Errc::Overflow, ctx + ": region size overflows 64 bits");
      offset += out.size;
      if (out.name) last_by_name_[*out.name] = self;
      plan_.sub_regions.push_back(std::move(out));
    }

    PlannedRegion& region = plan_.regions[region_index];
    region.flat_size = offset;
    region.align = region_align;
    region.first_sub = first_sub;
    region.sub_count = plan_.sub_regions.size() - first_sub;
  }

  const Manifest& manifest_;
  const ArenaPair& arenas_;
  CopyLimits limits_;
  CopyPlan plan_;
  std::unordered_map<std::string, std::size_t> last_by_name_;
};

}  // namespace

CopyPlan collect_sub_regions(const Manifest& manifest, RegionId root_desc, GuestAddress root,
                             const ArenaPair& arenas, const CopyLimits& limits) {
  return Collector(manifest, arenas, limits).run(root_desc, root);
}

bool evaluate_condition(const Condition& cond, const CopyPlan& so_far, const ArenaPair& arenas) {
  return evaluate_with(
      cond, [&](const std::string& name) { return so_far.find_by_name(name); }, arenas);
}

bool evaluate_condition(std::string_view expr, const CopyPlan& so_far, const ArenaPair& arenas) {
  return evaluate_condition(parse_condition(expr), so_far, arenas);
}

GuestAddress copy_out(CopyPlan& plan, ArenaPair& arenas, CopyMode mode) {
  if (plan.empty()) {
    plan.root_untrusted = GuestAddress{};
    return plan.root_untrusted;
  }
  const std::size_t staged = mode == CopyMode::Deep ? plan.regions.size() : 1;
  for (std::size_t i = 0; i < staged; ++i) {
    auto& region = plan.regions[i];
    std::uint64_t align = region.array_index > 0 ? 1 : region.align;
    region.untrusted_addr = arenas.alloc_untrusted(region.flat_size, align);
  }
  for (auto& sub : plan.sub_regions) {
    if (sub.region_index >= staged) continue;
    const auto& region = plan.regions[sub.region_index];
    sub.untrusted_addr = region.untrusted_addr + (sub.addr.value - region.enclave_addr.value);
    if (sub.rewire && mode == CopyMode::Deep) {
      arenas.write_u64(sub.untrusted_addr, plan.regions[sub.target_region].untrusted_addr.value);
    } else if (sub.rewire || copies_out(sub.direction)) {
      arenas.write_bytes(sub.untrusted_addr, arenas.read_bytes(sub.addr, sub.size));
    } else {
      arenas.fill_zero(sub.untrusted_addr, sub.size);
    }
  }
  plan.root_untrusted = plan.regions.front().untrusted_addr;
  return plan.root_untrusted;
}

void copy_back(const CopyPlan& plan, ArenaPair& arenas, CopyMode mode) {
  for (const auto& sub : plan.sub_regions) {
    if (mode == CopyMode::Shallow && sub.region_index != 0) continue;
    // Pointer slots and none/out data are jumped over.
    if (sub.rewire || !copies_in(sub.direction)) continue;
    arenas.write_bytes(sub.addr, arenas.read_bytes(sub.untrusted_addr, sub.size));
  }
}

EmulationResult emulate_ioctl_copy(const Manifest& manifest, RegionId root_desc, GuestAddress root,
                                   const DeviceHandler& handler, DeviceCall call, ArenaPair& arenas,
                                   const CopyLimits& limits, CopyMode mode) {
  EmulationResult out;
  out.plan = collect_sub_regions(manifest, root_desc, root, arenas, limits);
  call.arg = copy_out(out.plan, arenas, mode).value;
  out.result = handler(call, UntrustedView(arenas));
  copy_back(out.plan, arenas, mode);
  return out;
}

std::optional<std::uint64_t> static_flat_size(const Manifest& manifest, RegionId region) {
  std::uint64_t total = 0;
  for (const auto& sub : manifest.region(region).subs) {
    if (sub.onlyif) return std::nullopt;
    std::uint64_t size = kPointerSize;
    if (!sub.is_ptr()) {
      auto* v = std::get_if<std::uint64_t>(&*sub.size);
      if (!v) return std::nullopt;
      i128 s = static_cast<i128>(*v) * sub.unit + sub.adjust;
      if (s < 0 || s > static_cast<i128>(std::numeric_limits<std::uint64_t>::max())) return std::nullopt;
      size = static_cast<std::uint64_t>(s);
    }
    if (size > std::numeric_limits<std::uint64_t>::max() - total) return std::nullopt;
    total += size;
  }
  return total;
}

std::optional<std::uint64_t> static_field_offset(const Manifest& manifest, RegionId region,
                                                 std::string_view name) {
  std::uint64_t offset = 0;
  for (const auto& sub : manifest.region(region).subs) {
    if (sub.name && *sub.name == name) return offset;
    if (sub.onlyif) return std::nullopt;
    if (sub.is_ptr()) {
      offset += kPointerSize;
      continue;
    }
    auto* v = std::get_if<std::uint64_t>(&*sub.size);
    if (!v) return std::nullopt;
    i128 s = static_cast<i128>(*v) * sub.unit + sub.adjust;
    if (s < 0) return std::nullopt;
    offset += static_cast<std::uint64_t>(s);
  }
  return std::nullopt;
}

std::string format_plan(const CopyPlan& plan) {
  std::ostringstream os;
  os << std::left << std::setw(6) << "index" << std::setw(7) << "region" << std::setw(20) << "name"
     << std::setw(14) << "enclave-addr" << std::setw(8) << "size" << std::setw(10) << "direction"
     << std::setw(7) << "rewire" << "untrusted-addr\n";
  for (std::size_t i = 0; i < plan.sub_regions.size(); ++i) {
    const auto& s = plan.sub_regions[i];
    os << std::setw(6) << i << std::setw(7) << s.region_index << std::setw(20) << s.name.value_or("-")
       << std::setw(14) << hex_u64(s.addr.value) << std::setw(8) << s.size << std::setw(10)
       << to_string(s.direction) << std::setw(7) << (s.rewire ? "yes" : "no")
       << (s.untrusted_addr.is_null() ? std::string("-") : hex_u64(s.untrusted_addr.value)) << '\n';
  }
  return os.str();
}

}  // namespace eioctl
