#include "generators.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <sstream>
#include <vector>

namespace eioctl::testing {

namespace {

struct GRegion;

struct GCond {
  std::string ref;
  std::string op;
  std::uint64_t literal = 0;
};

struct GSub {
  enum Kind { Data, Len, Ptr } kind = Data;
  std::string name;
  std::uint64_t size = 0;  // Data: constant; Len: width
  std::uint64_t unit = 1;
  std::int64_t adjust = 0;
  std::string dir = "none";
  std::optional<std::uint64_t> align;
  std::optional<std::string> size_ref;  // Data size or Ptr count
  std::optional<std::uint64_t> count;   // Ptr constant count
  std::optional<GCond> cond;
  std::shared_ptr<GRegion> target;
  std::optional<std::string> target_struct;  // emitted as ptr="name"
  bool bare = false;  // unnamed
};

struct GRegion {
  std::vector<GSub> subs;
};

class Gen {
 public:
  Gen(std::mt19937_64& rng, const GenConfig& c) : rng_(rng), c_(c) {}

  std::shared_ptr<GRegion> region(int depth, bool must_static) {
    auto r = std::make_shared<GRegion>();
    int n = pick(1, c_.max_subs);
    std::vector<std::string> len_names;
    for (int k = 0; k < n; ++k) {
      GSub s;
      s.name = "f" + std::to_string(next_name_++);
      double roll = real();
      if (roll < 0.25) {
        s.kind = GSub::Len;
        static constexpr std::uint64_t widths[] = {1, 2, 4, 8};
        s.size = widths[pick(0, 3)];
        s.dir = direction();
      } else if (roll < 0.5 && depth < c_.max_depth) {
        s.kind = GSub::Ptr;
        double how = real();
        bool maybe_many = false;
        if (c_.arrays && how < 0.2) {
          s.count = static_cast<std::uint64_t>(pick(0, 3));
          maybe_many = *s.count > 1;
        } else if (c_.arrays && how < 0.4 && !len_names.empty()) {
          s.size_ref = len_names[pick(0, static_cast<int>(len_names.size()) - 1)];
          maybe_many = true;
        }
        s.target = region(depth + 1, maybe_many);
        if (real() < 0.2) s.target_struct = "t" + std::to_string(next_struct_++);
      } else {
        s.kind = GSub::Data;
        s.dir = direction();
        s.unit = static_cast<std::uint64_t>(pick(1, 3));
        if (!must_static && c_.by_name_sizes && !len_names.empty() && real() < 0.4) {
          s.size_ref = len_names[pick(0, static_cast<int>(len_names.size()) - 1)];
          s.adjust = pick(0, 2);
        } else {
          s.size = static_cast<std::uint64_t>(pick(0, 12));
          std::int64_t lo = -static_cast<std::int64_t>(s.size * s.unit);
          s.adjust = real() < 0.5 ? 0 : pick(static_cast<int>(lo), 3);
        }
        s.bare = real() < 0.3;
      }
      if (!must_static && c_.conditions && s.kind != GSub::Len && !len_names.empty() && real() < 0.25) {
        static const char* ops[] = {"==", "!=", "&=", "|="};
        s.cond = GCond{len_names[pick(0, static_cast<int>(len_names.size()) - 1)], ops[pick(0, 3)],
                       static_cast<std::uint64_t>(pick(0, 7))};
      }
      if (k == 0 && c_.alignment && real() < 0.3) {
        static constexpr std::uint64_t aligns[] = {1, 2, 4, 8, 16, 32};
        s.align = aligns[pick(0, 5)];
      }
      if (s.kind == GSub::Len) len_names.push_back(s.name);
      r->subs.push_back(std::move(s));
    }
    return r;
  }

  int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double real() { return std::uniform_real_distribution<double>(0, 1)(rng_); }

 private:
  std::string direction() {
    static const char* dirs[] = {"none", "out", "in", "inout"};
    return dirs[pick(0, 3)];
  }

  std::mt19937_64& rng_;
  const GenConfig& c_;
  int next_name_ = 0;
  int next_struct_ = 0;
};

// --- TOML emission ----------------------------------------------------------

void emit_region(const GRegion& r, std::ostream& os, std::vector<std::pair<std::string, const GRegion*>>& extra);

void emit_sub(const GSub& s, std::ostream& os, std::vector<std::pair<std::string, const GRegion*>>& extra) {
  std::vector<std::string> kv;
  if (!s.bare) kv.push_back("name=\"" + s.name + "\"");
  if (s.align) kv.push_back("align=" + std::to_string(*s.align));
  if (s.cond) kv.push_back("onlyif=\"" + s.cond->ref + " " + s.cond->op + " " + std::to_string(s.cond->literal) + "\"");
  switch (s.kind) {
    case GSub::Len:
      kv.push_back("size=" + std::to_string(s.size));
      kv.push_back("type=\"" + s.dir + "\"");
      break;
    case GSub::Data:
      kv.push_back(s.size_ref ? "size=\"" + *s.size_ref + "\"" : "size=" + std::to_string(s.size));
      if (s.unit != 1) kv.push_back("unit=" + std::to_string(s.unit));
      if (s.adjust != 0) kv.push_back("adjust=" + std::to_string(s.adjust));
      kv.push_back("type=\"" + s.dir + "\"");
      break;
    case GSub::Ptr:
      if (s.size_ref) kv.push_back("size=\"" + *s.size_ref + "\"");
      if (s.count) kv.push_back("size=" + std::to_string(*s.count));
      break;
  }
  os << "{";
  for (std::size_t i = 0; i < kv.size(); ++i) os << (i ? ", " : "") << kv[i];
  if (s.kind == GSub::Ptr) {
    os << (kv.empty() ? "" : ", ") << "ptr=";
    if (s.target_struct) {
      os << "\"" << *s.target_struct << "\"";
      extra.emplace_back(*s.target_struct, s.target.get());
    } else {
      emit_region(*s.target, os, extra);
    }
  }
  os << "}";
}

void emit_region(const GRegion& r, std::ostream& os, std::vector<std::pair<std::string, const GRegion*>>& extra) {
  os << "[";
  for (std::size_t i = 0; i < r.subs.size(); ++i) {
    os << (i ? ", " : "");
    emit_sub(r.subs[i], os, extra);
  }
  os << "]";
}

std::string emit_manifest(const GRegion& root) {
  std::ostringstream os;
  os << "allowed_ioctls.rand.request = 0x7001\nallowed_ioctls.rand.struct = \"root\"\n";
  std::vector<std::pair<std::string, const GRegion*>> pending{{"root", &root}};
  for (std::size_t i = 0; i < pending.size(); ++i) {
    os << "ioctl_structs." << pending[i].first << " = ";
    emit_region(*pending[i].second, os, pending);
    os << "\n";
  }
  return os.str();
}

// --- memory -------------------------------------------------------------------

std::uint64_t static_size(const GRegion& r) {
  std::uint64_t total = 0;
  for (const auto& s : r.subs) {
    if (s.kind == GSub::Ptr) total += 8;
    else if (s.kind == GSub::Len) total += s.size;
    else total += static_cast<std::uint64_t>(static_cast<std::int64_t>(s.size * s.unit) + s.adjust);
  }
  return total;
}

bool cond_holds(const GCond& c, std::uint64_t v) {
  if (c.op == "==") return v == c.literal;
  if (c.op == "!=") return v != c.literal;
  if (c.op == "&=") return (v & c.literal) == c.literal;
  return (v & c.literal) != 0;
}

class Writer {
 public:
  Writer(std::mt19937_64& rng, ArenaPair& arenas, const GenConfig& c, std::uint64_t start)
      : rng_(rng), a_(arenas), c_(c), cursor_(start) {}

  GuestAddress reserve(std::uint64_t size) {
    std::uint64_t align = std::uint64_t{1} << std::uniform_int_distribution<int>(0, 4)(rng_);
    GuestAddress at{align_up(cursor_, align)};
    cursor_ = at.value + size;
    return at;
  }

  // Lays out one region at `at` (already reserved for fixed-size regions).
  void write(const GRegion& r, GuestAddress at, bool reserved) {
    std::map<std::string, std::uint64_t> vals;
    std::uint64_t offset = 0;
    struct Pending {
      GuestAddress slot;
      const GSub* sub;
      std::uint64_t count;
    };
    std::vector<Pending> pending;
    for (const auto& s : r.subs) {
      if (s.cond && !cond_holds(*s.cond, vals.at(s.cond->ref))) continue;
      GuestAddress here = at + offset;
      if (s.kind == GSub::Len) {
        std::uint64_t v = std::uniform_int_distribution<std::uint64_t>(0, 6)(rng_);
        vals[s.name] = v;
        a_.write_uint(here, v, s.size);
        offset += s.size;
      } else if (s.kind == GSub::Data) {
        std::uint64_t n = s.size_ref ? vals.at(*s.size_ref) : s.size;
        auto width = static_cast<std::uint64_t>(static_cast<std::int64_t>(n * s.unit) + s.adjust);
        Bytes b(width);
        for (auto& x : b) x = static_cast<std::byte>(rng_());
        a_.write_bytes(here, b);
        offset += width;
      } else {
        std::uint64_t count = s.size_ref ? vals.at(*s.size_ref) : s.count.value_or(1);
        std::uniform_real_distribution<double> u(0, 1);
        if (u(rng_) < c_.null_ptr) {
          a_.write_u64(here, 0);
        } else {
          pending.push_back({here, &s, count});
        }
        offset += 8;
      }
    }
    if (!reserved) cursor_ = std::max(cursor_, at.value + offset);
    for (const auto& p : pending) {
      if (p.count == 0) {
        // Count 0: the pointer may be anything enclave-ish; nothing is followed.
        a_.write_u64(p.slot, a_.config().enclave_base + 8);
        continue;
      }
      if (p.count == 1) {
        std::uint64_t align = std::uint64_t{1} << std::uniform_int_distribution<int>(0, 4)(rng_);
        GuestAddress child{align_up(cursor_, align)};
        a_.write_u64(p.slot, child.value);
        cursor_ = child.value;
        write(*p.sub->target, child, false);
        continue;
      }
      std::uint64_t stride = static_size(*p.sub->target);
      GuestAddress first = reserve(stride * p.count);
      a_.write_u64(p.slot, first.value);
      for (std::uint64_t i = 0; i < p.count; ++i) write(*p.sub->target, first + stride * i, true);
    }
  }

 private:
  std::mt19937_64& rng_;
  ArenaPair& a_;
  const GenConfig& c_;
  std::uint64_t cursor_;
};

}  // namespace

ArenaConfig small_arenas() {
  ArenaConfig c;
  c.enclave_size = 1u << 20;
  c.untrusted_size = 1u << 20;
  c.enclave_heap_offset = 512u << 10;
  return c;
}

GeneratedCase generate_case(std::mt19937_64& rng, const GenConfig& config) {
  Gen gen(rng, config);
  auto root = gen.region(0, false);
  GeneratedCase out;
  out.manifest_text = emit_manifest(*root);
  out.manifest = std::make_shared<const Manifest>(parse_manifest(out.manifest_text, "generated"));
  out.root_desc = out.manifest->resolve_struct("root").root;
  out.arenas = std::make_unique<ArenaPair>(small_arenas());
  std::uint64_t start = out.arenas->config().enclave_base + 0x40 + static_cast<std::uint64_t>(gen.pick(0, 15));
  Writer w(rng, *out.arenas, config, start);
  out.root = GuestAddress{start};
  w.write(*root, out.root, false);
  return out;
}

std::string mutate_text(std::mt19937_64& rng, const std::string& text) {
  static const char* fragments[] = {
      "size",  "ptr",   "type",  "unit",  "adjust", "align", "onlyif", "name",   "\"inout\"", "\"bogus\"",
      "-1",    "0",     "3",     "0x",    "0xffffffffffffffffff", "99999999999999999999", "\"\"", "=",
      "[",     "]",     "{",     "}",     ",",      "\"",    "#",      "\n",     ".",        "sgx.",
      "ptr=[]", "{size=\"ghost\"}", "{ptr=\"ghost\"}", "onlyif=\"a ?? b\"", "align=3", "unit=0",
      "allowed_ioctls.x.request = 0xc0007102", "allowed_files = 5", "ioctl_structs.e = []",
  };
  std::string s = text;
  auto pick = [&](std::size_t hi) { return std::uniform_int_distribution<std::size_t>(0, hi)(rng); };
  int edits = static_cast<int>(pick(2)) + 1;
  for (int e = 0; e < edits; ++e) {
    std::size_t pos = s.empty() ? 0 : pick(s.size() - 1);
    switch (pick(6)) {
      case 0:  // flip a character
        if (!s.empty()) s[pos] = static_cast<char>(32 + pick(94));
        break;
      case 1:  // delete a span
        if (!s.empty()) s.erase(pos, pick(std::min<std::size_t>(12, s.size() - pos)));
        break;
      case 2:  // insert a fragment
      case 3: s.insert(pos, fragments[pick(std::size(fragments) - 1)]); break;
      case 4: {  // duplicate a line
        std::size_t b = s.rfind('\n', pos);
        b = b == std::string::npos ? 0 : b + 1;
        std::size_t en = s.find('\n', pos);
        en = en == std::string::npos ? s.size() : en + 1;
        s.insert(en, s.substr(b, en - b));
        break;
      }
      case 5: {  // replace a number with something extreme
        std::size_t d = s.find_first_of("0123456789", pos);
        if (d != std::string::npos) s.replace(d, 1, pick(1) ? "-7" : "18446744073709551616");
        break;
      }
      default:  // truncate
        s.resize(pos);
        break;
    }
  }
  return s;
}

}  // namespace eioctl::testing
