#include "eioctl/manifest.hpp"

#include <algorithm>
#include <limits>
#include <set>
#include <sstream>

#include "eioctl/arena.hpp"
#include "eioctl/error.hpp"
#include "eioctl/hex.hpp"
#include "toml_config.hpp"

namespace eioctl {

std::string_view to_string(Direction dir) noexcept {
  switch (dir) {
    case Direction::None: return "none";
    case Direction::Out: return "out";
    case Direction::In: return "in";
    case Direction::Inout: return "inout";
  }
  return "none";
}

std::optional<Direction> parse_direction(std::string_view text) noexcept {
  if (text == "none") return Direction::None;
  if (text == "out") return Direction::Out;
  if (text == "in") return Direction::In;
  if (text == "inout") return Direction::Inout;
  return std::nullopt;
}

namespace {

bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  auto head = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; };
  auto tail = [&](char c) { return head(c) || (c >= '0' && c <= '9'); };
  return head(s.front()) && std::all_of(s.begin() + 1, s.end(), tail);
}

bool is_bare_key(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
           c == '-';
  });
}

std::string key_path(const std::string& parent, std::string_view key) {
  std::string k = is_bare_key(key) ? std::string(key) : "\"" + std::string(key) + "\"";
  return parent.empty() ? k : parent + "." + k;
}

std::string index_path(const std::string& parent, std::size_t index) {
  return parent + "[" + std::to_string(index) + "]";
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::optional<Token> parse_token(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  if (text.front() >= '0' && text.front() <= '9') {
    if (auto v = parse_u64(text)) return Token{*v};
    return std::nullopt;
  }
  if (is_identifier(text)) return Token{std::string(text)};
  return std::nullopt;
}

std::string token_string(const Token& t) {
  if (auto* v = std::get_if<std::uint64_t>(&t)) return hex_u64(*v);
  return std::get<std::string>(t);
}

}  // namespace

Condition parse_condition(std::string_view text) {
  static constexpr std::pair<std::string_view, ConditionOp> kOps[] = {
      {"==", ConditionOp::Equal},
      {"!=", ConditionOp::NotEqual},
      {"&=", ConditionOp::AllBits},
      {"|=", ConditionOp::AnyBits},
  };
  std::size_t found_at = std::string_view::npos;
  ConditionOp op{};
  int hits = 0;
  for (auto [sym, kind] : kOps) {
    for (auto pos = text.find(sym); pos != std::string_view::npos; pos = text.find(sym, pos + 1)) {
      ++hits;
      found_at = pos;
      op = kind;
    }
  }
  if (hits != 1)
    raise(Errc::SchemaError, "condition '" + std::string(text) +
                                 "' must contain exactly one of ==, !=, &=, |=");
  auto lhs = parse_token(text.substr(0, found_at));
  auto rhs = parse_token(text.substr(found_at + 2));
  if (!lhs || !rhs)
    raise(Errc::SchemaError, "condition '" + std::string(text) +
                                 "' operands must be integer literals or sub-region names");
  return Condition{std::move(*lhs), op, std::move(*rhs)};
}

std::string to_string(const Condition& cond) {
  std::string_view sym;
  switch (cond.op) {
    case ConditionOp::Equal: sym = "=="; break;
    case ConditionOp::NotEqual: sym = "!="; break;
    case ConditionOp::AllBits: sym = "&="; break;
    case ConditionOp::AnyBits: sym = "|="; break;
  }
  return token_string(cond.lhs) + " " + std::string(sym) + " " + token_string(cond.rhs);
}

const IoctlRule* Manifest::lookup_ioctl(std::uint32_t request) const noexcept {
  for (const auto& rule : rules_)
    if (rule.request == request) return &rule;
  return nullptr;
}

const StructDesc& Manifest::resolve_struct(std::string_view name) const {
  auto it = structs_.find(name);
  if (it == structs_.end()) raise(Errc::DanglingReference, "unknown struct '" + std::string(name) + "'");
  return it->second;
}

RegionId Manifest::resolve_ptr(std::string_view context, std::string_view name) const {
  if (auto ctx = ptr_names_.find(context); ctx != ptr_names_.end()) {
    if (auto it = ctx->second.find(name); it != ctx->second.end()) return it->second;
  }
  if (auto it = structs_.find(name); it != structs_.end()) return it->second.root;
  raise(Errc::DanglingReference, "ptr '" + std::string(name) + "' names neither a ptr sub-region of '" +
                                     std::string(context) + "' nor a struct");
}

const AllowedFile* Manifest::find_file(std::string_view path) const noexcept {
  for (const auto& f : files_)
    if (f.path == path) return &f;
  return nullptr;
}

/// Builds a Manifest from a parsed TOML tree, reporting problems with the
/// TOML path of the offending node.
class ManifestBuilder {
 public:
  explicit ManifestBuilder(Manifest& out) : m_(out) {}

  void load(const toml::table& root) {
    collect_section(root, "");
    if (const toml::node* sgx = root.get("sgx")) {
      if (!sgx->is_table()) fail(Errc::SchemaError, "sgx", *sgx, "expected a table");
      collect_section(*sgx->as_table(), "sgx");
    }
    for (auto& [name, pending] : struct_nodes_) build_struct(name, pending);
    resolve_pointers();
    validate_names();
    build_rules();
  }

 private:
  struct PendingStruct {
    const toml::node* node;
    std::string path;
  };
  struct PendingRule {
    const toml::table* table;
    std::string path;
  };
  struct PendingPtr {
    std::string owner;
    RegionId region;
    std::size_t sub;
    std::string path;
    std::uint32_t line = 0;
  };
  struct NamedPtr {
    bool is_inline;
    RegionId region;
    std::string ref;
  };
  struct NameUse {
    std::string owner;
    std::string name;
    std::string path;
    const toml::node* node;
  };

  [[noreturn]] static void fail(Errc code, const std::string& path, const toml::node& node,
                                const std::string& what) {
    std::string where = path.empty() ? "<root>" : path;
    auto line = node.source().begin.line;
    raise(code, where + ": " + what + (line ? " (line " + std::to_string(line) + ")" : ""));
  }

  void collect_section(const toml::table& table, const std::string& prefix) {
    if (const toml::node* files = table.get("allowed_files")) collect_files(*files, key_path(prefix, "allowed_files"));
    if (const toml::node* rules = table.get("allowed_ioctls")) {
      std::string path = key_path(prefix, "allowed_ioctls");
      if (!rules->is_table()) fail(Errc::SchemaError, path, *rules, "expected a table of ioctl rules");
      for (auto&& [key, value] : *rules->as_table()) {
        std::string rule_path = key_path(path, key.str());
        if (!value.is_table()) fail(Errc::SchemaError, rule_path, value, "expected a table with 'request' and 'struct'");
        auto [it, inserted] = rule_nodes_.emplace(std::string(key.str()), PendingRule{value.as_table(), rule_path});
        if (!inserted) fail(Errc::SchemaError, rule_path, value, "rule id also defined at " + it->second.path);
      }
    }
    if (const toml::node* structs = table.get("ioctl_structs")) {
      std::string path = key_path(prefix, "ioctl_structs");
      if (!structs->is_table()) fail(Errc::SchemaError, path, *structs, "expected a table of struct definitions");
      for (auto&& [key, value] : *structs->as_table()) {
        std::string struct_path = key_path(path, key.str());
        if (!is_identifier(key.str()))
          fail(Errc::SchemaError, struct_path, value, "struct name must be an identifier");
        auto [it, inserted] = struct_nodes_.emplace(std::string(key.str()), PendingStruct{&value, struct_path});
        if (!inserted) fail(Errc::SchemaError, struct_path, value, "struct also defined at " + it->second.path);
      }
    }
  }

  void add_file(const toml::node& node, const std::string& path) {
    auto text = node.value<std::string>();
    if (!text) fail(Errc::SchemaError, path, node, "expected a path string");
    AllowedFile file;
    std::string_view view = *text;
    if (view.starts_with("dev:")) {
      file.is_device = true;
      view.remove_prefix(4);
    }
    if (view.empty()) fail(Errc::SchemaError, path, node, "empty path");
    file.path = std::string(view);
    m_.files_.push_back(std::move(file));
  }

  void collect_files(const toml::node& node, const std::string& path) {
    if (node.is_string()) return add_file(node, path);
    if (!node.is_array()) fail(Errc::SchemaError, path, node, "expected a string or an array of strings");
    std::size_t i = 0;
    for (const toml::node& item : *node.as_array()) add_file(item, index_path(path, i++));
  }

  void build_struct(const std::string& name, const PendingStruct& pending) {
    current_struct_ = name;
    RegionId root = parse_region(*pending.node, pending.path);
    m_.structs_.emplace(name, StructDesc{name, root});
  }

  RegionId parse_region(const toml::node& node, const std::string& path) {
    if (!node.is_array()) fail(Errc::SchemaError, path, node, "memory region must be an array of sub-region tables");
    if (m_.regions_.size() >= std::numeric_limits<RegionId>::max())
      fail(Errc::SchemaError, path, node, "too many region descriptors");
    RegionId id = static_cast<RegionId>(m_.regions_.size());
    m_.regions_.emplace_back();
    m_.region_paths_.push_back(path);
    std::size_t index = 0;
    for (const toml::node& item : *node.as_array()) {
      std::string sub_path = index_path(path, index);
      SubRegionDesc sub = parse_sub_region(item, sub_path, index, id);
      m_.regions_[id].subs.push_back(std::move(sub));
      ++index;
    }
    return id;
  }

  static std::int64_t integer(const toml::node& node, const std::string& path) {
    if (!node.is_integer()) fail(Errc::SchemaError, path, node, "expected an integer");
    return node.as_integer()->get();
  }

  SubRegionDesc parse_sub_region(const toml::node& node, const std::string& path, std::size_t index,
                                 RegionId region) {
    if (!node.is_table()) fail(Errc::SchemaError, path, node, "sub-region must be a table");
    const toml::table& table = *node.as_table();
    SubRegionDesc sub;
    const toml::node* ptr_node = nullptr;
    for (auto&& [key, value] : table) {
      std::string_view k = key.str();
      std::string kp = key_path(path, k);
      if (k == "name") {
        auto s = value.value<std::string>();
        if (!value.is_string() || !is_identifier(*s)) fail(Errc::SchemaError, kp, value, "name must be an identifier string");
        sub.name = *s;
      } else if (k == "align") {
        auto v = integer(value, kp);
        if (v <= 0 || !is_power_of_two(static_cast<std::uint64_t>(v)))
          fail(Errc::SchemaError, kp, value, "align must be a positive power of two");
        if (index != 0) fail(Errc::SchemaError, kp, value, "align may only be given on the first sub-region of a region");
        sub.align = static_cast<std::uint64_t>(v);
      } else if (k == "size") {
        if (value.is_string()) {
          auto s = *value.value<std::string>();
          if (!is_identifier(s)) fail(Errc::SchemaError, kp, value, "size name must be an identifier");
          sub.size = SizeSpec{s};
          name_uses_.push_back(NameUse{current_struct_, s, kp, &value});
        } else {
          auto v = integer(value, kp);
          if (v < 0) fail(Errc::SchemaError, kp, value, "size must be non-negative");
          sub.size = SizeSpec{static_cast<std::uint64_t>(v)};
        }
      } else if (k == "unit") {
        auto v = integer(value, kp);
        if (v < 1) fail(Errc::SchemaError, kp, value, "unit must be a positive integer");
        sub.unit = static_cast<std::uint64_t>(v);
      } else if (k == "adjust") {
        sub.adjust = integer(value, kp);
      } else if (k == "type") {
        auto s = value.value<std::string>();
        auto dir = value.is_string() ? parse_direction(*s) : std::nullopt;
        if (!dir) fail(Errc::SchemaError, kp, value, "type must be one of none, out, in, inout");
        sub.type = *dir;
      } else if (k == "ptr") {
        ptr_node = &value;
      } else if (k == "onlyif") {
        if (!value.is_string()) fail(Errc::SchemaError, kp, value, "onlyif must be a string");
        try {
          sub.onlyif = parse_condition(*value.value<std::string>());
        } catch (const Error& e) {
          fail(Errc::SchemaError, kp, value, e.message());
        }
        for (const Token* t : {&sub.onlyif->lhs, &sub.onlyif->rhs})
          if (auto* n = std::get_if<std::string>(t)) name_uses_.push_back(NameUse{current_struct_, *n, kp, &value});
      } else {
        fail(Errc::SchemaError, kp, value, "unknown keyword '" + std::string(k) + "'");
      }
    }
    if (ptr_node) {
      std::string kp = key_path(path, "ptr");
      PtrSpec spec;
      if (ptr_node->is_string()) {
        auto s = *ptr_node->value<std::string>();
        if (!is_identifier(s)) fail(Errc::SchemaError, kp, *ptr_node, "ptr name must be an identifier");
        spec.is_inline = false;
        spec.ref_name = s;
        pending_ptrs_.push_back(PendingPtr{current_struct_, region, index, kp, ptr_node->source().begin.line});
      } else if (ptr_node->is_array()) {
        spec.target = parse_region(*ptr_node, kp);
      } else {
        fail(Errc::SchemaError, kp, *ptr_node, "ptr must be an array of sub-regions or a name");
      }
      if (sub.name) {
        auto& names = named_ptrs_[current_struct_];
        if (!names.contains(*sub.name))
          names.emplace(*sub.name, NamedPtr{spec.is_inline, spec.target, spec.ref_name});
      }
      if (sub.type)
        m_.warnings_.push_back(key_path(path, "type") + ": ignored on a ptr sub-region");
      sub.ptr = std::move(spec);
    } else if (!sub.size) {
      fail(Errc::SchemaError, path, node, "missing mandatory 'size'");
    }
    return sub;
  }

  std::optional<RegionId> lookup_named_ptr(const std::string& owner, const std::string& name,
                                           std::set<std::string>& visiting) {
    auto it = named_ptrs_.find(owner);
    if (it == named_ptrs_.end()) return std::nullopt;
    auto found = it->second.find(name);
    if (found == it->second.end()) return std::nullopt;
    if (found->second.is_inline) return found->second.region;
    if (!visiting.insert(name).second) return std::nullopt;
    return resolve_name(owner, found->second.ref, visiting);
  }

  std::optional<RegionId> resolve_name(const std::string& owner, const std::string& name,
                                       std::set<std::string>& visiting) {
    if (auto r = lookup_named_ptr(owner, name, visiting)) return r;
    if (auto it = m_.structs_.find(name); it != m_.structs_.end()) return it->second.root;
    return std::nullopt;
  }

  void resolve_pointers() {
    for (const auto& p : pending_ptrs_) {
      auto& spec = *m_.regions_[p.region].subs[p.sub].ptr;
      std::set<std::string> visiting;
      auto target = resolve_name(p.owner, spec.ref_name, visiting);
      if (!target)
        raise(Errc::DanglingReference, p.path + ": '" + spec.ref_name +
                                           "' names neither a ptr sub-region of '" + p.owner +
                                           "' nor a struct" +
                                           (p.line ? " (line " + std::to_string(p.line) + ")" : ""));
      spec.target = *target;
    }
    for (const auto& [owner, names] : named_ptrs_) {
      auto& table = m_.ptr_names_[owner];
      for (const auto& [name, _] : names) {
        std::set<std::string> visiting;
        if (auto r = lookup_named_ptr(owner, name, visiting)) table.emplace(name, *r);
      }
    }
  }

  // Every size/onlyif name must name some sub-region reachable from the
  // struct that uses it. Which instance binds is decided at runtime.
  void validate_names() {
    std::map<std::string, std::set<std::string, std::less<>>> reachable_names;
    for (const auto& [name, desc] : m_.structs_) {
      std::set<RegionId> seen;
      std::vector<RegionId> stack{desc.root};
      auto& names = reachable_names[name];
      while (!stack.empty()) {
        RegionId id = stack.back();
        stack.pop_back();
        if (!seen.insert(id).second) continue;
        for (const auto& sub : m_.regions_[id].subs) {
          if (sub.name) names.insert(*sub.name);
          if (sub.ptr) stack.push_back(sub.ptr->target);
        }
      }
    }
    for (const auto& use : name_uses_) {
      if (!reachable_names[use.owner].contains(use.name))
        fail(Errc::DanglingReference, use.path, *use.node,
             "'" + use.name + "' does not name any sub-region of '" + use.owner + "'");
    }
  }

  void build_rules() {
    std::map<std::uint32_t, std::string> seen_requests;
    for (const auto& [id, pending] : rule_nodes_) {
      IoctlRule rule;
      rule.id = id;
      bool has_request = false;
      for (auto&& [key, value] : *pending.table) {
        std::string kp = key_path(pending.path, key.str());
        if (key.str() == "request") {
          auto v = integer(value, kp);
          if (v < 0 || v > 0xffff'ffffLL) fail(Errc::SchemaError, kp, value, "request code must fit in 32 bits unsigned");
          rule.request = static_cast<std::uint32_t>(v);
          has_request = true;
        } else if (key.str() == "struct") {
          if (!value.is_string()) fail(Errc::SchemaError, kp, value, "struct must be a struct name string");
          std::string s = *value.value<std::string>();
          if (!m_.structs_.contains(s))
            fail(Errc::DanglingReference, kp, value, "unknown struct '" + s + "'");
          rule.struct_name = std::move(s);
        } else {
          fail(Errc::SchemaError, kp, value, "unknown keyword '" + std::string(key.str()) + "'");
        }
      }
      if (!has_request) fail(Errc::SchemaError, pending.path, *pending.table, "missing mandatory 'request'");
      auto [it, inserted] = seen_requests.emplace(rule.request, pending.path);
      if (!inserted)
        fail(Errc::DuplicateRequestCode, key_path(pending.path, "request"), *pending.table,
             "request code " + hex_u64(rule.request) + " already used by " + it->second);
      m_.rules_.push_back(std::move(rule));
    }
  }

  Manifest& m_;
  std::string current_struct_;
  std::map<std::string, PendingStruct> struct_nodes_;
  std::map<std::string, PendingRule> rule_nodes_;
  std::vector<PendingPtr> pending_ptrs_;
  std::map<std::string, std::map<std::string, NamedPtr>> named_ptrs_;
  std::vector<NameUse> name_uses_;
};

Manifest parse_manifest(std::string_view text, std::string_view source_name) {
  toml::table root;
  try {
    root = toml::parse(text, source_name);
  } catch (const toml::parse_error& e) {
    const auto& src = e.source();
    raise(Errc::SyntaxError, std::string(source_name) + ":" + std::to_string(src.begin.line) + ":" +
                                 std::to_string(src.begin.column) + ": " + std::string(e.description()));
  }
  Manifest m;
  ManifestBuilder(m).load(root);
  return m;
}

namespace {

toml::array emit_region(const Manifest& m, RegionId id);

toml::table emit_sub(const Manifest& m, const SubRegionDesc& sub) {
  toml::table t;
  if (sub.name) t.insert("name", *sub.name);
  if (sub.align) t.insert("align", static_cast<std::int64_t>(*sub.align));
  if (sub.size) {
    if (auto* v = std::get_if<std::uint64_t>(&*sub.size))
      t.insert("size", static_cast<std::int64_t>(*v));
    else
      t.insert("size", std::get<std::string>(*sub.size));
  }
  if (sub.unit != 1) t.insert("unit", static_cast<std::int64_t>(sub.unit));
  if (sub.adjust != 0) t.insert("adjust", sub.adjust);
  if (sub.type) t.insert("type", std::string(to_string(*sub.type)));
  if (sub.ptr) {
    if (sub.ptr->is_inline)
      t.insert("ptr", emit_region(m, sub.ptr->target));
    else
      t.insert("ptr", sub.ptr->ref_name);
  }
  if (sub.onlyif) t.insert("onlyif", to_string(*sub.onlyif));
  return t;
}

toml::array emit_region(const Manifest& m, RegionId id) {
  toml::array arr;
  for (const auto& sub : m.region(id).subs) arr.push_back(emit_sub(m, sub));
  return arr;
}

}  // namespace

std::string to_canonical_toml(const Manifest& manifest) {
  toml::table root;
  if (!manifest.allowed_files().empty()) {
    toml::array files;
    for (const auto& f : manifest.allowed_files()) files.push_back((f.is_device ? "dev:" : "") + f.path);
    root.insert("allowed_files", std::move(files));
  }
  if (!manifest.rules().empty()) {
    toml::table rules;
    for (const auto& rule : manifest.rules()) {
      toml::table r;
      toml::value<std::int64_t> code(static_cast<std::int64_t>(rule.request));
      code.flags(toml::value_flags::format_as_hexadecimal);
      r.insert("request", std::move(code));
      if (rule.struct_name) r.insert("struct", *rule.struct_name);
      rules.insert(rule.id, std::move(r));
    }
    root.insert("allowed_ioctls", std::move(rules));
  }
  if (!manifest.structs().empty()) {
    toml::table structs;
    for (const auto& [name, desc] : manifest.structs()) structs.insert(name, emit_region(manifest, desc.root));
    root.insert("ioctl_structs", std::move(structs));
  }
  std::ostringstream out;
  out << toml::toml_formatter{root} << '\n';
  return out.str();
}

}  // namespace eioctl
