#include "eioctl/scenario.hpp"

#include <map>
#include <sstream>

#include "eioctl/devices.hpp"
#include "eioctl/hex.hpp"
#include "eioctl/shimrpc.hpp"
#include "toml_config.hpp"

namespace eioctl {

namespace {

[[noreturn]] void fail(const std::string& path, const toml::node* node, const std::string& what) {
  std::string msg = path + ": " + what;
  if (node && node->source().begin.line) msg += " (line " + std::to_string(node->source().begin.line) + ")";
  raise(Errc::ScenarioError, msg);
}

toml::table parse_toml(std::string_view text, std::string_view source_name) {
  try {
    return toml::parse(text, source_name);
  } catch (const toml::parse_error& e) {
    raise(Errc::SyntaxError, std::string(source_name) + ":" + std::to_string(e.source().begin.line) + ":" +
                                 std::to_string(e.source().begin.column) + ": " + std::string(e.description()));
  }
}

std::string sub_path(const std::string& parent, std::string_view key) { return parent + "." + std::string(key); }

const toml::array* array_of_tables(const toml::table& root, std::string_view key) {
  const toml::node* node = root.get(key);
  if (!node) return nullptr;
  if (!node->is_array()) fail(std::string(key), node, "expected an array of tables");
  for (const auto& item : *node->as_array())
    if (!item.is_table()) fail(std::string(key), &item, "expected an array of tables");
  return node->as_array();
}

// Integers may be TOML integers or decimal/0x strings (for values above 2^63).
std::uint64_t get_u64(const toml::table& t, std::string_view key, const std::string& path) {
  const toml::node* node = t.get(key);
  std::string p = sub_path(path, key);
  if (!node) fail(p, nullptr, "missing");
  if (node->is_integer()) {
    auto v = node->as_integer()->get();
    if (v < 0) fail(p, node, "must be non-negative");
    return static_cast<std::uint64_t>(v);
  }
  if (node->is_string()) {
    if (auto v = parse_u64(*node->value<std::string>())) return *v;
  }
  fail(p, node, "expected an unsigned integer or a decimal/0x string");
}

std::optional<std::uint64_t> opt_u64(const toml::table& t, std::string_view key, const std::string& path) {
  if (!t.get(key)) return std::nullopt;
  return get_u64(t, key, path);
}

std::string get_string(const toml::table& t, std::string_view key, const std::string& path) {
  const toml::node* node = t.get(key);
  if (!node || !node->is_string()) fail(sub_path(path, key), node, "expected a string");
  return *node->value<std::string>();
}

std::optional<std::string> opt_string(const toml::table& t, std::string_view key, const std::string& path) {
  if (!t.get(key)) return std::nullopt;
  return get_string(t, key, path);
}

void check_keys(const toml::table& t, const std::string& path, std::initializer_list<std::string_view> allowed) {
  for (auto&& [key, value] : t) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key.str() == a;
    if (!ok) fail(sub_path(path, key.str()), &value, "unknown key");
  }
}

World parse_world(const std::string& text, const std::string& path, const toml::node* node) {
  if (text == "enclave") return World::Enclave;
  if (text == "untrusted") return World::Untrusted;
  fail(path, node, "world must be 'enclave' or 'untrusted'");
}

ArenaRecord parse_record(const toml::table& t, const std::string& path) {
  check_keys(t, path, {"world", "base", "bytes"});
  ArenaRecord r;
  r.world = parse_world(get_string(t, "world", path), sub_path(path, "world"), t.get("world"));
  r.base = GuestAddress{get_u64(t, "base", path)};
  auto bytes = from_hex(get_string(t, "bytes", path));
  if (!bytes) fail(sub_path(path, "bytes"), t.get("bytes"), "expected contiguous hex bytes");
  r.bytes = std::move(*bytes);
  return r;
}

std::vector<ArenaRecord> parse_records(const toml::table& root, std::string_view key) {
  std::vector<ArenaRecord> out;
  if (const auto* arr = array_of_tables(root, key)) {
    std::size_t i = 0;
    for (const auto& item : *arr) out.push_back(parse_record(*item.as_table(), std::string(key) + "[" + std::to_string(i++) + "]"));
  }
  return out;
}

std::uint32_t parse_flag_list(const toml::table& t, std::string_view key, const std::string& path,
                              const std::map<std::string, std::uint32_t, std::less<>>& names) {
  const toml::node* node = t.get(key);
  if (!node) return 0;
  std::string p = sub_path(path, key);
  if (node->is_integer()) return static_cast<std::uint32_t>(node->as_integer()->get());
  if (!node->is_array()) fail(p, node, "expected an integer or a list of flag names");
  std::uint32_t bits = 0;
  for (const auto& item : *node->as_array()) {
    auto name = item.value<std::string>();
    auto it = name ? names.find(*name) : names.end();
    if (it == names.end()) fail(p, &item, "unknown flag");
    bits |= it->second;
  }
  return bits;
}

std::optional<Errc> errc_from_string(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(Errc::ScenarioError); ++i)
    if (to_string(static_cast<Errc>(i)) == name) return static_cast<Errc>(i);
  return std::nullopt;
}

ScenarioStep parse_step(const toml::table& t, const std::string& path) {
  ScenarioStep s;
  std::string op = get_string(t, "op", path);
  auto fd_ref = [&]() -> FdRef {
    const toml::node* node = t.get("fd");
    if (!node) fail(sub_path(path, "fd"), nullptr, "missing");
    if (node->is_integer()) return node->as_integer()->get();
    if (node->is_string()) return *node->value<std::string>();
    fail(sub_path(path, "fd"), node, "expected an fd symbol or number");
  };
  if (op == "open") {
    check_keys(t, path, {"op", "path", "bind", "expect", "expect_error"});
    s.op = StepOp::Open;
    s.path = get_string(t, "path", path);
    s.bind = opt_string(t, "bind", path);
  } else if (op == "close") {
    check_keys(t, path, {"op", "fd", "expect", "expect_error"});
    s.op = StepOp::Close;
    s.fd = fd_ref();
  } else if (op == "mmap") {
    check_keys(t, path, {"op", "fd", "length", "prot", "flags", "offset", "expect", "expect_error"});
    s.op = StepOp::Mmap;
    s.fd = t.get("fd") ? fd_ref() : FdRef{std::int64_t{-1}};
    s.length = get_u64(t, "length", path);
    s.prot = parse_flag_list(t, "prot", path, {{"read", kProtRead}, {"write", kProtWrite}});
    s.flags = parse_flag_list(t, "flags", path,
                              {{"shared", kMapShared}, {"private", kMapPrivate}, {"anonymous", kMapAnonymous}});
    s.offset = opt_u64(t, "offset", path).value_or(0);
  } else if (op == "ioctl") {
    check_keys(t, path, {"op", "fd", "request", "arg", "expect", "expect_error"});
    s.op = StepOp::Ioctl;
    s.fd = fd_ref();
    std::uint64_t request = get_u64(t, "request", path);
    if (request > 0xffff'ffffu) fail(sub_path(path, "request"), t.get("request"), "request code must fit in 32 bits");
    s.request = static_cast<std::uint32_t>(request);
    s.arg = opt_u64(t, "arg", path).value_or(0);
  } else if (op == "write") {
    check_keys(t, path, {"op", "world", "base", "bytes"});
    s.op = StepOp::Write;
    toml::table rec;
    for (auto key : {"world", "base", "bytes"})
      if (const toml::node* n = t.get(key)) rec.insert(key, *n);
    s.data = parse_record(rec, path);
  } else {
    fail(sub_path(path, "op"), t.get("op"), "op must be open, close, mmap, ioctl or write");
  }
  if (const toml::node* e = t.get("expect")) {
    if (e->is_integer())
      s.expect = e->as_integer()->get();
    else
      s.expect = static_cast<std::int64_t>(get_u64(t, "expect", path));
  }
  if (auto name = opt_string(t, "expect_error", path)) {
    s.expect_error = errc_from_string(*name);
    if (!s.expect_error) fail(sub_path(path, "expect_error"), t.get("expect_error"), "unknown error name");
  }
  return s;
}

std::string describe_diff(const ArenaRecord& want, const Bytes& got) {
  std::ostringstream os;
  int shown = 0;
  for (std::size_t i = 0; i < want.bytes.size() && shown < 8; ++i) {
    if (want.bytes[i] == got[i]) continue;
    os << "\n  at " << hex_u64(want.base.value + i) << " (+" << i << "): expected "
       << to_hex(std::span(&want.bytes[i], 1)) << " got " << to_hex(std::span(&got[i], 1));
    ++shown;
  }
  return os.str();
}

}  // namespace

std::vector<ArenaRecord> parse_memdump(std::string_view text, std::string_view source_name) {
  toml::table root = parse_toml(text, source_name);
  check_keys(root, std::string(source_name), {"arena"});
  return parse_records(root, "arena");
}

std::string format_memdump(const std::vector<ArenaRecord>& records) {
  std::ostringstream os;
  for (const auto& r : records) {
    os << "[[arena]]\nworld = \"" << to_string(r.world) << "\"\nbase = \"" << hex_u64(r.base.value)
       << "\"\nbytes = \"" << to_hex(r.bytes) << "\"\n\n";
  }
  return os.str();
}

void apply_records(ArenaPair& arenas, const std::vector<ArenaRecord>& records) {
  for (const auto& r : records) {
    if (arenas.world_of_range(r.base, r.bytes.size()) != r.world)
      raise(Errc::ScenarioError, "record at " + hex_u64(r.base.value) + " does not lie inside the " +
                                     std::string(to_string(r.world)) + " arena");
    arenas.write_bytes(r.base, r.bytes);
  }
}

Scenario parse_scenario(std::string_view text, std::string_view source_name) {
  toml::table root = parse_toml(text, source_name);
  check_keys(root, std::string(source_name), {"device", "hook", "file", "init", "step", "expect"});
  Scenario sc;
  if (const auto* arr = array_of_tables(root, "device")) {
    std::size_t i = 0;
    for (const auto& item : *arr) {
      std::string path = "device[" + std::to_string(i++) + "]";
      const auto& t = *item.as_table();
      check_keys(t, path, {"path", "kind"});
      DeviceBinding d{get_string(t, "path", path), get_string(t, "kind", path)};
      if (d.kind != "image_ops" && d.kind != "drm" && d.kind != "poll" && d.kind != "shim")
        fail(sub_path(path, "kind"), t.get("kind"), "kind must be image_ops, drm, poll or shim");
      sc.devices.push_back(std::move(d));
    }
  }
  if (const auto* arr = array_of_tables(root, "hook")) {
    std::size_t i = 0;
    for (const auto& item : *arr) {
      std::string path = "hook[" + std::to_string(i++) + "]";
      const auto& t = *item.as_table();
      check_keys(t, path, {"request", "kind", "field"});
      HookBinding h;
      h.request = static_cast<std::uint32_t>(get_u64(t, "request", path));
      h.kind = get_string(t, "kind", path);
      h.field = opt_string(t, "field", path);
      if (h.kind != "fence" && h.kind != "sanitize_getparam")
        fail(sub_path(path, "kind"), t.get("kind"), "kind must be fence or sanitize_getparam");
      sc.hooks.push_back(std::move(h));
    }
  }
  if (const auto* arr = array_of_tables(root, "file")) {
    std::size_t i = 0;
    for (const auto& item : *arr) {
      std::string path = "file[" + std::to_string(i++) + "]";
      const auto& t = *item.as_table();
      check_keys(t, path, {"path", "text", "bytes"});
      VirtualFile f{get_string(t, "path", path), {}};
      if (auto text = opt_string(t, "text", path)) {
        f.contents = to_bytes(*text);
      } else if (auto hex = opt_string(t, "bytes", path)) {
        auto b = from_hex(*hex);
        if (!b) fail(sub_path(path, "bytes"), t.get("bytes"), "expected contiguous hex bytes");
        f.contents = std::move(*b);
      }
      sc.files.push_back(std::move(f));
    }
  }
  sc.init = parse_records(root, "init");
  sc.expect = parse_records(root, "expect");
  if (const auto* arr = array_of_tables(root, "step")) {
    std::size_t i = 0;
    for (const auto& item : *arr) sc.steps.push_back(parse_step(*item.as_table(), "step[" + std::to_string(i++) + "]"));
  }
  return sc;
}

ScenarioReport run_scenario(std::shared_ptr<const Manifest> manifest, const Scenario& scenario,
                            std::unique_ptr<Session>* session_out) {
  ScenarioReport report;
  auto session = std::make_unique<Session>(std::move(manifest));

  for (const auto& d : scenario.devices) {
    if (d.kind == "image_ops") session->register_device(d.path, devices::make_image_ops_device());
    else if (d.kind == "drm") session->register_device(d.path, devices::make_drm_device());
    else if (d.kind == "poll") session->register_device(d.path, devices::make_poll_device());
    else if (d.kind == "shim") session->register_device(d.path, shim::fixture_library().as_device());
  }
  for (const auto& h : scenario.hooks) {
    if (h.kind == "fence")
      session->register_post_hook(h.request, devices::make_fence_post_hook(h.field.value_or("out_fence")));
    else
      session->register_post_hook(h.request, devices::make_sanitize_getparam_hook(
                                                 devices::kParamHasBsd2, "param", h.field.value_or("result")));
  }
  for (const auto& f : scenario.files) session->add_virtual_file(f.path, f.contents);

  auto finish = [&](std::string failure) {
    report.failure = std::move(failure);
    report.passed = report.failure.empty();
    if (session_out) *session_out = std::move(session);
    return report;
  };

  try {
    apply_records(session->arenas(), scenario.init);
  } catch (const Error& e) {
    return finish("init: " + std::string(e.what()));
  }

  std::map<std::string, int, std::less<>> symbols;
  for (std::size_t i = 0; i < scenario.steps.size(); ++i) {
    const ScenarioStep& step = scenario.steps[i];
    const std::string where = "step[" + std::to_string(i) + "]";
    auto resolve_fd = [&](const FdRef& ref) -> int {
      if (auto* n = std::get_if<std::int64_t>(&ref)) return static_cast<int>(*n);
      const auto& name = std::get<std::string>(ref);
      auto it = symbols.find(name);
      if (it == symbols.end()) raise(Errc::ScenarioError, "fd symbol '" + name + "' is not bound");
      return it->second;
    };
    std::int64_t value = 0;
    std::optional<Error> error;
    try {
      switch (step.op) {
        case StepOp::Open: {
          int fd = session->open(step.path);
          if (step.bind) symbols[*step.bind] = fd;
          value = fd;
          break;
        }
        case StepOp::Close: session->close(resolve_fd(step.fd)); break;
        case StepOp::Mmap:
          value = static_cast<std::int64_t>(
              session->mmap(GuestAddress{}, step.length, step.prot, step.flags, resolve_fd(step.fd), step.offset).value);
          break;
        case StepOp::Ioctl: value = session->ioctl(resolve_fd(step.fd), step.request, step.arg); break;
        case StepOp::Write: apply_records(session->arenas(), {step.data}); break;
      }
    } catch (const Error& e) {
      if (e.code() == Errc::ScenarioError) return finish(where + ": " + e.what());
      error = e;
    }
    if (step.expect_error) {
      if (!error) return finish(where + ": expected " + std::string(to_string(*step.expect_error)) + ", call succeeded");
      if (error->code() != *step.expect_error)
        return finish(where + ": expected " + std::string(to_string(*step.expect_error)) + ", got " + error->what());
      report.log.push_back(where + ": failed as expected with " + std::string(to_string(error->code())));
      continue;
    }
    if (error) return finish(where + ": " + error->what());
    if (step.expect && *step.expect != value)
      return finish(where + ": expected return " + std::to_string(*step.expect) + ", got " + std::to_string(value));
    report.log.push_back(where + ": returned " + std::to_string(value));
  }

  for (std::size_t i = 0; i < scenario.expect.size(); ++i) {
    const ArenaRecord& want = scenario.expect[i];
    const std::string where = "expect[" + std::to_string(i) + "]";
    if (session->arenas().world_of_range(want.base, want.bytes.size()) != want.world)
      return finish(where + ": range at " + hex_u64(want.base.value) + " is not inside the " +
                    std::string(to_string(want.world)) + " arena");
    Bytes got = session->arenas().read_bytes(want.base, want.bytes.size());
    if (got != want.bytes) return finish(where + ": memory mismatch" + describe_diff(want, got));
  }
  return finish("");
}

}  // namespace eioctl
