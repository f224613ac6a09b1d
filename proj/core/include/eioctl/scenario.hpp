#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "eioctl/arena.hpp"
#include "eioctl/error.hpp"
#include "eioctl/manifest.hpp"
#include "eioctl/runtime.hpp"

namespace eioctl {

// --- memdump files: [[arena]] world/base/bytes records ---------------------

std::vector<ArenaRecord> parse_memdump(std::string_view text, std::string_view source_name = "memdump");
std::string format_memdump(const std::vector<ArenaRecord>& records);
/// Writes records into the arenas; each record must lie inside its world.
void apply_records(ArenaPair& arenas, const std::vector<ArenaRecord>& records);

// --- scenarios --------------------------------------------------------------

/// fd operand of a step: a symbol bound by an earlier open, or a number.
using FdRef = std::variant<std::string, std::int64_t>;

// Write pokes bytes into an arena mid-trace, e.g. to fill a freshly mapped
// device buffer.
enum class StepOp { Open, Close, Mmap, Ioctl, Write };

struct ScenarioStep {
  StepOp op = StepOp::Open;
  std::string path;             // open
  std::optional<std::string> bind;  // open: symbol for the new fd
  FdRef fd = std::int64_t{-1};  // close, mmap, ioctl
  std::uint64_t length = 0;     // mmap
  std::uint32_t prot = 0;
  std::uint32_t flags = 0;
  std::uint64_t offset = 0;
  std::uint32_t request = 0;    // ioctl
  std::uint64_t arg = 0;
  ArenaRecord data;             // write
  std::optional<std::int64_t> expect;
  std::optional<Errc> expect_error;
};

struct DeviceBinding {
  std::string path;
  std::string kind;  // image_ops | drm | poll | shim
};

struct HookBinding {
  std::uint32_t request = 0;
  std::string kind;  // fence | sanitize_getparam
  std::optional<std::string> field;
};

struct VirtualFile {
  std::string path;
  Bytes contents;
};

struct Scenario {
  std::vector<DeviceBinding> devices;
  std::vector<HookBinding> hooks;
  std::vector<VirtualFile> files;
  std::vector<ArenaRecord> init;
  std::vector<ScenarioStep> steps;
  std::vector<ArenaRecord> expect;
};

/// Throws ScenarioError with the TOML path of the offending entry.
Scenario parse_scenario(std::string_view text, std::string_view source_name = "scenario");

struct ScenarioReport {
  bool passed = false;
  // First failure: step index or expect block, with a byte diff for memory.
  std::string failure;
  std::vector<std::string> log;
};

/// Builds a session, installs the scenario's devices and hooks, executes
/// the steps and checks the expect blocks. `session_out`, when given,
/// receives the session for dumping.
ScenarioReport run_scenario(std::shared_ptr<const Manifest> manifest, const Scenario& scenario,
                            std::unique_ptr<Session>* session_out = nullptr);

}  // namespace eioctl
