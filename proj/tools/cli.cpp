#include "cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "eioctl/error.hpp"
#include "eioctl/hex.hpp"
#include "eioctl/manifest.hpp"
#include "eioctl/marshal.hpp"
#include "eioctl/scenario.hpp"

namespace eioctl::cli {

namespace {

std::optional<std::string> slurp(const std::string& path, std::ostream& err) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    err << path << ": cannot read file\n";
    return std::nullopt;
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_validate(const std::string& manifest_path, std::ostream& err) {
  auto text = slurp(manifest_path, err);
  if (!text) return kFailure;
  try {
    Manifest m = parse_manifest(*text, manifest_path);
    for (const auto& w : m.warnings()) err << manifest_path << ": warning: " << w << "\n";
    return kPass;
  } catch (const Error& e) {
    err << manifest_path << ": " << e.what() << "\n";
    return kFailure;
  }
}

int cmd_plan(const std::string& manifest_path, const std::string& struct_name, const std::string& mem_path,
             const std::string& arg_text, std::ostream& out, std::ostream& err) {
  auto root = parse_u64(arg_text);
  if (!root) {
    err << "--arg: '" << arg_text << "' is not a decimal or 0x-hex address\n";
    return kUsage;
  }
  auto manifest_text = slurp(manifest_path, err);
  auto mem_text = slurp(mem_path, err);
  if (!manifest_text || !mem_text) return kFailure;

  std::string phase = "manifest";
  try {
    Manifest manifest = parse_manifest(*manifest_text, manifest_path);
    const StructDesc& desc = manifest.resolve_struct(struct_name);
    phase = "memdump";
    ArenaPair arenas;
    apply_records(arenas, parse_memdump(*mem_text, mem_path));
    phase = "collect";
    CopyPlan plan = collect_sub_regions(manifest, desc, GuestAddress{*root}, arenas);
    phase = "copy-out";
    copy_out(plan, arenas);
    out << format_plan(plan);
    return kPass;
  } catch (const Error& e) {
    err << phase << ": " << e.what() << "\n";
    return kFailure;
  }
}

int cmd_run(const std::string& manifest_path, const std::string& scenario_path, const std::string& dump_path,
            std::ostream& out, std::ostream& err) {
  auto manifest_text = slurp(manifest_path, err);
  auto scenario_text = slurp(scenario_path, err);
  if (!manifest_text || !scenario_text) return kFailure;
  try {
    auto manifest = std::make_shared<const Manifest>(parse_manifest(*manifest_text, manifest_path));
    Scenario scenario = parse_scenario(*scenario_text, scenario_path);
    std::unique_ptr<Session> session;
    ScenarioReport report = run_scenario(manifest, scenario, &session);
    for (const auto& line : report.log) out << line << "\n";
    if (!dump_path.empty() && session) {
      std::ofstream dump(dump_path, std::ios::binary);
      if (!dump) {
        err << dump_path << ": cannot write arena dump\n";
        return kFailure;
      }
      dump << format_memdump(session->arenas().dump());
    }
    if (!report.passed) {
      err << scenario_path << ": FAIL " << report.failure << "\n";
      return kFailure;
    }
    out << scenario_path << ": PASS\n";
    return kPass;
  } catch (const Error& e) {
    err << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ioctl marshalling simulator", "eioctl"};
  app.require_subcommand(1);

  std::string manifest, struct_name, mem, arg, scenario, dump;

  auto* validate = app.add_subcommand("validate", "Check a manifest; silent on success");
  validate->add_option("manifest", manifest, "Manifest TOML file")->required();

  auto* plan = app.add_subcommand("plan", "Print the copy plan for a struct over a memory dump");
  plan->add_option("--manifest", manifest, "Manifest TOML file")->required();
  plan->add_option("--struct", struct_name, "Struct name from ioctl_structs")->required();
  plan->add_option("--mem", mem, "Memdump TOML file")->required();
  plan->add_option("--arg", arg, "Root address (hex or decimal)")->required();

  auto* run_cmd = app.add_subcommand("run", "Execute a scenario against a manifest");
  run_cmd->add_option("--manifest", manifest, "Manifest TOML file")->required();
  run_cmd->add_option("--scenario", scenario, "Scenario TOML file")->required();
  run_cmd->add_option("--dump-arenas", dump, "Write the final arenas as a memdump");

  std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kPass;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kPass;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return kUsage;
  }

  if (validate->parsed()) return cmd_validate(manifest, err);
  if (plan->parsed()) return cmd_plan(manifest, struct_name, mem, arg, out, err);
  return cmd_run(manifest, scenario, dump, out, err);
}

}  // namespace eioctl::cli
