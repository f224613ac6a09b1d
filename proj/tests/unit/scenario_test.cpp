#include <gtest/gtest.h>

#include "eioctl/hex.hpp"
#include "eioctl/scenario.hpp"
#include "errc.hpp"
#include "fixtures.hpp"

using namespace eioctl;
using eioctl::testing::code_of;
using eioctl::testing::load_manifest;
using eioctl::testing::read_file;
using eioctl::testing::source_path;

namespace {

ScenarioReport run_fixture(std::string_view manifest, std::string_view scenario,
                           std::unique_ptr<Session>* out = nullptr) {
  auto m = load_manifest("fixtures/manifests/" + std::string(manifest));
  Scenario sc = parse_scenario(read_file(source_path("fixtures/scenarios/" + std::string(scenario))));
  return run_scenario(m, sc, out);
}

std::string error_text(std::string_view text) {
  try {
    parse_scenario(text);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

const char* kGpuDevice = "[[device]]\npath = \"/dev/gpu\"\nkind = \"image_ops\"\n";

}  // namespace

TEST(Scenario, ShippedScenariosPass) {
  EXPECT_TRUE(run_fixture("gpu_app.toml", "flagship.toml").passed);
  EXPECT_TRUE(run_fixture("poll_demo.toml", "poll_divergence.toml").passed);
  auto drm = run_fixture("drm_mock.toml", "drm.toml");
  EXPECT_TRUE(drm.passed) << drm.failure;
}

TEST(Scenario, WrongByteReportsDiff) {
  auto r = run_fixture("gpu_app.toml", "flagship_wrong_byte.toml");
  EXPECT_FALSE(r.passed);
  EXPECT_NE(r.failure.find("memory mismatch"), std::string::npos) << r.failure;
  EXPECT_NE(r.failure.find("expected"), std::string::npos);
}

TEST(Scenario, SessionIsHandedBack) {
  std::unique_ptr<Session> s;
  run_fixture("gpu_app.toml", "flagship.toml", &s);
  ASSERT_TRUE(s);
  EXPECT_EQ(s->arenas().read_u64(GuestAddress{0x10000044}), 1u);
  auto records = s->arenas().dump();
  auto text = format_memdump(records);
  auto back = parse_memdump(text);
  ASSERT_EQ(back.size(), records.size());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_TRUE(back[i] == records[i]);
}

TEST(Scenario, ParseErrorsNameTheEntry) {
  EXPECT_NE(error_text("[[step]]\nop = \"jump\"\n").find("step[0].op"), std::string::npos);
  EXPECT_NE(error_text("[[step]]\nop = \"open\"\npath = \"x\"\ncolour = 1\n").find("step[0].colour"),
            std::string::npos);
  EXPECT_NE(error_text("[[init]]\nworld = \"mars\"\nbase = 0\nbytes = \"00\"\n").find("init[0].world"),
            std::string::npos);
  EXPECT_NE(error_text("[[init]]\nworld = \"enclave\"\nbase = 0\nbytes = \"0g\"\n").find("init[0].bytes"),
            std::string::npos);
  EXPECT_NE(error_text("[[device]]\npath = \"/x\"\nkind = \"toaster\"\n").find("device[0].kind"), std::string::npos);
  EXPECT_NE(error_text("[[step]]\nop = \"ioctl\"\nfd = 3\nrequest = \"0x100000000\"\n").find("step[0].request"),
            std::string::npos);
  EXPECT_NE(error_text("[[step]]\nop = \"open\"\npath = \"x\"\nexpect_error = \"Oops\"\n").find("expect_error"),
            std::string::npos);
  EXPECT_NE(error_text("stray = 1\n").find("stray"), std::string::npos);
  EXPECT_EQ(code_of([] { parse_scenario("[[step]\n"); }), Errc::SyntaxError);
  EXPECT_EQ(code_of([] { parse_scenario("[[step]]\nop = \"mmap\"\nlength = 1\nflags = [\"huge\"]\n"); }),
            Errc::ScenarioError);
}

TEST(Scenario, ExpectErrorAndReturnValues) {
  auto m = load_manifest("fixtures/manifests/gpu_app.toml");
  auto run = [&](std::string body) { return run_scenario(m, parse_scenario(kGpuDevice + body)); };
  EXPECT_TRUE(run("[[step]]\nop = \"open\"\npath = \"/etc/shadow\"\nexpect_error = \"AccessDenied\"\n").passed);
  auto wrong = run("[[step]]\nop = \"open\"\npath = \"/etc/shadow\"\nexpect_error = \"BadFd\"\n");
  EXPECT_FALSE(wrong.passed);
  EXPECT_NE(wrong.failure.find("step[0]: expected BadFd, got AccessDenied"), std::string::npos) << wrong.failure;
  auto ok = run("[[step]]\nop = \"open\"\npath = \"/dev/gpu\"\nexpect_error = \"NoDevice\"\n");
  EXPECT_NE(ok.failure.find("call succeeded"), std::string::npos);
  auto ret = run("[[step]]\nop = \"open\"\npath = \"/dev/gpu\"\nexpect = 9\n");
  EXPECT_NE(ret.failure.find("expected return 9, got 3"), std::string::npos);
  auto unbound = run("[[step]]\nop = \"close\"\nfd = \"nope\"\n");
  EXPECT_NE(unbound.failure.find("fd symbol 'nope'"), std::string::npos);
  auto unexpected = run("[[step]]\nop = \"ioctl\"\nfd = 3\nrequest = 1\n");
  EXPECT_NE(unexpected.failure.find("step[0]: BadFd"), std::string::npos) << unexpected.failure;
}

TEST(Scenario, RecordsMustFitTheirWorld) {
  auto m = load_manifest("fixtures/manifests/gpu_app.toml");
  auto r = run_scenario(m, parse_scenario("[[init]]\nworld = \"untrusted\"\nbase = \"0x10000000\"\nbytes = \"00\"\n"));
  EXPECT_NE(r.failure.find("init:"), std::string::npos);
  auto e = run_scenario(m, parse_scenario("[[expect]]\nworld = \"enclave\"\nbase = \"0x80000000\"\nbytes = \"00\"\n"));
  EXPECT_NE(e.failure.find("expect[0]"), std::string::npos);
}

TEST(Scenario, FileMmapSeesVirtualFile) {
  auto m = load_manifest("fixtures/manifests/gpu_app.toml");
  auto r = run_scenario(m, parse_scenario(R"(
[[file]]
path = "config.txt"
text = "AB"

[[step]]
op = "open"
path = "config.txt"
bind = "cfg"

[[step]]
op = "mmap"
fd = "cfg"
length = 2
prot = 1
flags = ["private"]
expect = "0x10800000"

[[expect]]
world = "enclave"
base = "0x10800000"
bytes = "414200"
)"));
  EXPECT_TRUE(r.passed) << r.failure;
}

TEST(Memdump, FormatParseApply) {
  std::vector<ArenaRecord> recs{{World::Enclave, GuestAddress{0x10000010}, to_bytes("hi")},
                                {World::Untrusted, GuestAddress{0x80000000}, Bytes{std::byte{0xff}}}};
  std::string text = format_memdump(recs);
  EXPECT_NE(text.find("base = \"0x10000010\""), std::string::npos);
  auto back = parse_memdump(text);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_TRUE(back[0] == recs[0]);
  ArenaPair a;
  apply_records(a, back);
  EXPECT_EQ(a.read_bytes(GuestAddress{0x10000010}, 2), to_bytes("hi"));
  EXPECT_EQ(code_of([] { parse_memdump("other = 1\n"); }), Errc::ScenarioError);
  EXPECT_EQ(code_of([] { parse_memdump("[[arena]]\nworld = \"enclave\"\nbase = -1\nbytes = \"\"\n"); }),
            Errc::ScenarioError);
}
