#include <benchmark/benchmark.h>

#include "eioctl/devices.hpp"
#include "eioctl/marshal.hpp"
#include "eioctl/runtime.hpp"

using namespace eioctl;

namespace {

constexpr std::uint64_t E = 0x1000'0000;
constexpr std::uint64_t U = 0x8000'0000;

const char* kListManifest =
    "sgx.allowed_files = \"dev:/dev/gpu\"\n"
    "allowed_ioctls.io1.request = 0xc0007102\n"
    "allowed_ioctls.io1.struct = \"ops_for_gpu\"\n"
    "ioctl_structs.ops_for_gpu = [\n"
    "  {name=\"img_buf_size\", size=8, type=\"out\"},\n"
    "  {name=\"img_buf\", size=8, type=\"out\"},\n"
    "  {name=\"op\", ptr=[\n"
    "    {name=\"operation\", size=4, type=\"out\"},\n"
    "    {name=\"seconds_spent\", size=8, type=\"in\"},\n"
    "    {name=\"op_list_next\", ptr=\"op\"}\n"
    "  ]}\n"
    "]\n";

// ops_for_gpu request with an n-node op list.
void write_list(ArenaPair& a, int n) {
  a.write_u64(GuestAddress{E}, 16);
  a.write_u64(GuestAddress{E + 8}, U + 0x10'0000);
  a.write_u64(GuestAddress{E + 16}, n ? E + 0x40 : 0);
  for (int i = 0; i < n; ++i) {
    GuestAddress node{E + 0x40 + 0x20u * i};
    a.write_uint(node, i % 2 ? devices::kOpInvert : devices::kOpFlip, 4);
    a.write_u64(node + 12, i + 1 < n ? node.value + 0x20 : 0);
  }
}

void BM_CollectList(benchmark::State& state) {
  Manifest m = parse_manifest(kListManifest);
  ArenaPair a;
  write_list(a, static_cast<int>(state.range(0)));
  const StructDesc& desc = m.resolve_struct("ops_for_gpu");
  for (auto _ : state) benchmark::DoNotOptimize(collect_sub_regions(m, desc, GuestAddress{E}, a));
  state.SetItemsProcessed(state.iterations() * (state.range(0) + 1));
}
BENCHMARK(BM_CollectList)->Arg(1)->Arg(8)->Arg(64);

void BM_CopyOutBack(benchmark::State& state) {
  Manifest m = parse_manifest(kListManifest);
  ArenaPair a;
  write_list(a, static_cast<int>(state.range(0)));
  CopyPlan plan = collect_sub_regions(m, m.resolve_struct("ops_for_gpu"), GuestAddress{E}, a);
  for (auto _ : state) {
    const std::uint64_t mark = a.staging_cursor();
    benchmark::DoNotOptimize(copy_out(plan, a));
    copy_back(plan, a);
    a.release_untrusted(mark);
  }
  state.SetItemsProcessed(state.iterations() * (state.range(0) + 1));
}
BENCHMARK(BM_CopyOutBack)->Arg(1)->Arg(8)->Arg(64);

void BM_WideArray(benchmark::State& state) {
  const auto n = state.range(0);
  Manifest m = parse_manifest("ioctl_structs.s = [{ptr=[{size=16, type=\"inout\"}], size=" + std::to_string(n) +
                              "}]\n");
  ArenaPair a;
  a.write_u64(GuestAddress{E}, E + 0x100);
  const StructDesc& desc = m.resolve_struct("s");
  for (auto _ : state) {
    const std::uint64_t mark = a.staging_cursor();
    CopyPlan plan = collect_sub_regions(m, desc, GuestAddress{E}, a);
    copy_out(plan, a);
    copy_back(plan, a);
    a.release_untrusted(mark);
  }
  state.SetBytesProcessed(state.iterations() * n * 16);
}
BENCHMARK(BM_WideArray)->Arg(16)->Arg(256)->Arg(511);  // 511 + root = default region cap

// Whole ioctl through a session: dispatch, three phases, handler.
void BM_SessionIoctl(benchmark::State& state) {
  Session s(std::make_shared<Manifest>(parse_manifest(kListManifest)));
  s.register_device("/dev/gpu", devices::make_image_ops_device());
  int fd = s.open("/dev/gpu");
  GuestAddress img = s.mmap(GuestAddress{0}, 4096, kProtRead | kProtWrite, kMapShared, fd, 0);
  write_list(s.arenas(), static_cast<int>(state.range(0)));
  s.arenas().write_u64(GuestAddress{E + 8}, img.value);
  for (auto _ : state) benchmark::DoNotOptimize(s.ioctl(fd, devices::kImageOpsRequest, E));
}
BENCHMARK(BM_SessionIoctl)->Arg(2)->Arg(32);

}  // namespace
