#include "eioctl/devices.hpp"

#include <algorithm>
#include <memory>

#include "eioctl/error.hpp"
#include "eioctl/hex.hpp"

namespace eioctl::devices {

namespace {

// Guest layouts exactly as the fixture manifests describe them.
namespace image_ops {
constexpr std::uint64_t kBufSize = 0;
constexpr std::uint64_t kBuf = 8;
constexpr std::uint64_t kHead = 16;
constexpr std::uint64_t kOperation = 0;
constexpr std::uint64_t kSeconds = 4;
constexpr std::uint64_t kNext = 12;
constexpr std::uint64_t kMaxOps = 1u << 16;
}  // namespace image_ops

namespace ctx_param {
constexpr std::uint64_t kCtxId = 0;
constexpr std::uint64_t kParam = 8;
constexpr std::uint64_t kValue = 16;
}  // namespace ctx_param

}  // namespace

std::int64_t image_ops_handler(GuestAddress root, const UntrustedView& view) {
  using namespace image_ops;
  const std::uint64_t size = view.read_u64(root + kBufSize);
  const GuestAddress buf{view.read_u64(root + kBuf)};
  GuestAddress node{view.read_u64(root + kHead)};
  std::uint64_t position = 0;
  while (!node.is_null()) {
    if (++position > kMaxOps) raise(Errc::LimitExceeded, "op list does not terminate");
    auto op = static_cast<std::uint32_t>(view.read_uint(node + kOperation, 4));
    if (op != kOpFlip && op != kOpInvert) raise(Errc::UnknownOp, "unknown image op " + std::to_string(op));
    Bytes pixels = view.read_bytes(buf, size);
    if (op == kOpFlip)
      std::reverse(pixels.begin(), pixels.end());
    else
      for (auto& b : pixels) b = ~b;
    view.write_bytes(buf, pixels);
    view.write_u64(node + kSeconds, position);
    node = GuestAddress{view.read_u64(node + kNext)};
  }
  return 0;
}

std::int64_t drm_version_handler(GuestAddress root, const UntrustedView& view) {
  view.write_uint(root + 0, 1, 4);
  view.write_uint(root + 4, 6, 4);
  view.write_uint(root + 8, 0, 4);
  const std::string_view strings[] = {kDrmName, kDrmDate, kDrmDesc};
  for (std::uint64_t i = 0; i < 3; ++i) {
    GuestAddress len_at = root + 16 + 16 * i;
    GuestAddress ptr_at = len_at + 8;
    std::uint64_t provided = view.read_u64(len_at);
    GuestAddress buf{view.read_u64(ptr_at)};
    std::string_view actual = strings[i];
    if (!buf.is_null()) {
      // The copied buffer holds provided + 1 bytes (room for the NUL).
      std::uint64_t n = std::min<std::uint64_t>(provided, actual.size());
      Bytes out = to_bytes(actual.substr(0, n));
      out.push_back(std::byte{0});
      view.write_bytes(buf, out);
    }
    view.write_u64(len_at, actual.size());
  }
  return 0;
}

std::int64_t CtxParamStore::handle(std::uint32_t request, GuestAddress root, const UntrustedView& view) {
  using namespace ctx_param;
  auto ctx = static_cast<std::uint32_t>(view.read_uint(root + kCtxId, 4));
  std::uint64_t param = view.read_u64(root + kParam);
  std::uint64_t width = 0;
  if (param == kCtxParamBanPeriod)
    width = 8;
  else if (param == kCtxParamSseu)
    width = kSseuBlobSize;
  else
    raise(Errc::UnknownParam, "context param " + hex_u64(param) + " is not supported");

  // BAN_PERIOD lives inline; SSEU is reached through the value pointer.
  GuestAddress where = root + kValue;
  if (param == kCtxParamSseu) where = GuestAddress{view.read_u64(root + kValue)};
  auto key = std::make_pair(ctx, param);
  if (request == kCtxSetParamRequest) {
    values_[key] = view.read_bytes(where, width);
  } else if (request == kCtxGetParamRequest) {
    auto it = values_.find(key);
    Bytes value = it == values_.end() ? Bytes(width) : it->second;
    view.write_bytes(where, value);
  } else {
    raise(Errc::UnknownRequest, "request " + hex_u64(request) + " is not a context param request");
  }
  return 0;
}

std::int64_t getparam_handler(GuestAddress root, const UntrustedView& view) {
  auto param = view.read_uint(root, 4);
  std::uint32_t value = 0;
  if (param == kParamHasBsd2)
    value = 1;
  else if (param == kParamChipsetId)
    value = 0x9a49;
  else
    raise(Errc::UnknownParam, "getparam " + std::to_string(param) + " is not supported");
  GuestAddress out{view.read_u64(root + 8)};
  view.write_uint(out, value, 4);
  return 0;
}

std::int64_t ExecbufferQueue::handle(GuestAddress root, const UntrustedView& view) {
  view.write_uint(root + 12, next_host_fence_++, 4);
  return 0;
}

std::int64_t poll_handler(GuestAddress root, const UntrustedView& view) {
  view.write_uint(root + 8, 1, 1);
  return 0;
}

DeviceHandler make_image_ops_device() {
  return [](const DeviceCall& call, const UntrustedView& view) -> std::int64_t {
    if (call.request != kImageOpsRequest)
      raise(Errc::UnknownRequest, "image-ops device does not handle " + hex_u64(call.request));
    return image_ops_handler(GuestAddress{call.arg}, view);
  };
}

DeviceHandler make_drm_device() {
  struct State {
    CtxParamStore ctx;
    ExecbufferQueue exec;
  };
  auto state = std::make_shared<State>();
  return [state](const DeviceCall& call, const UntrustedView& view) -> std::int64_t {
    GuestAddress root{call.arg};
    switch (call.request) {
      case kDrmVersionRequest: return drm_version_handler(root, view);
      case kCtxGetParamRequest:
      case kCtxSetParamRequest: return state->ctx.handle(call.request, root, view);
      case kGetParamRequest: return getparam_handler(root, view);
      case kExecbufferRequest: return state->exec.handle(root, view);
      default: raise(Errc::UnknownRequest, "drm mock does not handle " + hex_u64(call.request));
    }
  };
}

DeviceHandler make_poll_device() {
  return [](const DeviceCall& call, const UntrustedView& view) -> std::int64_t {
    if (call.request != kPollRequest) raise(Errc::UnknownRequest, "poll device does not handle " + hex_u64(call.request));
    return poll_handler(GuestAddress{call.arg}, view);
  };
}

PostHook make_fence_post_hook(std::string field) {
  return [field = std::move(field)](Session& session, const IoctlRule& rule, const IoctlCall& call) {
    if (!call.plan) return;
    const ResolvedSubRegion* slot = call.plan->find_by_name(field);
    if (!slot || slot->size == 0 || slot->size > 8) return;
    int fd = session.create_fence_fd("fence:" + rule.id);
    session.arenas().write_uint(slot->addr, static_cast<std::uint64_t>(fd), slot->size);
  };
}

PostHook make_sanitize_getparam_hook(std::uint64_t param, std::string param_field, std::string value_field) {
  return [=](Session& session, const IoctlRule&, const IoctlCall& call) {
    if (!call.plan) return;
    const ResolvedSubRegion* p = call.plan->find_by_name(param_field);
    const ResolvedSubRegion* v = call.plan->find_by_name(value_field);
    if (!p || !v || p->size > 8) return;
    if (session.arenas().read_uint(p->addr, p->size) != param) return;
    session.arenas().fill_zero(v->addr, v->size);
  };
}

}  // namespace eioctl::devices
