#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>

#include "eioctl/arena.hpp"
#include "eioctl/handler.hpp"
#include "eioctl/runtime.hpp"

namespace eioctl::devices {

// Request codes used by the shipped fixture manifests.
inline constexpr std::uint32_t kImageOpsRequest = 0xc0007102;
inline constexpr std::uint32_t kDrmVersionRequest = 0xc0406400;  // _IOWR('d', 0x00, 64 bytes)
inline constexpr std::uint32_t kCtxGetParamRequest = 0x10001;
inline constexpr std::uint32_t kCtxSetParamRequest = 0x10002;
inline constexpr std::uint32_t kExecbufferRequest = 0x10003;
inline constexpr std::uint32_t kGetParamRequest = 0x10004;
inline constexpr std::uint32_t kPollRequest = 0x10005;

inline constexpr std::uint32_t kOpFlip = 1;
inline constexpr std::uint32_t kOpInvert = 2;

inline constexpr std::uint64_t kCtxParamBanPeriod = 0x1;
inline constexpr std::uint64_t kCtxParamSseu = 0x7;
inline constexpr std::uint64_t kSseuBlobSize = 32;

inline constexpr std::uint64_t kParamChipsetId = 4;
inline constexpr std::uint64_t kParamHasBsd2 = 31;

inline constexpr std::string_view kDrmName = "i915mock";
inline constexpr std::string_view kDrmDate = "20210101";
inline constexpr std::string_view kDrmDesc = "mockdrm";

/// Walks the op list hanging off an ops_for_gpu request: FLIP reverses the
/// image buffer, INVERT negates every byte, and each node's seconds_spent
/// becomes its 1-based position.
std::int64_t image_ops_handler(GuestAddress root, const UntrustedView& view);

/// Fills a drm_version request: version 1.6.0 and the fixture identity
/// strings, truncated to the caller's buffer lengths. Length fields are
/// overwritten with the real lengths so a zero-length call discovers them.
std::int64_t drm_version_handler(GuestAddress root, const UntrustedView& view);

/// Per-device store behind context GET/SETPARAM.
class CtxParamStore {
 public:
  std::int64_t handle(std::uint32_t request, GuestAddress root, const UntrustedView& view);

 private:
  std::map<std::pair<std::uint32_t, std::uint64_t>, Bytes> values_;
};

std::int64_t getparam_handler(GuestAddress root, const UntrustedView& view);

/// Reports a host fence number in out_fence; the fence hook turns it into an
/// fd of the emulated application.
class ExecbufferQueue {
 public:
  std::int64_t handle(GuestAddress root, const UntrustedView& view);

 private:
  std::uint32_t next_host_fence_ = 100;
};

/// Sets the completion byte of a buf_for_gpu request in the untrusted copy
/// and returns immediately.
std::int64_t poll_handler(GuestAddress root, const UntrustedView& view);

DeviceHandler make_image_ops_device();
/// Mock DRM render node: version, context params, getparam, execbuffer.
DeviceHandler make_drm_device();
DeviceHandler make_poll_device();

/// Mints a fence fd and stores its number in the enclave copy of `field`.
PostHook make_fence_post_hook(std::string field = "out_fence");

/// Forces `value_field` to 0 in the enclave when `param_field` equals
/// `param` (HAS_BSD2 by default).
PostHook make_sanitize_getparam_hook(std::uint64_t param = kParamHasBsd2, std::string param_field = "param",
                                     std::string value_field = "result");

}  // namespace eioctl::devices
