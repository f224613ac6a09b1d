#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace eioctl {

using Bytes = std::vector<std::byte>;

// Contiguous lowercase hex, no separators.
std::string to_hex(std::span<const std::byte> bytes);
std::optional<Bytes> from_hex(std::string_view hex);

// "0x1f" style with no padding.
std::string hex_u64(std::uint64_t value);

// Accepts decimal or 0x-prefixed hex; rejects signs, empty input and overflow.
std::optional<std::uint64_t> parse_u64(std::string_view text);

inline Bytes to_bytes(std::string_view text) {
  Bytes out(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) out[i] = static_cast<std::byte>(text[i]);
  return out;
}

}  // namespace eioctl
