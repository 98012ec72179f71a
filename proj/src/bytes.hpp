#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tapolab {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

Bytes to_bytes(std::string_view s);
std::string to_string(ByteView b);

/// Lowercase hex, two characters per byte.
std::string to_hex(ByteView b);
std::string to_upper_hex(ByteView b);
/// Throws Error{format} on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);

inline ByteView view(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

}  // namespace tapolab
