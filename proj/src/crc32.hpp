#pragma once

#include <cstdint>

#include "bytes.hpp"

namespace tapolab {

// CRC-32/IEEE 802.3: reflected polynomial 0xEDB88320, init and final XOR
// 0xFFFFFFFF.
class Crc32 {
 public:
  Crc32& update(ByteView data) noexcept;
  Crc32& update(std::uint8_t byte) noexcept;
  std::uint32_t value() const noexcept { return state_ ^ 0xFFFFFFFFu; }

 private:
  std::uint32_t state_ = 0xFFFFFFFFu;
};

std::uint32_t crc32(ByteView data) noexcept;

}  // namespace tapolab
