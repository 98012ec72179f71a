#include "crc32.hpp"

#include <array>

namespace tapolab {
namespace {

constexpr std::array<std::uint32_t, 256> make_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    table[i] = c;
  }
  return table;
}

constexpr auto kTable = make_table();

}  // namespace

Crc32& Crc32::update(std::uint8_t byte) noexcept {
  state_ = kTable[(state_ ^ byte) & 0xffu] ^ (state_ >> 8);
  return *this;
}

Crc32& Crc32::update(ByteView data) noexcept {
  std::uint32_t c = state_;
  for (auto b : data) c = kTable[(c ^ b) & 0xffu] ^ (c >> 8);
  state_ = c;
  return *this;
}

std::uint32_t crc32(ByteView data) noexcept { return Crc32{}.update(data).value(); }

}  // namespace tapolab
