#pragma once

// UDP discovery payload codec.
//
//   offset  0..3   header_a     02 00 00 01
//           4..5   data_length  big-endian, zero when data is empty
//           6..7   header_b     11 00
//           8..11  nonce
//          12..15  checksum     CRC-32 of the whole payload with the shared
//                               secret written into this field
//          16..    data         UTF-8 JSON (may be empty)

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include "bytes.hpp"
#include "json_value.hpp"

namespace tapolab {

inline constexpr std::array<std::uint8_t, 4> kHeaderA{0x02, 0x00, 0x00, 0x01};
inline constexpr std::array<std::uint8_t, 2> kHeaderB{0x11, 0x00};
inline constexpr std::size_t kDiscoveryHeaderSize = 16;
inline constexpr std::size_t kChecksumOffset = 12;
inline constexpr std::uint16_t kDiscoveryPort = 20002;
inline constexpr std::uint16_t kHttpPort = 80;

using Nonce = std::array<std::uint8_t, 4>;

struct ChecksumSecret {
  std::array<std::uint8_t, 4> key{};

  static ChecksumSecret from_u32(std::uint32_t v);
  std::uint32_t as_u32() const;
  std::string hex() const;
  bool operator==(const ChecksumSecret&) const = default;
};

/// Stand-in for the hard-coded secret shipped in app and firmware.
inline constexpr ChecksumSecret kDefaultChecksumSecret{{0x5A, 0x6B, 0x7C, 0x8D}};

/// Owner value reported by a device that is not bound to any account.
inline const std::string kUnownedOwner(32, '0');

struct DiscoveryResponseBody {
  std::string device_id;
  std::string owner = kUnownedOwner;
  std::string device_type = "SMART.TAPOBULB";
  std::string device_model = "L530E Series";
  std::string ip;
  std::string mac;
  bool factory_default = true;
  bool is_support_iot_cloud = true;
  std::string encrypt_type = "AES";
  bool is_support_https = false;
  std::uint16_t http_port = kHttpPort;
  int error_code = 0;

  Json to_json() const;
  static DiscoveryResponseBody from_json(const Json& j);
  bool operator==(const DiscoveryResponseBody&) const = default;
};

struct EmptyRequest {
  bool operator==(const EmptyRequest&) const = default;
};

struct OwnerScanRequest {
  std::string owner_id;
  bool operator==(const OwnerScanRequest&) const = default;
};

using DiscoveryData = std::variant<EmptyRequest, OwnerScanRequest, DiscoveryResponseBody>;

struct DecodedDiscovery {
  DiscoveryData data;
  Nonce nonce{};
};

Bytes serialize_discovery_data(const DiscoveryData& data);
/// Empty input is an EmptyRequest. Throws parse on malformed JSON and format
/// on JSON that matches no known variant.
DiscoveryData parse_discovery_data(ByteView data);

/// CRC-32 of a payload whose checksum field already holds the secret,
/// returned in field (big-endian) order.
std::array<std::uint8_t, 4> keyed_crc32(ByteView payload_with_secret);

Bytes encode_discovery(const DiscoveryData& data, const Nonce& nonce,
                       const ChecksumSecret& secret);
DecodedDiscovery decode_discovery(ByteView raw, const ChecksumSecret& secret);

/// Structural check plus checksum; never throws.
bool verify_checksum(ByteView raw, const ChecksumSecret& secret) noexcept;

/// Throws truncated/format when the fixed framing is broken.
void check_discovery_framing(ByteView raw);

Nonce nonce_of(ByteView raw);

}  // namespace tapolab
