#include "discovery.hpp"

#include <algorithm>

#include "crc32.hpp"
#include "error.hpp"

namespace tapolab {

ChecksumSecret ChecksumSecret::from_u32(std::uint32_t v) {
  return ChecksumSecret{{static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
                         static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)}};
}

std::uint32_t ChecksumSecret::as_u32() const {
  return (std::uint32_t{key[0]} << 24) | (std::uint32_t{key[1]} << 16) |
         (std::uint32_t{key[2]} << 8) | std::uint32_t{key[3]};
}

std::string ChecksumSecret::hex() const { return to_hex(key); }

Json DiscoveryResponseBody::to_json() const {
  Json result;
  result["device_id"] = device_id;
  result["owner"] = owner;
  result["device_type"] = device_type;
  result["device_model"] = device_model;
  result["ip"] = ip;
  result["mac"] = mac;
  result["factory_default"] = factory_default;
  result["is_support_iot_cloud"] = is_support_iot_cloud;
  result["mgt_encrypt_schm"] = Json{{"is_support_https", is_support_https},
                                    {"encrypt_type", encrypt_type},
                                    {"http_port", http_port}};
  Json j;
  j["result"] = std::move(result);
  j["error_code"] = error_code;
  return j;
}

DiscoveryResponseBody DiscoveryResponseBody::from_json(const Json& j) {
  try {
    const auto& r = j.at("result");
    const auto& schm = r.at("mgt_encrypt_schm");
    DiscoveryResponseBody b;
    b.device_id = r.at("device_id").get<std::string>();
    b.owner = r.at("owner").get<std::string>();
    b.device_type = r.at("device_type").get<std::string>();
    b.device_model = r.at("device_model").get<std::string>();
    b.ip = r.at("ip").get<std::string>();
    b.mac = r.at("mac").get<std::string>();
    b.factory_default = r.at("factory_default").get<bool>();
    b.is_support_iot_cloud = r.at("is_support_iot_cloud").get<bool>();
    b.is_support_https = schm.at("is_support_https").get<bool>();
    b.encrypt_type = schm.at("encrypt_type").get<std::string>();
    b.http_port = schm.at("http_port").get<std::uint16_t>();
    b.error_code = j.at("error_code").get<int>();
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, std::string("discovery response: ") + e.what());
  }
}

Bytes serialize_discovery_data(const DiscoveryData& data) {
  return std::visit(
      [](const auto& v) -> Bytes {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, EmptyRequest>) {
          return {};
        } else if constexpr (std::is_same_v<T, OwnerScanRequest>) {
          return to_bytes(Json{{"params", {{"owner", v.owner_id}}}}.dump());
        } else {
          return to_bytes(v.to_json().dump());
        }
      },
      data);
}

DiscoveryData parse_discovery_data(ByteView data) {
  if (data.empty()) return EmptyRequest{};
  Json j = Json::parse(data.begin(), data.end(), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::parse, "discovery data is not valid JSON");
  if (!j.is_object()) throw Error(ErrorKind::format, "discovery data is not a JSON object");
  if (j.contains("result")) return DiscoveryResponseBody::from_json(j);
  if (j.contains("params") && j["params"].is_object() && j["params"].contains("owner") &&
      j["params"]["owner"].is_string()) {
    return OwnerScanRequest{j["params"]["owner"].get<std::string>()};
  }
  throw Error(ErrorKind::format, "unrecognised discovery data");
}

std::array<std::uint8_t, 4> keyed_crc32(ByteView payload_with_secret) {
  auto c = ChecksumSecret::from_u32(crc32(payload_with_secret));
  return c.key;
}

Bytes encode_discovery(const DiscoveryData& data, const Nonce& nonce,
                       const ChecksumSecret& secret) {
  Bytes body = serialize_discovery_data(data);
  if (body.size() > 0xFFFF) throw Error(ErrorKind::length_overflow, "discovery data exceeds 65535 bytes");
  Bytes out;
  out.reserve(kDiscoveryHeaderSize + body.size());
  out.insert(out.end(), kHeaderA.begin(), kHeaderA.end());
  out.push_back(static_cast<std::uint8_t>(body.size() >> 8));
  out.push_back(static_cast<std::uint8_t>(body.size() & 0xff));
  out.insert(out.end(), kHeaderB.begin(), kHeaderB.end());
  out.insert(out.end(), nonce.begin(), nonce.end());
  out.insert(out.end(), secret.key.begin(), secret.key.end());
  out.insert(out.end(), body.begin(), body.end());
  auto sum = keyed_crc32(out);
  std::copy(sum.begin(), sum.end(), out.begin() + kChecksumOffset);
  return out;
}

void check_discovery_framing(ByteView raw) {
  if (raw.size() < kDiscoveryHeaderSize) throw Error(ErrorKind::truncated, "discovery payload shorter than 16 bytes");
  if (!std::equal(kHeaderA.begin(), kHeaderA.end(), raw.begin()) ||
      !std::equal(kHeaderB.begin(), kHeaderB.end(), raw.begin() + 6)) {
    throw Error(ErrorKind::format, "discovery payload has wrong fixed header bytes");
  }
  std::size_t declared = (std::size_t{raw[4]} << 8) | raw[5];
  if (declared != raw.size() - kDiscoveryHeaderSize) {
    throw Error(ErrorKind::format, "discovery data_length does not match payload size");
  }
}

bool verify_checksum(ByteView raw, const ChecksumSecret& secret) noexcept {
  if (raw.size() < kDiscoveryHeaderSize) return false;
  Crc32 crc;
  crc.update(raw.first(kChecksumOffset)).update(secret.key).update(raw.subspan(kDiscoveryHeaderSize));
  auto expect = ChecksumSecret::from_u32(crc.value()).key;
  return std::equal(expect.begin(), expect.end(), raw.begin() + kChecksumOffset);
}

Nonce nonce_of(ByteView raw) {
  if (raw.size() < kDiscoveryHeaderSize) throw Error(ErrorKind::truncated, "discovery payload shorter than 16 bytes");
  Nonce n{};
  std::copy_n(raw.begin() + 8, 4, n.begin());
  return n;
}

DecodedDiscovery decode_discovery(ByteView raw, const ChecksumSecret& secret) {
  check_discovery_framing(raw);
  if (!verify_checksum(raw, secret)) throw Error(ErrorKind::authentication, "discovery checksum mismatch");
  DecodedDiscovery d{parse_discovery_data(raw.subspan(kDiscoveryHeaderSize)), nonce_of(raw)};
  if (auto* body = std::get_if<DiscoveryResponseBody>(&d.data)) {
    if (body->factory_default != (body->owner == kUnownedOwner)) {
      throw Error(ErrorKind::format, "factory_default disagrees with owner");
    }
  }
  return d;
}

}  // namespace tapolab
