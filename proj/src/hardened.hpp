#pragma once

// Protocol extensions of the hardened profile: signed key transmission backed
// by device certificates, per-account rotating discovery keys with a SHA-224
// tag, and timestamp + sequence freshness checks.

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clock.hpp"
#include "crypto.hpp"
#include "discovery.hpp"

namespace tapolab {

enum class Profile { vulnerable, hardened };
std::string_view to_string(Profile p);
Profile profile_from_string(std::string_view s);

// --- v2 discovery payload -------------------------------------------------------
//
//   0..3 02 00 00 01 | 4..5 data_length | 6..7 11 02 | 8..11 nonce |
//   12..39 SHA-224(key || payload with this field zeroed) | 40.. data

inline constexpr std::uint8_t kDiscoveryVersion2 = 0x02;
inline constexpr std::size_t kDiscoveryKeySize = 32;
inline constexpr std::size_t kTagSizeV2 = 28;
inline constexpr std::size_t kDiscoveryHeaderSizeV2 = 12 + kTagSizeV2;

using DiscoveryKey = std::array<std::uint8_t, kDiscoveryKeySize>;
using DiscoveryTag = std::array<std::uint8_t, kTagSizeV2>;

/// 1 for the legacy layout, 2 for the tagged layout, 0 for neither.
int discovery_version(ByteView raw) noexcept;

/// Tag over the payload with its tag field treated as zero.
DiscoveryTag discovery_mac_v2(ByteView payload, const DiscoveryKey& key);
Bytes encode_discovery_v2(const DiscoveryData& data, const Nonce& nonce, const DiscoveryKey& key);
bool verify_discovery_v2(ByteView raw, const DiscoveryKey& key) noexcept;
/// Accepts if any of keys verifies. Errors mirror decode_discovery.
DecodedDiscovery decode_discovery_v2(ByteView raw, std::span<const DiscoveryKey> keys);

// --- device certificates and signed key transmission -------------------------------

struct DeviceCertificate {
  std::string device_id;
  std::string device_public_key_pem;
  std::int64_t not_after = 0;  // seconds
  std::string issuer_signature_b64;

  /// Bytes covered by the issuer signature.
  Bytes signed_bytes() const;
  Json to_json() const;
  static DeviceCertificate from_json(const Json& j);
};

bool verify_certificate(const DeviceCertificate& cert, const RsaPublicKey& root, std::int64_t now_s);

/// Signature over the exact bytes of the base64 key field.
Bytes sign_key_transmission(std::string_view wrapped_key_blob, const RsaKeyPair& device_key);
bool verify_key_transmission(std::string_view wrapped_key_blob, ByteView signature,
                             const DeviceCertificate& cert, const RsaPublicKey& root,
                             std::int64_t now_s);

// --- freshness ------------------------------------------------------------------------

inline constexpr std::int64_t kFreshnessWindowMs = 30'000;

struct FreshnessState {
  std::int64_t window_ms = kFreshnessWindowMs;
  std::optional<std::int64_t> last_seq;
};

enum class FreshnessVerdict { accept, stale, duplicate };
std::string_view to_string(FreshnessVerdict v);

/// Accepts iff |now - request_time| <= window and seq > last_seq; on accept
/// last_seq becomes seq.
FreshnessVerdict check_freshness(std::int64_t request_time_ms, std::int64_t seq, FreshnessState& state,
                                 std::int64_t now_ms);

// --- cloud stub ---------------------------------------------------------------------

struct RotatingDiscoveryKey {
  std::string account_id;
  DiscoveryKey key{};
  std::int64_t epoch = 0;
  std::int64_t expires_at = 0;  // seconds
};

struct DeviceIdentity {
  RsaKeyPair key;
  DeviceCertificate certificate;
};

/// In-process stand-in for the vendor cloud: certificate authority for
/// devices and distributor of per-account discovery keys. Everything it
/// hands out is a pure function of its seed, so two processes built from the
/// same seed agree. Devices are trusted by pre-registered id.
class CloudStub {
 public:
  static constexpr std::int64_t kDefaultEpochSeconds = 3600;
  static constexpr std::int64_t kCertificateValiditySeconds = 10LL * 365 * 86400;

  CloudStub(Rng rng, std::shared_ptr<const Clock> clock, int rsa_bits = 1024,
            std::int64_t epoch_seconds = kDefaultEpochSeconds);

  const RsaPublicKey& root() const { return root_public_; }

  DeviceIdentity register_device(const std::string& device_id);
  std::optional<DeviceCertificate> certificate_for(const std::string& device_id) const;

  void register_account(const std::string& account_id);
  bool has_account(const std::string& account_id) const;
  /// Throws precondition for unregistered devices.
  void associate(const std::string& device_id, const std::string& account_id);
  std::optional<std::string> account_of(const std::string& device_id) const;

  /// New key with epoch+1; the previous key stays valid for one more epoch.
  /// Throws argument for unknown accounts.
  RotatingDiscoveryKey rotate_discovery_key(const std::string& account_id);
  RotatingDiscoveryKey current_key(const std::string& account_id);
  std::vector<DiscoveryKey> valid_keys_for_account(const std::string& account_id);
  std::vector<DiscoveryKey> valid_keys_for_device(const std::string& device_id);

 private:
  struct Account {
    std::vector<RotatingDiscoveryKey> keys;  // ascending epoch
    std::int64_t rotated_at = 0;
  };
  RotatingDiscoveryKey make_key(const std::string& account_id, std::int64_t epoch, std::int64_t now_s) const;
  void rotate_locked(const std::string& account_id, Account& acct, std::int64_t now_s);
  void refresh_locked(const std::string& account_id, Account& acct, std::int64_t now_s);
  std::vector<DiscoveryKey> valid_locked(const std::string& account_id);

  mutable std::mutex mu_;
  Rng rng_;
  std::shared_ptr<const Clock> clock_;
  int rsa_bits_;
  std::int64_t epoch_seconds_;
  RsaKeyPair root_;
  RsaPublicKey root_public_;
  std::map<std::string, DeviceIdentity> devices_;
  std::map<std::string, std::string> device_accounts_;
  std::map<std::string, Account> accounts_;
};

}  // namespace tapolab
