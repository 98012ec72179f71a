#include "hardened.hpp"

#include <algorithm>
#include <cstdlib>

#include "error.hpp"

namespace tapolab {

std::string_view to_string(Profile p) { return p == Profile::vulnerable ? "vulnerable" : "hardened"; }

Profile profile_from_string(std::string_view s) {
  if (s == "vulnerable") return Profile::vulnerable;
  if (s == "hardened") return Profile::hardened;
  throw Error(ErrorKind::argument, "unknown profile '" + std::string(s) + "'");
}

// --- v2 discovery ----------------------------------------------------------------------

int discovery_version(ByteView raw) noexcept {
  if (raw.size() < kDiscoveryHeaderSize) return 0;
  if (!std::equal(kHeaderA.begin(), kHeaderA.end(), raw.begin()) || raw[6] != 0x11) return 0;
  if (raw[7] == 0x00) return 1;
  if (raw[7] == kDiscoveryVersion2) return 2;
  return 0;
}

DiscoveryTag discovery_mac_v2(ByteView payload, const DiscoveryKey& key) {
  Bytes buf(key.begin(), key.end());
  buf.insert(buf.end(), payload.begin(), payload.end());
  if (payload.size() >= kDiscoveryHeaderSizeV2) {
    std::fill_n(buf.begin() + kDiscoveryKeySize + 12, kTagSizeV2, std::uint8_t{0});
  }
  Bytes digest = sha224(buf);
  DiscoveryTag tag{};
  std::copy(digest.begin(), digest.end(), tag.begin());
  return tag;
}

Bytes encode_discovery_v2(const DiscoveryData& data, const Nonce& nonce, const DiscoveryKey& key) {
  Bytes body = serialize_discovery_data(data);
  if (body.size() > 0xFFFF) throw Error(ErrorKind::length_overflow, "discovery data exceeds 65535 bytes");
  Bytes out;
  out.reserve(kDiscoveryHeaderSizeV2 + body.size());
  out.insert(out.end(), kHeaderA.begin(), kHeaderA.end());
  out.push_back(static_cast<std::uint8_t>(body.size() >> 8));
  out.push_back(static_cast<std::uint8_t>(body.size() & 0xff));
  out.push_back(0x11);
  out.push_back(kDiscoveryVersion2);
  out.insert(out.end(), nonce.begin(), nonce.end());
  out.insert(out.end(), kTagSizeV2, std::uint8_t{0});
  out.insert(out.end(), body.begin(), body.end());
  auto tag = discovery_mac_v2(out, key);
  std::copy(tag.begin(), tag.end(), out.begin() + 12);
  return out;
}

namespace {

void check_v2_framing(ByteView raw) {
  if (raw.size() < kDiscoveryHeaderSizeV2) throw Error(ErrorKind::truncated, "v2 discovery payload too short");
  if (discovery_version(raw) != 2) throw Error(ErrorKind::format, "not a v2 discovery payload");
  std::size_t declared = (std::size_t{raw[4]} << 8) | raw[5];
  if (declared != raw.size() - kDiscoveryHeaderSizeV2) {
    throw Error(ErrorKind::format, "discovery data_length does not match payload size");
  }
}

}  // namespace

bool verify_discovery_v2(ByteView raw, const DiscoveryKey& key) noexcept {
  if (raw.size() < kDiscoveryHeaderSizeV2 || discovery_version(raw) != 2) return false;
  auto tag = discovery_mac_v2(raw, key);
  // Constant-time compare is a non-goal here.
  return std::equal(tag.begin(), tag.end(), raw.begin() + 12);
}

DecodedDiscovery decode_discovery_v2(ByteView raw, std::span<const DiscoveryKey> keys) {
  check_v2_framing(raw);
  bool ok = std::any_of(keys.begin(), keys.end(), [&](const DiscoveryKey& k) { return verify_discovery_v2(raw, k); });
  if (!ok) throw Error(ErrorKind::authentication, "discovery tag mismatch");
  DecodedDiscovery d{parse_discovery_data(raw.subspan(kDiscoveryHeaderSizeV2)), nonce_of(raw)};
  if (auto* body = std::get_if<DiscoveryResponseBody>(&d.data)) {
    if (body->factory_default != (body->owner == kUnownedOwner)) {
      throw Error(ErrorKind::format, "factory_default disagrees with owner");
    }
  }
  return d;
}

// --- certificates ----------------------------------------------------------------------------

Bytes DeviceCertificate::signed_bytes() const {
  return to_bytes(device_id + "\n" + device_public_key_pem + "\n" + std::to_string(not_after));
}

Json DeviceCertificate::to_json() const {
  return Json{{"device_id", device_id},
              {"device_public_key", device_public_key_pem},
              {"not_after", not_after},
              {"issuer_signature", issuer_signature_b64}};
}

DeviceCertificate DeviceCertificate::from_json(const Json& j) {
  try {
    return DeviceCertificate{j.at("device_id").get<std::string>(), j.at("device_public_key").get<std::string>(),
                             j.at("not_after").get<std::int64_t>(), j.at("issuer_signature").get<std::string>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, std::string("certificate: ") + e.what());
  }
}

bool verify_certificate(const DeviceCertificate& cert, const RsaPublicKey& root, std::int64_t now_s) {
  if (now_s > cert.not_after) return false;
  try {
    return rsa_verify_sha256(root, cert.signed_bytes(), base64_decode(cert.issuer_signature_b64));
  } catch (const Error&) {
    return false;
  }
}

Bytes sign_key_transmission(std::string_view wrapped_key_blob, const RsaKeyPair& device_key) {
  return device_key.sign_sha256(view(wrapped_key_blob));
}

bool verify_key_transmission(std::string_view wrapped_key_blob, ByteView signature,
                             const DeviceCertificate& cert, const RsaPublicKey& root,
                             std::int64_t now_s) {
  if (!verify_certificate(cert, root, now_s)) return false;
  try {
    auto device_key = RsaPublicKey::from_pem(cert.device_public_key_pem);
    return rsa_verify_sha256(device_key, view(wrapped_key_blob), signature);
  } catch (const Error&) {
    return false;
  }
}

// --- freshness --------------------------------------------------------------------------------

std::string_view to_string(FreshnessVerdict v) {
  switch (v) {
    case FreshnessVerdict::accept: return "accept";
    case FreshnessVerdict::stale: return "stale";
    case FreshnessVerdict::duplicate: return "duplicate";
  }
  return "accept";
}

FreshnessVerdict check_freshness(std::int64_t request_time_ms, std::int64_t seq, FreshnessState& state,
                                 std::int64_t now_ms) {
  if (std::llabs(now_ms - request_time_ms) > state.window_ms) return FreshnessVerdict::stale;
  if (state.last_seq && seq <= *state.last_seq) return FreshnessVerdict::duplicate;
  state.last_seq = seq;
  return FreshnessVerdict::accept;
}

// --- cloud stub -------------------------------------------------------------------------------

namespace {

RsaKeyPair make_root(const Rng& rng, int bits) {
  Rng r = rng.fork("cloud-root");
  return RsaKeyPair::generate(r, bits);
}

}  // namespace

CloudStub::CloudStub(Rng rng, std::shared_ptr<const Clock> clock, int rsa_bits, std::int64_t epoch_seconds)
    : rng_(std::move(rng)),
      clock_(std::move(clock)),
      rsa_bits_(rsa_bits),
      epoch_seconds_(epoch_seconds),
      root_(make_root(rng_, rsa_bits)),
      root_public_(root_.public_key()) {
  if (!clock_) throw Error(ErrorKind::argument, "cloud stub needs a clock");
}

DeviceIdentity CloudStub::register_device(const std::string& device_id) {
  std::lock_guard lock(mu_);
  if (auto it = devices_.find(device_id); it != devices_.end()) return it->second;
  Rng r = rng_.fork("device/" + device_id);
  RsaKeyPair key = RsaKeyPair::generate(r, rsa_bits_);
  DeviceCertificate cert{device_id, key.public_key().pem(), clock_->now_s() + kCertificateValiditySeconds, {}};
  cert.issuer_signature_b64 = base64_encode(root_.sign_sha256(cert.signed_bytes()));
  DeviceIdentity id{std::move(key), std::move(cert)};
  devices_.emplace(device_id, id);
  return id;
}

std::optional<DeviceCertificate> CloudStub::certificate_for(const std::string& device_id) const {
  std::lock_guard lock(mu_);
  auto it = devices_.find(device_id);
  if (it == devices_.end()) return std::nullopt;
  return it->second.certificate;
}

RotatingDiscoveryKey CloudStub::make_key(const std::string& account_id, std::int64_t epoch,
                                         std::int64_t now_s) const {
  Rng r = rng_.fork("discovery-key/" + account_id + "/" + std::to_string(epoch));
  RotatingDiscoveryKey k;
  k.account_id = account_id;
  k.key = r.array<kDiscoveryKeySize>();
  k.epoch = epoch;
  k.expires_at = now_s + 2 * epoch_seconds_;
  return k;
}

void CloudStub::register_account(const std::string& account_id) {
  std::lock_guard lock(mu_);
  if (accounts_.contains(account_id)) return;
  auto now = clock_->now_s();
  Account acct;
  acct.keys.push_back(make_key(account_id, 1, now));
  acct.rotated_at = now;
  accounts_.emplace(account_id, std::move(acct));
}

bool CloudStub::has_account(const std::string& account_id) const {
  std::lock_guard lock(mu_);
  return accounts_.contains(account_id);
}

void CloudStub::associate(const std::string& device_id, const std::string& account_id) {
  if (!certificate_for(device_id)) throw Error(ErrorKind::precondition, "device " + device_id + " is not registered");
  register_account(account_id);
  std::lock_guard lock(mu_);
  device_accounts_[device_id] = account_id;
}

std::optional<std::string> CloudStub::account_of(const std::string& device_id) const {
  std::lock_guard lock(mu_);
  auto it = device_accounts_.find(device_id);
  if (it == device_accounts_.end()) return std::nullopt;
  return it->second;
}

void CloudStub::rotate_locked(const std::string& account_id, Account& acct, std::int64_t now_s) {
  auto next = acct.keys.back().epoch + 1;
  acct.keys.push_back(make_key(account_id, next, now_s));
  if (acct.keys.size() > 2) acct.keys.erase(acct.keys.begin());
  acct.rotated_at = now_s;
}

void CloudStub::refresh_locked(const std::string& account_id, Account& acct, std::int64_t now_s) {
  std::int64_t due = (now_s - acct.rotated_at) / epoch_seconds_;
  if (due <= 0) return;
  auto epoch = acct.keys.back().epoch + due;
  std::int64_t at = acct.rotated_at + due * epoch_seconds_;
  acct.keys.clear();
  acct.keys.push_back(make_key(account_id, epoch - 1, at - epoch_seconds_));
  acct.keys.push_back(make_key(account_id, epoch, at));
  acct.rotated_at = at;
}

RotatingDiscoveryKey CloudStub::rotate_discovery_key(const std::string& account_id) {
  std::lock_guard lock(mu_);
  auto it = accounts_.find(account_id);
  if (it == accounts_.end()) throw Error(ErrorKind::argument, "unknown account " + account_id);
  refresh_locked(account_id, it->second, clock_->now_s());
  rotate_locked(account_id, it->second, clock_->now_s());
  return it->second.keys.back();
}

RotatingDiscoveryKey CloudStub::current_key(const std::string& account_id) {
  std::lock_guard lock(mu_);
  auto it = accounts_.find(account_id);
  if (it == accounts_.end()) throw Error(ErrorKind::argument, "unknown account " + account_id);
  refresh_locked(account_id, it->second, clock_->now_s());
  return it->second.keys.back();
}

std::vector<DiscoveryKey> CloudStub::valid_locked(const std::string& account_id) {
  auto it = accounts_.find(account_id);
  if (it == accounts_.end()) return {};
  auto now = clock_->now_s();
  refresh_locked(account_id, it->second, now);
  const auto current = it->second.keys.back().epoch;
  std::vector<DiscoveryKey> out;
  for (auto k = it->second.keys.rbegin(); k != it->second.keys.rend(); ++k) {
    if (k->epoch >= current - 1 && now <= k->expires_at) out.push_back(k->key);
  }
  return out;
}

std::vector<DiscoveryKey> CloudStub::valid_keys_for_account(const std::string& account_id) {
  std::lock_guard lock(mu_);
  return valid_locked(account_id);
}

std::vector<DiscoveryKey> CloudStub::valid_keys_for_device(const std::string& device_id) {
  std::lock_guard lock(mu_);
  auto it = device_accounts_.find(device_id);
  if (it == device_accounts_.end()) return {};
  return valid_locked(it->second);
}

}  // namespace tapolab
