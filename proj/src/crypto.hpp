#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_set>

#include "bytes.hpp"

typedef struct evp_pkey_st EVP_PKEY;

namespace tapolab {

/// Randomness source for every actor. Seeded instances are reproducible
/// (mt19937_64); unseeded ones draw from the OpenSSL DRBG.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  static Rng system();

  /// Independent child stream, deterministic in (parent seed, label).
  Rng fork(std::string_view label) const;

  Bytes bytes(std::size_t n);
  template <std::size_t N>
  std::array<std::uint8_t, N> array() {
    std::array<std::uint8_t, N> a{};
    fill(a.data(), N);
    return a;
  }
  std::uint64_t next_u64();
  bool seeded() const { return engine_.has_value(); }

 private:
  Rng() = default;
  void fill(std::uint8_t* out, std::size_t n);

  std::uint64_t seed_ = 0;
  std::optional<std::mt19937_64> engine_;
};

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

// --- encodings & digests ---------------------------------------------------

/// Standard alphabet, padded, no line breaks.
std::string base64_encode(ByteView data);
inline std::string base64_encode(std::string_view s) { return base64_encode(view(s)); }
/// Strips ASCII whitespace first; throws Error{format} on anything invalid.
Bytes base64_decode(std::string_view text);

Bytes sha1(ByteView data);
Bytes sha224(ByteView data);
Bytes sha256(ByteView data);
std::string sha1_hex(std::string_view text);

// --- AES-128-CBC with PKCS#7 ------------------------------------------------

using AesKey = std::array<std::uint8_t, 16>;
using AesIv = std::array<std::uint8_t, 16>;

Bytes aes128_cbc_encrypt(const AesKey& key, const AesIv& iv, ByteView plaintext);
/// Throws Error{decrypt} on bad length or bad padding.
Bytes aes128_cbc_decrypt(const AesKey& key, const AesIv& iv, ByteView ciphertext);

// --- session key material ---------------------------------------------------

inline constexpr std::int64_t kSessionTtlSeconds = 86400;

struct SessionKeyMaterial {
  AesKey aes_key{};
  AesIv iv{};
  std::int64_t created_at = 0;  // seconds
  std::int64_t ttl = kSessionTtlSeconds;

  bool is_expired(std::int64_t now_s) const { return now_s - created_at > ttl; }
  bool operator==(const SessionKeyMaterial&) const = default;
};

SessionKeyMaterial generate_session_material(Rng& rng, std::int64_t now_s);

enum class IvMode { static_iv, dynamic_iv };

struct EncryptedPayload {
  std::string ciphertext_b64;
  AesIv iv_used{};
};

/// static_iv reuses material.iv on every call; dynamic_iv draws a fresh IV.
EncryptedPayload encrypt_payload(ByteView plaintext, const SessionKeyMaterial& material, IvMode mode,
                                 Rng& rng, std::int64_t now_s);
Bytes decrypt_payload(std::string_view ciphertext_b64, const SessionKeyMaterial& material,
                      std::int64_t now_s, const std::optional<AesIv>& iv_override = std::nullopt);

// --- RSA ----------------------------------------------------------------------

struct PkeyDeleter {
  void operator()(EVP_PKEY* p) const noexcept;
};
using PkeyPtr = std::unique_ptr<EVP_PKEY, PkeyDeleter>;

class RsaPublicKey {
 public:
  /// Throws Error{format} when the text is not an RSA SubjectPublicKeyInfo PEM.
  static RsaPublicKey from_pem(std::string_view pem);

  std::string pem() const;
  int modulus_bits() const;
  EVP_PKEY* get() const { return key_.get(); }
  bool operator==(const RsaPublicKey& other) const;

 private:
  explicit RsaPublicKey(std::shared_ptr<EVP_PKEY> key) : key_(std::move(key)) {}
  friend class RsaKeyPair;
  std::shared_ptr<EVP_PKEY> key_;
};

class RsaKeyPair {
 public:
  /// Key generation driven by rng (reproducible when rng is seeded).
  static RsaKeyPair generate(Rng& rng, int modulus_bits = 1024);

  RsaPublicKey public_key() const;
  int modulus_bits() const;

  /// PKCS#1 v1.5 type-2 decoding of a raw RSA decryption; throws Error{wrap}.
  Bytes decrypt_pkcs1(ByteView ciphertext) const;
  /// RSASSA-PKCS1-v1_5 with SHA-256.
  Bytes sign_sha256(ByteView message) const;
  EVP_PKEY* get() const { return key_.get(); }

 private:
  explicit RsaKeyPair(std::shared_ptr<EVP_PKEY> key) : key_(std::move(key)) {}
  std::shared_ptr<EVP_PKEY> key_;
};

Bytes rsa_encrypt_pkcs1(const RsaPublicKey& key, ByteView plaintext, Rng& rng);
bool rsa_verify_sha256(const RsaPublicKey& key, ByteView message, ByteView signature);

/// base64(RSA(aes_key || iv)) under the peer's public key.
std::string wrap_key(const SessionKeyMaterial& material, const RsaPublicKey& peer, Rng& rng);
/// Inverse of wrap_key; created_at is set to now_s.
SessionKeyMaterial unwrap_key(std::string_view blob_b64, const RsaKeyPair& own, std::int64_t now_s);

// --- cookies and tokens --------------------------------------------------------

inline constexpr int kCookieTimeoutMinutes = 1440;

struct SessionCookie {
  std::string value;  // 32 uppercase hex chars
  int timeout_minutes = kCookieTimeoutMinutes;

  /// "TP_SESSIONID=<value>;TIMEOUT=1440"
  std::string set_cookie_header() const;
  /// "TP_SESSIONID=<value>"
  std::string cookie_header() const;
  bool operator==(const SessionCookie&) const = default;
};

struct AuthToken {
  std::string token;  // 32 lowercase hex chars
  bool operator==(const AuthToken&) const = default;
};

/// Hands out process-unique cookies and tokens; safe to share between threads.
class CredentialIssuer {
 public:
  explicit CredentialIssuer(Rng rng) : rng_(std::move(rng)) {}

  SessionCookie issue_cookie();
  AuthToken issue_token();

 private:
  std::string fresh(bool upper);

  std::mutex mu_;
  Rng rng_;
  std::unordered_set<std::string> issued_;
};

}  // namespace tapolab
