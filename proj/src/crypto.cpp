#include "crypto.hpp"

#include <openssl/bio.h>
#include <openssl/bn.h>
#include <openssl/core_names.h>
#include <openssl/err.h>
#include <openssl/evp.h>
#include <openssl/param_build.h>
#include <openssl/pem.h>
#include <openssl/rand.h>
#include <openssl/rsa.h>

#include <algorithm>
#include <cctype>
#include <cstring>

#include "error.hpp"

namespace tapolab {
namespace {

std::string openssl_error(std::string_view what) {
  std::string msg(what);
  if (unsigned long code = ERR_get_error(); code != 0) {
    char buf[256];
    ERR_error_string_n(code, buf, sizeof buf);
    msg += ": ";
    msg += buf;
  }
  ERR_clear_error();
  return msg;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

struct BnDeleter {
  void operator()(BIGNUM* b) const noexcept { BN_clear_free(b); }
};
using BnPtr = std::unique_ptr<BIGNUM, BnDeleter>;

struct BnCtxDeleter {
  void operator()(BN_CTX* c) const noexcept { BN_CTX_free(c); }
};

struct PkeyCtxDeleter {
  void operator()(EVP_PKEY_CTX* c) const noexcept { EVP_PKEY_CTX_free(c); }
};
using PkeyCtxPtr = std::unique_ptr<EVP_PKEY_CTX, PkeyCtxDeleter>;

struct BioDeleter {
  void operator()(BIO* b) const noexcept { BIO_free(b); }
};
using BioPtr = std::unique_ptr<BIO, BioDeleter>;

BnPtr new_bn() {
  BnPtr b(BN_new());
  if (!b) throw Error(ErrorKind::wrap, "BN_new failed");
  return b;
}

std::shared_ptr<EVP_PKEY> share(EVP_PKEY* p) { return std::shared_ptr<EVP_PKEY>(p, PkeyDeleter{}); }

Bytes digest(const EVP_MD* md, ByteView data) {
  Bytes out(EVP_MAX_MD_SIZE);
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, md, nullptr) != 1) {
    throw Error(ErrorKind::argument, openssl_error("digest failed"));
  }
  out.resize(len);
  return out;
}

Bytes aes_cbc(bool encrypt, const AesKey& key, const AesIv& iv, ByteView in) {
  std::unique_ptr<EVP_CIPHER_CTX, decltype(&EVP_CIPHER_CTX_free)> ctx(EVP_CIPHER_CTX_new(),
                                                                      &EVP_CIPHER_CTX_free);
  if (!ctx || EVP_CipherInit_ex(ctx.get(), EVP_aes_128_cbc(), nullptr, key.data(), iv.data(),
                                encrypt ? 1 : 0) != 1) {
    throw Error(ErrorKind::decrypt, openssl_error("cipher init failed"));
  }
  Bytes out(in.size() + 16);
  int len1 = 0, len2 = 0;
  if (EVP_CipherUpdate(ctx.get(), out.data(), &len1, in.data(), static_cast<int>(in.size())) != 1 ||
      EVP_CipherFinal_ex(ctx.get(), out.data() + len1, &len2) != 1) {
    ERR_clear_error();
    throw Error(ErrorKind::decrypt, encrypt ? "encryption failed" : "bad padding");
  }
  out.resize(static_cast<std::size_t>(len1 + len2));
  return out;
}

BnPtr generate_prime(Rng& rng, int bits, const BIGNUM* e, BN_CTX* ctx) {
  auto one = new_bn();
  BN_one(one.get());
  for (;;) {
    Bytes raw = rng.bytes(static_cast<std::size_t>(bits / 8));
    raw[0] |= 0xC0;  // keeps p*q at full length
    raw.back() |= 0x01;
    BnPtr p(BN_bin2bn(raw.data(), static_cast<int>(raw.size()), nullptr));
    auto pm1 = new_bn();
    auto g = new_bn();
    for (int step = 0; step < 4096 && BN_num_bits(p.get()) == bits; ++step) {
      if (BN_check_prime(p.get(), ctx, nullptr) == 1) {
        BN_sub(pm1.get(), p.get(), one.get());
        BN_gcd(g.get(), pm1.get(), e, ctx);
        if (BN_is_one(g.get())) return p;
      }
      BN_add_word(p.get(), 2);
    }
  }
}

}  // namespace

// --- Rng ----------------------------------------------------------------------

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return splitmix64(seed ^ splitmix64(h));
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(std::in_place, splitmix64(seed)) {}

Rng Rng::system() { return Rng(); }

Rng Rng::fork(std::string_view label) const {
  if (!engine_) return system();
  return Rng(derive_seed(seed_, label));
}

void Rng::fill(std::uint8_t* out, std::size_t n) {
  if (!engine_) {
    if (n > 0 && RAND_bytes(out, static_cast<int>(n)) != 1) {
      throw Error(ErrorKind::argument, openssl_error("RAND_bytes failed"));
    }
    return;
  }
  std::size_t i = 0;
  while (i < n) {
    std::uint64_t v = (*engine_)();
    for (int k = 0; k < 8 && i < n; ++k, ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * k));
  }
}

Bytes Rng::bytes(std::size_t n) {
  Bytes b(n);
  fill(b.data(), n);
  return b;
}

std::uint64_t Rng::next_u64() {
  if (engine_) return (*engine_)();
  std::uint64_t v = 0;
  fill(reinterpret_cast<std::uint8_t*>(&v), sizeof v);
  return v;
}

// --- encodings ------------------------------------------------------------------

std::string base64_encode(ByteView data) {
  std::string out(4 * ((data.size() + 2) / 3), '\0');
  int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data.data(),
                          static_cast<int>(data.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

Bytes base64_decode(std::string_view text) {
  std::string clean;
  clean.reserve(text.size());
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) clean.push_back(c);
  }
  if (clean.size() % 4 != 0) throw Error(ErrorKind::format, "base64 length is not a multiple of 4");
  std::size_t pad = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    char c = clean[i];
    bool alpha = std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '/';
    if (c == '=') {
      if (i + 2 < clean.size()) throw Error(ErrorKind::format, "misplaced base64 padding");
      ++pad;
    } else if (!alpha || pad > 0) {
      throw Error(ErrorKind::format, "invalid base64 character");
    }
  }
  Bytes out(clean.size() / 4 * 3);
  int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(clean.data()),
                          static_cast<int>(clean.size()));
  if (n < 0) throw Error(ErrorKind::format, "invalid base64");
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

Bytes sha1(ByteView data) { return digest(EVP_sha1(), data); }
Bytes sha224(ByteView data) { return digest(EVP_sha224(), data); }
Bytes sha256(ByteView data) { return digest(EVP_sha256(), data); }
std::string sha1_hex(std::string_view text) { return to_hex(sha1(view(text))); }

// --- AES ------------------------------------------------------------------------------

Bytes aes128_cbc_encrypt(const AesKey& key, const AesIv& iv, ByteView plaintext) {
  return aes_cbc(true, key, iv, plaintext);
}

Bytes aes128_cbc_decrypt(const AesKey& key, const AesIv& iv, ByteView ciphertext) {
  if (ciphertext.empty() || ciphertext.size() % 16 != 0) {
    throw Error(ErrorKind::decrypt, "ciphertext length is not a positive multiple of 16");
  }
  return aes_cbc(false, key, iv, ciphertext);
}

SessionKeyMaterial generate_session_material(Rng& rng, std::int64_t now_s) {
  SessionKeyMaterial m;
  m.aes_key = rng.array<16>();
  m.iv = rng.array<16>();
  m.created_at = now_s;
  return m;
}

EncryptedPayload encrypt_payload(ByteView plaintext, const SessionKeyMaterial& material, IvMode mode,
                                 Rng& rng, std::int64_t now_s) {
  if (material.is_expired(now_s)) throw Error(ErrorKind::session_expired, "session key expired");
  EncryptedPayload out;
  out.iv_used = mode == IvMode::static_iv ? material.iv : rng.array<16>();
  out.ciphertext_b64 = base64_encode(aes128_cbc_encrypt(material.aes_key, out.iv_used, plaintext));
  return out;
}

Bytes decrypt_payload(std::string_view ciphertext_b64, const SessionKeyMaterial& material,
                      std::int64_t now_s, const std::optional<AesIv>& iv_override) {
  if (material.is_expired(now_s)) throw Error(ErrorKind::session_expired, "session key expired");
  Bytes ct;
  try {
    ct = base64_decode(ciphertext_b64);
  } catch (const Error& e) {
    throw Error(ErrorKind::decrypt, e.what());
  }
  return aes128_cbc_decrypt(material.aes_key, iv_override.value_or(material.iv), ct);
}

// --- RSA ----------------------------------------------------------------------------------

void PkeyDeleter::operator()(EVP_PKEY* p) const noexcept { EVP_PKEY_free(p); }

RsaPublicKey RsaPublicKey::from_pem(std::string_view pem) {
  BioPtr bio(BIO_new_mem_buf(pem.data(), static_cast<int>(pem.size())));
  EVP_PKEY* raw = bio ? PEM_read_bio_PUBKEY(bio.get(), nullptr, nullptr, nullptr) : nullptr;
  if (!raw) throw Error(ErrorKind::format, openssl_error("not a PEM public key"));
  auto key = share(raw);
  if (!EVP_PKEY_is_a(raw, "RSA")) throw Error(ErrorKind::format, "public key is not RSA");
  return RsaPublicKey(std::move(key));
}

std::string RsaPublicKey::pem() const {
  BioPtr bio(BIO_new(BIO_s_mem()));
  if (!bio || PEM_write_bio_PUBKEY(bio.get(), key_.get()) != 1) {
    throw Error(ErrorKind::format, openssl_error("PEM export failed"));
  }
  char* data = nullptr;
  long len = BIO_get_mem_data(bio.get(), &data);
  return std::string(data, static_cast<std::size_t>(len));
}

int RsaPublicKey::modulus_bits() const { return EVP_PKEY_get_bits(key_.get()); }

bool RsaPublicKey::operator==(const RsaPublicKey& other) const {
  return EVP_PKEY_eq(key_.get(), other.key_.get()) == 1;
}

RsaKeyPair RsaKeyPair::generate(Rng& rng, int modulus_bits) {
  if (modulus_bits < 512 || modulus_bits % 16 != 0) {
    throw Error(ErrorKind::argument, "unsupported RSA modulus size");
  }
  std::unique_ptr<BN_CTX, BnCtxDeleter> ctx(BN_CTX_new());
  auto e = new_bn();
  BN_set_word(e.get(), 65537);

  BnPtr p = generate_prime(rng, modulus_bits / 2, e.get(), ctx.get());
  BnPtr q;
  do {
    q = generate_prime(rng, modulus_bits / 2, e.get(), ctx.get());
  } while (BN_cmp(p.get(), q.get()) == 0);
  if (BN_cmp(p.get(), q.get()) < 0) std::swap(p, q);

  auto n = new_bn(), d = new_bn(), pm1 = new_bn(), qm1 = new_bn(), phi = new_bn();
  auto dmp1 = new_bn(), dmq1 = new_bn(), iqmp = new_bn();
  BN_mul(n.get(), p.get(), q.get(), ctx.get());
  BN_sub(pm1.get(), p.get(), BN_value_one());
  BN_sub(qm1.get(), q.get(), BN_value_one());
  BN_mul(phi.get(), pm1.get(), qm1.get(), ctx.get());
  if (!BN_mod_inverse(d.get(), e.get(), phi.get(), ctx.get()) ||
      !BN_mod(dmp1.get(), d.get(), pm1.get(), ctx.get()) ||
      !BN_mod(dmq1.get(), d.get(), qm1.get(), ctx.get()) ||
      !BN_mod_inverse(iqmp.get(), q.get(), p.get(), ctx.get())) {
    throw Error(ErrorKind::wrap, openssl_error("RSA parameter derivation failed"));
  }

  std::unique_ptr<OSSL_PARAM_BLD, decltype(&OSSL_PARAM_BLD_free)> bld(OSSL_PARAM_BLD_new(),
                                                                      &OSSL_PARAM_BLD_free);
  OSSL_PARAM_BLD_push_BN(bld.get(), OSSL_PKEY_PARAM_RSA_N, n.get());
  OSSL_PARAM_BLD_push_BN(bld.get(), OSSL_PKEY_PARAM_RSA_E, e.get());
  OSSL_PARAM_BLD_push_BN(bld.get(), OSSL_PKEY_PARAM_RSA_D, d.get());
  OSSL_PARAM_BLD_push_BN(bld.get(), OSSL_PKEY_PARAM_RSA_FACTOR1, p.get());
  OSSL_PARAM_BLD_push_BN(bld.get(), OSSL_PKEY_PARAM_RSA_FACTOR2, q.get());
  OSSL_PARAM_BLD_push_BN(bld.get(), OSSL_PKEY_PARAM_RSA_EXPONENT1, dmp1.get());
  OSSL_PARAM_BLD_push_BN(bld.get(), OSSL_PKEY_PARAM_RSA_EXPONENT2, dmq1.get());
  OSSL_PARAM_BLD_push_BN(bld.get(), OSSL_PKEY_PARAM_RSA_COEFFICIENT1, iqmp.get());
  std::unique_ptr<OSSL_PARAM, decltype(&OSSL_PARAM_free)> params(OSSL_PARAM_BLD_to_param(bld.get()),
                                                                 &OSSL_PARAM_free);
  PkeyCtxPtr pctx(EVP_PKEY_CTX_new_from_name(nullptr, "RSA", nullptr));
  EVP_PKEY* raw = nullptr;
  if (!params || !pctx || EVP_PKEY_fromdata_init(pctx.get()) != 1 ||
      EVP_PKEY_fromdata(pctx.get(), &raw, EVP_PKEY_KEYPAIR, params.get()) != 1) {
    throw Error(ErrorKind::wrap, openssl_error("RSA key import failed"));
  }
  return RsaKeyPair(share(raw));
}

RsaPublicKey RsaKeyPair::public_key() const {
  BioPtr bio(BIO_new(BIO_s_mem()));
  if (!bio || PEM_write_bio_PUBKEY(bio.get(), key_.get()) != 1) {
    throw Error(ErrorKind::format, openssl_error("PEM export failed"));
  }
  char* data = nullptr;
  long len = BIO_get_mem_data(bio.get(), &data);
  return RsaPublicKey::from_pem(std::string_view(data, static_cast<std::size_t>(len)));
}

int RsaKeyPair::modulus_bits() const { return EVP_PKEY_get_bits(key_.get()); }

Bytes rsa_encrypt_pkcs1(const RsaPublicKey& key, ByteView plaintext, Rng& rng) {
  const std::size_t k = static_cast<std::size_t>(EVP_PKEY_get_size(key.get()));
  if (plaintext.size() + 11 > k) throw Error(ErrorKind::wrap, "plaintext too large for RSA modulus");
  // EM = 00 || 02 || PS (non-zero) || 00 || M
  Bytes em(k, 0);
  em[1] = 0x02;
  std::size_t ps_len = k - 3 - plaintext.size();
  for (std::size_t i = 0; i < ps_len; ++i) {
    std::uint8_t b = 0;
    while (b == 0) b = rng.bytes(1)[0];
    em[2 + i] = b;
  }
  std::copy(plaintext.begin(), plaintext.end(), em.begin() + static_cast<std::ptrdiff_t>(3 + ps_len));

  PkeyCtxPtr ctx(EVP_PKEY_CTX_new_from_pkey(nullptr, key.get(), nullptr));
  std::size_t out_len = k;
  Bytes out(k);
  if (!ctx || EVP_PKEY_encrypt_init(ctx.get()) != 1 ||
      EVP_PKEY_CTX_set_rsa_padding(ctx.get(), RSA_NO_PADDING) != 1 ||
      EVP_PKEY_encrypt(ctx.get(), out.data(), &out_len, em.data(), em.size()) != 1) {
    throw Error(ErrorKind::wrap, openssl_error("RSA encryption failed"));
  }
  out.resize(out_len);
  return out;
}

Bytes RsaKeyPair::decrypt_pkcs1(ByteView ciphertext) const {
  const std::size_t k = static_cast<std::size_t>(EVP_PKEY_get_size(key_.get()));
  if (ciphertext.size() != k) throw Error(ErrorKind::wrap, "RSA ciphertext has wrong length");
  PkeyCtxPtr ctx(EVP_PKEY_CTX_new_from_pkey(nullptr, key_.get(), nullptr));
  Bytes em(k);
  std::size_t em_len = k;
  if (!ctx || EVP_PKEY_decrypt_init(ctx.get()) != 1 ||
      EVP_PKEY_CTX_set_rsa_padding(ctx.get(), RSA_NO_PADDING) != 1 ||
      EVP_PKEY_decrypt(ctx.get(), em.data(), &em_len, ciphertext.data(), ciphertext.size()) != 1) {
    throw Error(ErrorKind::wrap, openssl_error("RSA decryption failed"));
  }
  if (em_len != k || em[0] != 0x00 || em[1] != 0x02) throw Error(ErrorKind::wrap, "bad PKCS#1 padding");
  auto sep = std::find(em.begin() + 2, em.end(), std::uint8_t{0});
  if (sep == em.end() || sep - em.begin() < 10) throw Error(ErrorKind::wrap, "bad PKCS#1 padding");
  return Bytes(sep + 1, em.end());
}

Bytes RsaKeyPair::sign_sha256(ByteView message) const {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> md(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  std::size_t len = 0;
  if (!md || EVP_DigestSignInit(md.get(), nullptr, EVP_sha256(), nullptr, key_.get()) != 1 ||
      EVP_DigestSign(md.get(), nullptr, &len, message.data(), message.size()) != 1) {
    throw Error(ErrorKind::wrap, openssl_error("signing failed"));
  }
  Bytes sig(len);
  if (EVP_DigestSign(md.get(), sig.data(), &len, message.data(), message.size()) != 1) {
    throw Error(ErrorKind::wrap, openssl_error("signing failed"));
  }
  sig.resize(len);
  return sig;
}

bool rsa_verify_sha256(const RsaPublicKey& key, ByteView message, ByteView signature) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> md(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!md || EVP_DigestVerifyInit(md.get(), nullptr, EVP_sha256(), nullptr, key.get()) != 1) {
    ERR_clear_error();
    return false;
  }
  bool ok = EVP_DigestVerify(md.get(), signature.data(), signature.size(), message.data(),
                             message.size()) == 1;
  ERR_clear_error();
  return ok;
}

std::string wrap_key(const SessionKeyMaterial& material, const RsaPublicKey& peer, Rng& rng) {
  Bytes plain(material.aes_key.begin(), material.aes_key.end());
  plain.insert(plain.end(), material.iv.begin(), material.iv.end());
  return base64_encode(rsa_encrypt_pkcs1(peer, plain, rng));
}

SessionKeyMaterial unwrap_key(std::string_view blob_b64, const RsaKeyPair& own, std::int64_t now_s) {
  Bytes ct;
  try {
    ct = base64_decode(blob_b64);
  } catch (const Error& e) {
    throw Error(ErrorKind::wrap, e.what());
  }
  Bytes plain = own.decrypt_pkcs1(ct);
  if (plain.size() != 32) throw Error(ErrorKind::wrap, "wrapped key is not 32 bytes");
  SessionKeyMaterial m;
  std::copy_n(plain.begin(), 16, m.aes_key.begin());
  std::copy_n(plain.begin() + 16, 16, m.iv.begin());
  m.created_at = now_s;
  return m;
}

// --- cookies and tokens -----------------------------------------------------------------

std::string SessionCookie::set_cookie_header() const {
  return "TP_SESSIONID=" + value + ";TIMEOUT=" + std::to_string(timeout_minutes);
}

std::string SessionCookie::cookie_header() const { return "TP_SESSIONID=" + value; }

std::string CredentialIssuer::fresh(bool upper) {
  for (;;) {
    Bytes raw = rng_.bytes(16);
    std::string v = upper ? to_upper_hex(raw) : to_hex(raw);
    if (issued_.insert(v).second) return v;
  }
}

SessionCookie CredentialIssuer::issue_cookie() {
  std::lock_guard lock(mu_);
  return SessionCookie{fresh(true), kCookieTimeoutMinutes};
}

AuthToken CredentialIssuer::issue_token() {
  std::lock_guard lock(mu_);
  return AuthToken{fresh(false)};
}

}  // namespace tapolab
