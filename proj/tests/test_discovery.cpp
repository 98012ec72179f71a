#include <gtest/gtest.h>
#include <zlib.h>

#include "crc32.hpp"
#include "crypto.hpp"
#include "discovery.hpp"
#include "error.hpp"

using namespace tapolab;

namespace {

std::uint32_t zlib_crc(ByteView b) {
  return static_cast<std::uint32_t>(::crc32(0L, b.data(), static_cast<uInt>(b.size())));
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::io;
}

DiscoveryResponseBody sample_body() {
  DiscoveryResponseBody b;
  b.device_id = "00112233445566778899aabbccddeeff";
  b.owner = "fc2398a73dd54d6237c4fdb58fd7d753";
  b.factory_default = false;
  b.ip = "192.168.1.20";
  b.mac = "3C-01-02-03-04-05";
  return b;
}

}  // namespace

// Check values computed with Python's zlib before the build.
TEST(Crc32, CheckValue) { EXPECT_EQ(tapolab::crc32(view("123456789")), 0xCBF43926u); }
TEST(Crc32, EmptyIsZero) { EXPECT_EQ(tapolab::crc32(ByteView{}), 0u); }

TEST(Crc32, AgreesWithZlibOnRandomBuffers) {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    Bytes b = rng.bytes(rng.next_u64() % 300);
    ASSERT_EQ(tapolab::crc32(b), zlib_crc(b));
  }
}

TEST(Crc32, EverySingleBitFlipChangesOutput) {
  Rng rng(8);
  Bytes b = rng.bytes(64);
  const auto base = tapolab::crc32(b);
  for (std::size_t i = 0; i < b.size() * 8; ++i) {
    b[i / 8] ^= static_cast<std::uint8_t>(1u << (i % 8));
    EXPECT_NE(tapolab::crc32(b), base) << "bit " << i;
    b[i / 8] ^= static_cast<std::uint8_t>(1u << (i % 8));
  }
}

TEST(Discovery, FixedHeaderForEmptyRequest) {
  Bytes p = encode_discovery(EmptyRequest{}, Nonce{0, 0, 0, 0}, ChecksumSecret::from_u32(0));
  ASSERT_EQ(p.size(), 16u);
  const Bytes want{0x02, 0x00, 0x00, 0x01, 0x00, 0x00, 0x11, 0x00};
  EXPECT_EQ(Bytes(p.begin(), p.begin() + 8), want);
}

TEST(Discovery, KeyedChecksumMatchesReference) {
  Bytes p = encode_discovery(EmptyRequest{}, Nonce{0xDE, 0xAD, 0xBE, 0xEF}, ChecksumSecret::from_u32(0x01020304));
  // zlib.crc32(02000001 00001100 DEADBEEF 01020304) == 0x56368D3F
  EXPECT_EQ(to_hex(ByteView(p.data() + 12, 4)), "56368d3f");
  Bytes with_secret = p;
  with_secret[12] = 1, with_secret[13] = 2, with_secret[14] = 3, with_secret[15] = 4;
  EXPECT_EQ(zlib_crc(with_secret), 0x56368D3Fu);
}

TEST(Discovery, DataLengthIsBigEndian) {
  Bytes p = encode_discovery(OwnerScanRequest{"fc2398a73dd54d6237c4fdb58fd7d753"}, Nonce{}, kDefaultChecksumSecret);
  const std::size_t n = p.size() - 16;
  EXPECT_EQ(p[4], n >> 8);
  EXPECT_EQ(p[5], n & 0xFF);
}

TEST(Discovery, RandomizedRoundTrip) {
  Rng rng(1000);
  for (int i = 0; i < 1000; ++i) {
    DiscoveryData d;
    switch (rng.next_u64() % 3) {
      case 0: d = EmptyRequest{}; break;
      case 1: d = OwnerScanRequest{to_hex(rng.bytes(16))}; break;
      default: {
        DiscoveryResponseBody b = sample_body();
        b.device_id = to_hex(rng.bytes(16));
        b.factory_default = rng.next_u64() % 2 == 0;
        b.owner = b.factory_default ? kUnownedOwner : to_hex(rng.bytes(16));
        b.http_port = static_cast<std::uint16_t>(rng.next_u64());
        d = b;
      }
    }
    const Nonce n = rng.array<4>();
    const auto s = ChecksumSecret::from_u32(static_cast<std::uint32_t>(rng.next_u64()));
    Bytes raw = encode_discovery(d, n, s);
    ASSERT_EQ(Bytes(raw.begin(), raw.begin() + 4), Bytes({0x02, 0x00, 0x00, 0x01}));
    ASSERT_EQ(raw[6], 0x11);
    ASSERT_EQ(raw[7], 0x00);
    auto back = decode_discovery(raw, s);
    ASSERT_EQ(back.data, d);
    ASSERT_EQ(back.nonce, n);
  }
}

TEST(Discovery, ResponseRoundTrip) {
  auto raw = encode_discovery(sample_body(), Nonce{1, 2, 3, 4}, kDefaultChecksumSecret);
  auto d = decode_discovery(raw, kDefaultChecksumSecret);
  EXPECT_EQ(std::get<DiscoveryResponseBody>(d.data), sample_body());
}

TEST(Discovery, TamperAnywhereOutsideChecksumIsRejected) {
  const Bytes raw = encode_discovery(sample_body(), Nonce{9, 9, 9, 9}, kDefaultChecksumSecret);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (i >= 12 && i < 16) continue;
    Bytes t = raw;
    t[i] ^= 0x01;
    EXPECT_FALSE(verify_checksum(t, kDefaultChecksumSecret)) << "byte " << i;
    EXPECT_THROW(decode_discovery(t, kDefaultChecksumSecret), Error) << "byte " << i;
  }
}

TEST(Discovery, FlippedChecksumBitIsAuthenticationError) {
  Bytes raw = encode_discovery(EmptyRequest{}, Nonce{}, kDefaultChecksumSecret);
  raw[13] ^= 0x10;
  EXPECT_EQ(kind_of([&] { decode_discovery(raw, kDefaultChecksumSecret); }), ErrorKind::authentication);
}

TEST(Discovery, ErrorKinds) {
  Bytes raw = encode_discovery(OwnerScanRequest{"ab"}, Nonce{}, kDefaultChecksumSecret);
  EXPECT_EQ(kind_of([&] { decode_discovery(ByteView(raw.data(), 10), kDefaultChecksumSecret); }),
            ErrorKind::truncated);

  Bytes bad_header = raw;
  bad_header[6] = 0x12;
  EXPECT_EQ(kind_of([&] { decode_discovery(bad_header, kDefaultChecksumSecret); }), ErrorKind::format);

  // data_length says 5, four bytes follow
  Bytes short_data = encode_discovery(EmptyRequest{}, Nonce{}, kDefaultChecksumSecret);
  short_data[5] = 5;
  short_data.insert(short_data.end(), {'{', '}', ' ', ' '});
  EXPECT_EQ(kind_of([&] { decode_discovery(short_data, kDefaultChecksumSecret); }), ErrorKind::format);
}

TEST(Discovery, MalformedJsonIsParseError) {
  // Build a payload by hand with valid framing and checksum but broken JSON.
  Bytes p{0x02, 0x00, 0x00, 0x01, 0x00, 0x03, 0x11, 0x00, 1, 2, 3, 4};
  auto key = kDefaultChecksumSecret.key;
  p.insert(p.end(), key.begin(), key.end());
  p.insert(p.end(), {'{', 'x', '}'});
  auto crc = keyed_crc32(p);
  std::copy(crc.begin(), crc.end(), p.begin() + 12);
  EXPECT_EQ(kind_of([&] { decode_discovery(p, kDefaultChecksumSecret); }), ErrorKind::parse);
}

TEST(Discovery, OversizedDataIsLengthOverflow) {
  DiscoveryResponseBody b = sample_body();
  b.device_model = std::string(70000, 'x');
  EXPECT_EQ(kind_of([&] { encode_discovery(b, Nonce{}, kDefaultChecksumSecret); }), ErrorKind::length_overflow);
}

TEST(Discovery, ExactlyOneKeyVerifiesIn16BitSpace) {
  const auto secret = ChecksumSecret::from_u32(0x0000BEEF);
  const Bytes raw = encode_discovery(OwnerScanRequest{"fc2398a73dd54d6237c4fdb58fd7d753"}, Nonce{5, 6, 7, 8}, secret);
  std::vector<std::uint32_t> hits;
  for (std::uint32_t k = 0; k < (1u << 16); ++k) {
    if (verify_checksum(raw, ChecksumSecret::from_u32(k))) hits.push_back(k);
  }
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0], 0x0000BEEFu);
}

TEST(Discovery, SecretIsBigEndianInField) {
  EXPECT_EQ(ChecksumSecret::from_u32(0x01020304).hex(), "01020304");
  EXPECT_EQ(ChecksumSecret::from_u32(0x01020304).as_u32(), 0x01020304u);
}

TEST(Discovery, ListingFieldOrderPreserved) {
  Bytes data = serialize_discovery_data(sample_body());
  std::string s = to_string(data);
  auto pos = [&](const char* k) { return s.find(std::string("\"") + k + "\""); };
  EXPECT_LT(pos("device_id"), pos("owner"));
  EXPECT_LT(pos("owner"), pos("device_type"));
  EXPECT_LT(pos("ip"), pos("mac"));
  EXPECT_LT(pos("factory_default"), pos("http_port"));
}
