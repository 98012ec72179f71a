#include <gtest/gtest.h>

#include <algorithm>

#include "clock.hpp"
#include "error.hpp"
#include "hardened.hpp"

using namespace tapolab;

namespace {

constexpr std::int64_t kNow = 1'700'000'000;

struct Fixture : ::testing::Test {
  std::shared_ptr<VirtualClock> clock = std::make_shared<VirtualClock>();
  CloudStub cloud{Rng(5).fork("cloud"), clock};
};

bool contains(const std::vector<DiscoveryKey>& ks, const DiscoveryKey& k) {
  return std::find(ks.begin(), ks.end(), k) != ks.end();
}

}  // namespace

TEST(DiscoveryV2, HeaderTagAndRoundTrip) {
  DiscoveryKey key{};
  key.fill(0x42);
  Bytes raw = encode_discovery_v2(OwnerScanRequest{"ab"}, Nonce{1, 2, 3, 4}, key);
  EXPECT_EQ(discovery_version(raw), 2);
  EXPECT_EQ(raw[7], kDiscoveryVersion2);
  Bytes zeroed = raw;
  std::fill(zeroed.begin() + 12, zeroed.begin() + 40, 0);
  Bytes keyed(key.begin(), key.end());
  keyed.insert(keyed.end(), zeroed.begin(), zeroed.end());
  EXPECT_EQ(Bytes(raw.begin() + 12, raw.begin() + 40), sha224(keyed));
  EXPECT_TRUE(verify_discovery_v2(raw, key));
  std::vector<DiscoveryKey> keys{key};
  auto d = decode_discovery_v2(raw, keys);
  EXPECT_EQ(std::get<OwnerScanRequest>(d.data).owner_id, "ab");
}

TEST(DiscoveryV2, EveryByteFlipFails) {
  DiscoveryKey key{};
  key[0] = 1;
  const Bytes raw = encode_discovery_v2(EmptyRequest{}, Nonce{}, key);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    Bytes t = raw;
    t[i] ^= 0x80;
    EXPECT_FALSE(verify_discovery_v2(t, key)) << i;
  }
  DiscoveryKey other = key;
  other[1] = 9;
  EXPECT_FALSE(verify_discovery_v2(raw, other));
}

TEST(DiscoveryV2, VersionSniffing) {
  EXPECT_EQ(discovery_version(encode_discovery(EmptyRequest{}, Nonce{}, kDefaultChecksumSecret)), 1);
  EXPECT_EQ(discovery_version(Bytes{1, 2, 3}), 0);
}

TEST(Freshness, Verdicts) {
  FreshnessState st;
  const std::int64_t now = kNow * 1000;
  EXPECT_EQ(check_freshness(now, 1, st, now), FreshnessVerdict::accept);
  EXPECT_EQ(check_freshness(now, 1, st, now), FreshnessVerdict::duplicate);
  EXPECT_EQ(check_freshness(now, 0, st, now), FreshnessVerdict::duplicate);
  EXPECT_EQ(check_freshness(now - kFreshnessWindowMs - 1, 2, st, now), FreshnessVerdict::stale);
  EXPECT_EQ(check_freshness(now + kFreshnessWindowMs + 1, 2, st, now), FreshnessVerdict::stale);
  EXPECT_EQ(check_freshness(now - kFreshnessWindowMs, 2, st, now), FreshnessVerdict::accept);
  EXPECT_EQ(st.last_seq, 2);
}

TEST(Freshness, AcceptedSequenceIsStrictlyIncreasing) {
  FreshnessState st;
  Rng rng(3);
  std::vector<std::int64_t> accepted;
  for (int i = 0; i < 500; ++i) {
    auto seq = static_cast<std::int64_t>(rng.next_u64() % 200);
    if (check_freshness(0, seq, st, 0) == FreshnessVerdict::accept) accepted.push_back(seq);
  }
  ASSERT_FALSE(accepted.empty());
  EXPECT_TRUE(std::adjacent_find(accepted.begin(), accepted.end(), std::greater_equal<>()) == accepted.end());
}

TEST_F(Fixture, CertificateAndKeyTransmission) {
  auto id = cloud.register_device("dev1");
  EXPECT_TRUE(verify_certificate(id.certificate, cloud.root(), clock->now_s()));
  EXPECT_EQ(cloud.certificate_for("dev1")->device_public_key_pem, id.key.public_key().pem());

  Bytes sig = sign_key_transmission("blob-A", id.key);
  EXPECT_TRUE(verify_key_transmission("blob-A", sig, id.certificate, cloud.root(), clock->now_s()));
  // A genuine signature does not carry over to a substituted blob.
  EXPECT_FALSE(verify_key_transmission("blob-B", sig, id.certificate, cloud.root(), clock->now_s()));

  // Certificate issued by someone else's root.
  CloudStub rogue(Rng(6).fork("cloud"), clock);
  auto fake = rogue.register_device("dev1");
  EXPECT_FALSE(verify_certificate(fake.certificate, cloud.root(), clock->now_s()));
  Bytes fake_sig = sign_key_transmission("blob-A", fake.key);
  EXPECT_FALSE(verify_key_transmission("blob-A", fake_sig, fake.certificate, cloud.root(), clock->now_s()));

  // Expired certificate.
  EXPECT_FALSE(verify_certificate(id.certificate, cloud.root(), id.certificate.not_after + 1));

  // JSON round-trip keeps it verifiable.
  auto again = DeviceCertificate::from_json(id.certificate.to_json());
  EXPECT_TRUE(verify_certificate(again, cloud.root(), clock->now_s()));
}

TEST_F(Fixture, DiscoveryKeyRotationAndGrace) {
  cloud.register_account("acct");
  auto k1 = cloud.current_key("acct");
  EXPECT_EQ(k1.key.size(), 32u);
  auto k2 = cloud.rotate_discovery_key("acct");
  EXPECT_EQ(k2.epoch, k1.epoch + 1);
  EXPECT_NE(k1.key, k2.key);
  auto valid = cloud.valid_keys_for_account("acct");
  EXPECT_TRUE(contains(valid, k1.key));  // grace epoch
  EXPECT_TRUE(contains(valid, k2.key));

  clock->advance_s(CloudStub::kDefaultEpochSeconds);
  valid = cloud.valid_keys_for_account("acct");
  EXPECT_FALSE(contains(valid, k1.key));
  EXPECT_TRUE(contains(valid, k2.key));

  // A message tagged with the retired key no longer decodes.
  Bytes old = encode_discovery_v2(EmptyRequest{}, Nonce{}, k1.key);
  EXPECT_THROW(decode_discovery_v2(old, valid), Error);
}

TEST_F(Fixture, AccountsAreIndependentAndUnknownIsError) {
  cloud.register_account("a");
  cloud.register_account("b");
  EXPECT_NE(cloud.current_key("a").key, cloud.current_key("b").key);
  EXPECT_THROW(cloud.rotate_discovery_key("nobody"), Error);
  EXPECT_THROW(cloud.associate("unregistered", "a"), Error);
}

TEST_F(Fixture, DeviceSeesItsAccountKeys) {
  cloud.register_device("dev");
  cloud.associate("dev", "acct");
  EXPECT_EQ(cloud.valid_keys_for_device("dev").front(), cloud.current_key("acct").key);
  EXPECT_TRUE(cloud.valid_keys_for_device("other").empty());
}

TEST(CloudStub, SameSeedSameWorld) {
  auto c1 = std::make_shared<VirtualClock>();
  CloudStub a(Rng(9), c1), b(Rng(9), c1);
  EXPECT_EQ(a.root(), b.root());
  a.register_account("x");
  b.register_account("x");
  EXPECT_EQ(a.current_key("x").key, b.current_key("x").key);
  EXPECT_EQ(a.register_device("d").key.public_key().pem(), b.register_device("d").key.public_key().pem());
}

TEST(Profile, Names) {
  EXPECT_EQ(profile_from_string("hardened"), Profile::hardened);
  EXPECT_EQ(to_string(Profile::vulnerable), "vulnerable");
  EXPECT_THROW(profile_from_string("medium"), Error);
}
