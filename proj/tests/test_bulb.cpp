#include <gtest/gtest.h>

#include "support.hpp"

using namespace tapolab;
using testkit::World;

namespace {

// Raw client for poking the bulb below the app's abstractions.
struct RawClient {
  Bulb& bulb;
  std::shared_ptr<VirtualClock> clock;
  Rng rng{31};
  RsaKeyPair key = [] {
    Rng r(32);
    return RsaKeyPair::generate(r, 1024);
  }();
  std::string cookie;
  SessionKeyMaterial material;
  std::optional<std::string> token;
  std::int64_t seq = 1;
  bool hardened = false;

  HttpResponse send(const RpcRequest& r) { return parse_http_response(bulb.handle_http(build_http_request(r, "b"))); }

  HttpResponse handshake(std::string pem = {}) {
    RpcRequest r{"handshake", Json{{"key", pem.empty() ? key.public_key().pem() : pem}}};
    auto resp = send(r);
    if (resp.set_cookie) {
      cookie = resp.set_cookie->value;
      material = unwrap_key((*resp.response.result)["key"].get<std::string>(), key, clock->now_s());
    }
    return resp;
  }

  RpcRequest outer(RpcRequest inner) {
    inner.request_time_millis = clock->now_ms();
    if (token) inner.token = token;
    if (hardened) inner.seq = seq++;
    RpcRequest o = wrap_passthrough(inner, material, hardened ? IvMode::dynamic_iv : IvMode::static_iv, rng,
                                    clock->now_s());
    o.cookie = cookie;
    return o;
  }

  // Outer code when non-zero, else the inner response.
  RpcResponse call(const RpcRequest& inner) { return call_raw(outer(inner)); }
  RpcResponse call_raw(const RpcRequest& o) {
    auto resp = send(o).response;
    if (resp.error_code != 0) return resp;
    return unwrap_passthrough_response(resp, material, clock->now_s());
  }

  RpcResponse login(std::string_view email, std::string_view pw) {
    auto c = encode_login_credentials(email, pw);
    auto r = call(RpcRequest{"login_device", Json{{"username", c.username_b64}, {"password", c.password_b64}}});
    if (r.error_code == 0) token = (*r.result)["token"].get<std::string>();
    return r;
  }
  RpcResponse setup_login() {
    auto c = setup_credentials();
    auto r = call(RpcRequest{"login_device", Json{{"username", c.username_b64}, {"password", c.password_b64}}});
    if (r.error_code == 0) token = (*r.result)["token"].get<std::string>();
    return r;
  }
};

Json qs_info() {
  return Json{{"account", {{"username", base64_encode(std::string_view("bob@example.com"))},
                           {"password", base64_encode(std::string_view("pw"))}}},
              {"extra_info", {{"specs", "EU"}}},
              {"time", {{"region", "Europe/Rome"}, {"time_diff", 60}, {"timestamp", 1700000000}}},
              {"wireless",
               {{"key_type", "wpa2_psk"},
                {"password", base64_encode(std::string_view("wifipw"))},
                {"ssid", base64_encode(std::string_view("Net"))}}}};
}

}  // namespace

TEST(BulbDiscovery, EchoesNonceAndReportsMode) {
  World w;
  Bulb& b = w.add_bulb("192.168.1.20", false);
  Nonce n{7, 7, 7, 7};
  auto reply = b.handle_discovery(encode_discovery(EmptyRequest{}, n, kDefaultChecksumSecret));
  ASSERT_TRUE(reply);
  auto d = decode_discovery(*reply, kDefaultChecksumSecret);
  EXPECT_EQ(d.nonce, n);
  auto body = std::get<DiscoveryResponseBody>(d.data);
  EXPECT_TRUE(body.factory_default);
  EXPECT_EQ(body.owner, kUnownedOwner);
  EXPECT_EQ(body.http_port, 80);
}

TEST(BulbDiscovery, SilentOnBadChecksum) {
  World w;
  Bulb& b = w.add_bulb("192.168.1.20", true);
  EXPECT_FALSE(b.handle_discovery(encode_discovery(EmptyRequest{}, Nonce{}, ChecksumSecret::from_u32(1))));
}

TEST(BulbDiscovery, ResponseRateEqualsValidRateOverFuzz) {
  World w;
  Bulb& b = w.add_bulb("192.168.1.20", true);
  Rng rng(1000);
  int valid = 0, answered = 0;
  for (int i = 0; i < 1000; ++i) {
    Bytes p = encode_discovery(OwnerScanRequest{w.app->owner_id()}, rng.array<4>(), kDefaultChecksumSecret);
    // Random checksum field; about one in 2^32 is right by chance, so plant some valid ones.
    if (i % 4 != 0) {
      for (int j = 12; j < 16; ++j) p[j] = static_cast<std::uint8_t>(rng.next_u64());
    }
    if (verify_checksum(p, kDefaultChecksumSecret)) ++valid;
    if (b.handle_discovery(p)) ++answered;
  }
  EXPECT_EQ(answered, valid);
  EXPECT_EQ(valid, 250);
}

TEST(BulbHandshake, CookieKeyAndDistinctness) {
  World w;
  Bulb& b = w.add_bulb("192.168.1.20", true);
  RawClient c{b, w.clock};
  auto r1 = c.handshake();
  ASSERT_TRUE(r1.set_cookie);
  EXPECT_EQ(r1.set_cookie->timeout_minutes, 1440);
  Bytes wrapped = base64_decode((*r1.response.result)["key"].get<std::string>());
  auto raw = c.key.decrypt_pkcs1(wrapped);
  EXPECT_EQ(raw.size(), 32u);
  auto m1 = c.material;
  auto r2 = c.handshake();
  EXPECT_NE(r1.set_cookie->value, r2.set_cookie->value);
  EXPECT_NE(m1.aes_key, c.material.aes_key);
  EXPECT_FALSE(r1.response.result->contains("signature"));
}

TEST(BulbHandshake, MalformedPemIsFormatError) {
  World w;
  Bulb& b = w.add_bulb("192.168.1.20", true);
  RawClient c{b, w.clock};
  EXPECT_EQ(c.handshake("not a pem").response.error_code, error_code::format);
  EXPECT_EQ(c.send(RpcRequest{"handshake", Json::object()}).response.error_code, error_code::format);
  EXPECT_EQ(c.send(RpcRequest{"reboot", Json::object()}).response.error_code, error_code::unknown_method);
}

TEST(BulbLogin, ConfiguredAcceptsOnlyStoredCredentials) {
  World w;
  Bulb& b = w.add_bulb("192.168.1.20", true);
  RawClient c{b, w.clock};
  c.handshake();
  EXPECT_EQ(c.login("alice@example.com", "wrong").error_code, error_code::auth_failure);
  EXPECT_EQ(c.setup_login().error_code, error_code::auth_failure);
  auto ok = c.login("alice@example.com", "S3cret-Passw0rd!");
  EXPECT_EQ(ok.error_code, 0);
  EXPECT_EQ(c.token->size(), 32u);
}

TEST(BulbLogin, NoDeviceRpcWithoutLogin) {
  World w;
  Bulb& b = w.add_bulb("192.168.1.20", true);
  RawClient c{b, w.clock};
  c.handshake();
  EXPECT_EQ(c.call(RpcRequest{"get_device_info"}).error_code, error_code::auth_failure);
  EXPECT_EQ(c.call(RpcRequest{"set_device_info", Json{{"device_on", false}}}).error_code, error_code::auth_failure);
  EXPECT_TRUE(b.lamp().on);
  // No cookie at all.
  RpcRequest o = c.outer(RpcRequest{"get_device_info"});
  o.cookie.reset();
  EXPECT_EQ(c.send(o).response.error_code, error_code::auth_failure);
}

TEST(BulbSetup, SetQsInfoConfiguresOnce) {
  World w;
  Bulb& b = w.add_bulb("192.168.0.1", false);
  std::optional<WifiConfig> reported;
  b.on_setup_complete([&](const WifiConfig& wc) { reported = wc; });
  RawClient c{b, w.clock};
  c.handshake();
  ASSERT_EQ(c.setup_login().error_code, 0);

  Json missing = qs_info();
  missing.erase("wireless");
  EXPECT_EQ(c.call(RpcRequest{"set_qs_info", missing}).error_code, error_code::format);
  EXPECT_EQ(b.mode(), DeviceMode::setup);

  EXPECT_EQ(c.call(RpcRequest{"set_qs_info", qs_info()}).error_code, 0);
  EXPECT_EQ(b.mode(), DeviceMode::configured);
  ASSERT_TRUE(reported);
  EXPECT_EQ(reported->ssid, "Net");
  EXPECT_EQ(reported->password, "wifipw");
  EXPECT_EQ(reported->key_type, "wpa2_psk");
  auto st = b.state();
  EXPECT_EQ(st.owner, owner_id_for_email("bob@example.com"));
  EXPECT_EQ(st.stored_credentials, encode_login_credentials("bob@example.com", "pw"));

  // Now configured: discovery says so, and set_qs_info is gone.
  auto d = decode_discovery(*b.handle_discovery(encode_discovery(EmptyRequest{}, Nonce{}, kDefaultChecksumSecret)),
                            kDefaultChecksumSecret);
  EXPECT_FALSE(std::get<DiscoveryResponseBody>(d.data).factory_default);
  EXPECT_EQ(c.call(RpcRequest{"set_qs_info", qs_info()}).error_code, error_code::unknown_method);
}

TEST(BulbSetup, NoConfiguredModeWithoutSetQsInfo) {
  World w;
  Bulb& b = w.add_bulb("192.168.0.1", false);
  RawClient c{b, w.clock};
  c.handshake();
  c.setup_login();
  for (const char* m : {"get_device_info", "set_device_info", "bogus"}) c.call(RpcRequest{m, Json::object()});
  EXPECT_EQ(b.mode(), DeviceMode::setup);
  EXPECT_FALSE(b.state().owner);
}

TEST(BulbControl, SetThenGetAndRangeChecks) {
  World w;
  Bulb& b = w.add_bulb("192.168.1.20", true);
  RawClient c{b, w.clock};
  c.handshake();
  c.login("alice@example.com", "S3cret-Passw0rd!");
  EXPECT_EQ(c.call(RpcRequest{"set_device_info", Json{{"device_on", false}, {"brightness", 30}}}).error_code, 0);
  auto info = c.call(RpcRequest{"get_device_info"});
  EXPECT_EQ((*info.result)["device_on"], false);
  EXPECT_EQ((*info.result)["brightness"], 30);
  EXPECT_EQ(c.call(RpcRequest{"set_device_info", Json{{"brightness", 0}}}).error_code, error_code::format);
  EXPECT_EQ(c.call(RpcRequest{"set_device_info", Json{{"hue", 360}}}).error_code, error_code::format);
  EXPECT_EQ(c.call(RpcRequest{"set_device_info", Json{{"color_temp", 7000}}}).error_code, error_code::format);
  EXPECT_EQ(b.lamp().brightness, 30);
}

TEST(BulbReplay, VulnerableAcceptsIdenticalCiphertextAgain) {
  World w;
  Bulb& b = w.add_bulb("192.168.1.20", true);
  RawClient c{b, w.clock};
  c.handshake();
  c.login("alice@example.com", "S3cret-Passw0rd!");
  RpcRequest off = c.outer(RpcRequest{"set_device_info", Json{{"device_on", false}}});
  EXPECT_EQ(c.call_raw(off).error_code, 0);
  c.call(RpcRequest{"set_device_info", Json{{"device_on", true}}});
  EXPECT_TRUE(b.lamp().on);
  EXPECT_EQ(c.call_raw(off).error_code, 0);
  EXPECT_FALSE(b.lamp().on);
}

TEST(BulbReplay, HardenedRejectsDuplicateAndStale) {
  World w(Profile::hardened);
  Bulb& b = w.add_bulb("192.168.1.20", true);
  RawClient c{b, w.clock};
  c.hardened = true;
  auto hs = c.handshake();
  EXPECT_TRUE(hs.response.result->contains("signature"));
  ASSERT_EQ(c.login("alice@example.com", "S3cret-Passw0rd!").error_code, 0);
  RpcRequest off = c.outer(RpcRequest{"set_device_info", Json{{"device_on", false}}});
  EXPECT_EQ(c.call_raw(off).error_code, 0);
  EXPECT_EQ(c.call_raw(off).error_code, error_code::freshness);

  RpcRequest late = c.outer(RpcRequest{"get_device_info"});
  w.clock->advance_ms(kFreshnessWindowMs + 1);
  EXPECT_EQ(c.call_raw(late).error_code, error_code::freshness);

  RpcRequest no_seq = c.outer(RpcRequest{"get_device_info"});
  c.hardened = false;
  RpcRequest unsequenced = c.outer(RpcRequest{"get_device_info"});
  EXPECT_EQ(c.call_raw(unsequenced).error_code, error_code::freshness);
  (void)no_seq;
}

TEST(BulbExpiry, SessionsDieAfter24Hours) {
  World w;
  Bulb& b = w.add_bulb("192.168.1.20", true);
  RawClient c{b, w.clock};
  c.handshake();
  c.login("alice@example.com", "S3cret-Passw0rd!");
  RpcRequest get = c.outer(RpcRequest{"get_device_info"});
  w.clock->advance_s(kSessionTtlSeconds);
  EXPECT_EQ(c.call_raw(get).error_code, 0);
  w.clock->advance_s(1);
  EXPECT_EQ(c.call_raw(get).error_code, error_code::session_expired);
  EXPECT_EQ(c.call_raw(get).error_code, error_code::session_expired);
}

TEST(BulbHardened, ConfiguredBulbIgnoresLegacyDiscovery) {
  World w(Profile::hardened);
  Bulb& b = w.add_bulb("192.168.1.20", true);
  EXPECT_FALSE(b.handle_discovery(encode_discovery(EmptyRequest{}, Nonce{}, kDefaultChecksumSecret)));
  auto key = w.cloud->current_key(w.app->owner_id()).key;
  auto reply = b.handle_discovery(encode_discovery_v2(OwnerScanRequest{w.app->owner_id()}, Nonce{1, 1, 1, 1}, key));
  ASSERT_TRUE(reply);
  EXPECT_EQ(discovery_version(*reply), 2);
}

// --- app side ----------------------------------------------------------------

TEST(App, OwnedDiscoveryFindsOnlyOwnBulbs) {
  World w;
  w.add_bulb("192.168.1.20", true, 1);
  w.add_bulb("192.168.1.21", true, 2);
  w.add_bulb("192.168.1.22", false, 3);
  auto owned = w.app->discover(DiscoveryScope::owned);
  ASSERT_EQ(owned.size(), 2u);
  for (const auto& d : owned) {
    EXPECT_TRUE(d.matched_owner);
    EXPECT_EQ(d.body.owner, "fc2398a73dd54d6237c4fdb58fd7d753");
  }
  auto fresh = w.app->discover(DiscoveryScope::unconfigured);
  ASSERT_EQ(fresh.size(), 1u);
  EXPECT_EQ(fresh.front().source_addr, "192.168.1.22");
}

TEST(App, DiscoveryNeverCarriesCredentials) {
  World w;
  w.add_bulb("192.168.1.20", true);
  w.app->discover(DiscoveryScope::owned);
  ASSERT_FALSE(w.transport->broadcasts.empty());
  for (const auto& p : w.transport->broadcasts) {
    const std::string s = to_string(p);
    EXPECT_EQ(s.find("S3cret"), std::string::npos);
    EXPECT_EQ(s.find("alice"), std::string::npos);
  }
}

TEST(App, RepliesWithWrongNonceAreDropped) {
  World w;
  w.add_bulb("192.168.1.20", true);
  w.transport->mangle_discovery_reply = [](Bytes r) {
    auto d = decode_discovery(r, kDefaultChecksumSecret);
    d.nonce[0] ^= 1;
    return encode_discovery(d.data, d.nonce, kDefaultChecksumSecret);
  };
  EXPECT_TRUE(w.app->discover(DiscoveryScope::owned).empty());
}

TEST(App, RepliesWithBadChecksumAreDropped) {
  World w;
  w.add_bulb("192.168.1.20", true);
  w.transport->mangle_discovery_reply = [](Bytes r) {
    r.back() ^= 0x20;
    return r;
  };
  EXPECT_TRUE(w.app->discover(DiscoveryScope::owned).empty());
}

TEST(App, SessionControlAndNoIdentityChecksWhenVulnerable) {
  World w;
  Bulb& b = w.add_bulb("192.168.1.20", true);
  auto found = w.app->discover(DiscoveryScope::owned);
  ASSERT_EQ(found.size(), 1u);
  auto s = w.app->establish_session(found.front());
  EXPECT_TRUE(s.token);
  EXPECT_EQ(w.app->control(s, Json{{"brightness", 55}}).error_code, 0);
  EXPECT_EQ(b.lamp().brightness, 55);
  auto info = w.app->get_device_info(s);
  EXPECT_EQ((*info.result)["brightness"], 55);
  EXPECT_EQ(w.app->identity_checks(), 0u);
}

TEST(App, HardenedRunsIdentityChecks) {
  World w(Profile::hardened);
  w.cloud->register_account(w.app->owner_id());
  Bulb& b = w.add_bulb("192.168.1.20", true);
  auto found = w.app->discover(DiscoveryScope::owned);
  ASSERT_EQ(found.size(), 1u);
  auto s = w.app->establish_session(found.front());
  EXPECT_GT(w.app->identity_checks(), 0u);
  w.app->control(s, Json{{"device_on", false}});
  EXPECT_FALSE(b.lamp().on);
}

TEST(App, SetupNeedsWifiConfig) {
  AppConfig cfg = default_app_config();
  cfg.wifi_ssid.clear();
  World w(Profile::vulnerable, cfg);
  w.add_bulb("192.168.0.1", false);
  auto found = w.app->discover(DiscoveryScope::unconfigured);
  ASSERT_EQ(found.size(), 1u);
  auto s = w.app->establish_session(found.front(), true);
  try {
    w.app->setup_device(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::precondition);
  }
}

TEST(App, SetupBindsBulbToAccount) {
  World w;
  Bulb& b = w.add_bulb("192.168.0.1", false);
  auto s = w.app->establish_session(w.app->discover(DiscoveryScope::unconfigured).front(), true);
  EXPECT_EQ(w.app->setup_device(s).error_code, 0);
  EXPECT_EQ(b.mode(), DeviceMode::configured);
  EXPECT_EQ(b.state().owner, w.app->owner_id());
  EXPECT_EQ(w.app->discover(DiscoveryScope::owned).size(), 1u);
}

TEST(App, ExpiredSessionSurfacesAsSessionExpired) {
  World w;
  w.add_bulb("192.168.1.20", true);
  auto s = w.app->establish_session(w.app->discover(DiscoveryScope::owned).front());
  w.clock->advance_s(kSessionTtlSeconds + 1);
  try {
    w.app->get_device_info(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::session_expired);
  }
}
