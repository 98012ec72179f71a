#include <gtest/gtest.h>

#include "lab.hpp"
#include "sockets.hpp"

using namespace tapolab;

namespace {

std::unique_ptr<Bulb> make_bulb(std::shared_ptr<const Clock> clock, bool owned) {
  BulbConfig c;
  c.device_id = std::string(32, 'a');
  c.ip = "127.0.0.1";
  c.mac = "3C-00-00-00-00-01";
  auto b = std::make_unique<Bulb>(c, Rng(5), clock, nullptr);
  if (owned) {
    auto ac = default_app_config();
    b->provision(ac.tapo_email, ac.tapo_password, WifiConfig{ac.wifi_ssid, ac.wifi_password, "wpa2_psk"});
  }
  return b;
}

}  // namespace

TEST(Sockets, DiscoveryAndControlOverLoopback) {
  auto clock = std::make_shared<SystemClock>();
  auto bulb = make_bulb(clock, true);
  BulbServer server(*bulb, SocketEndpoints{});
  server.start();
  ASSERT_NE(server.udp_port(), 0);
  ASSERT_NE(server.tcp_port(), 0);
  bulb->set_http_port(server.tcp_port());

  AppConfig cfg = default_app_config();
  cfg.discovery_timeout_ms = 1000;
  cfg.discovery_retries = 1;
  App app(cfg, std::make_unique<SocketTransport>("127.0.0.1", server.udp_port()), Rng(6), clock, nullptr);
  auto found = app.discover(DiscoveryScope::owned);
  ASSERT_EQ(found.size(), 1u);
  EXPECT_EQ(found.front().body.http_port, server.tcp_port());
  auto s = app.establish_session(found.front());
  app.control(s, Json{{"device_on", false}, {"brightness", 12}});
  EXPECT_FALSE(bulb->lamp().on);
  EXPECT_EQ(bulb->lamp().brightness, 12);
  server.stop();
  EXPECT_FALSE(server.running());
}

TEST(Sockets, SilentBulbMeansEmptyDiscovery) {
  auto clock = std::make_shared<SystemClock>();
  auto bulb = make_bulb(clock, true);
  BulbServer server(*bulb, SocketEndpoints{});
  server.start();
  SocketTransport t("127.0.0.1", server.udp_port());
  // Wrong secret: the bulb drops it and the wait times out.
  Bytes req = encode_discovery(EmptyRequest{}, Nonce{}, ChecksumSecret::from_u32(42));
  EXPECT_TRUE(t.broadcast(req, kDiscoveryPort, 200).empty());
}

TEST(Sockets, HttpToClosedPortIsUnreachable) {
  std::uint16_t port;
  {
    auto clock = std::make_shared<SystemClock>();
    auto bulb = make_bulb(clock, true);
    BulbServer server(*bulb, SocketEndpoints{});
    port = server.tcp_port();
  }
  SocketTransport t("127.0.0.1", 1);
  EXPECT_FALSE(t.http("127.0.0.1", port, build_http_request(RpcRequest{"handshake"}, "127.0.0.1")));
}

TEST(Sockets, MalformedHttpGetsAnErrorResponse) {
  auto clock = std::make_shared<SystemClock>();
  auto bulb = make_bulb(clock, true);
  BulbServer server(*bulb, SocketEndpoints{});
  server.start();
  SocketTransport t("127.0.0.1", server.udp_port());
  std::string bad = "POST /app HTTP/1.1\r\nContent-Length: 5\r\n\r\nnope!";
  auto reply = t.http("127.0.0.1", server.tcp_port(), bad);
  ASSERT_TRUE(reply);
  EXPECT_EQ(parse_http_response(*reply).response.error_code, error_code::format);
}
