#include <gtest/gtest.h>

#include "netlab.hpp"

using namespace tapolab;

namespace {

struct Net {
  std::shared_ptr<VirtualClock> clock = std::make_shared<VirtualClock>();
  NetLab lab{clock};
  std::map<std::string, std::vector<Bytes>> inbox;

  Net() {
    lab.add_network("home");
    for (const char* a : {"10.0.0.1", "10.0.0.2", "10.0.0.3"}) add("home", a);
  }
  void add(const std::string& net, const std::string& addr, std::string owner = {}) {
    EndpointId ep{net, addr};
    lab.attach(ep, owner.empty() ? addr : owner);
    lab.bind_udp(ep, 7, [this, addr](const Frame& f) { inbox[addr].push_back(f.payload); });
  }
  std::size_t bcast(const std::string& from, Bytes p = {1, 2, 3}) {
    return lab.send(Frame{"home", from, 5000, std::string(kBroadcastAddress), 7, Transport::udp, std::move(p), 0});
  }
  void check_conservation() const {
    const auto& s = lab.stats();
    EXPECT_EQ(s.delivered + s.dropped, s.fan_out);
  }
};

}  // namespace

TEST(NetLab, BroadcastReachesEveryoneButSender) {
  Net n;
  EXPECT_EQ(n.bcast("10.0.0.1"), 2u);
  EXPECT_TRUE(n.inbox["10.0.0.1"].empty());
  EXPECT_EQ(n.inbox["10.0.0.2"].size(), 1u);
  EXPECT_EQ(n.inbox["10.0.0.3"].size(), 1u);
  n.check_conservation();
}

TEST(NetLab, UnicastAndUnknownDestination) {
  Net n;
  EXPECT_EQ(n.lab.send(Frame{"home", "10.0.0.1", 1, "10.0.0.3", 7, Transport::udp, {9}, 0}), 1u);
  EXPECT_EQ(n.lab.send(Frame{"home", "10.0.0.1", 1, "10.0.0.99", 7, Transport::udp, {9}, 0}), 0u);
  EXPECT_EQ(n.inbox["10.0.0.3"], std::vector<Bytes>{Bytes{9}});
  EXPECT_EQ(n.lab.stats().dropped, 1u);
  n.check_conservation();
}

TEST(NetLab, AttachErrors) {
  Net n;
  EXPECT_THROW(n.lab.attach({"home", "10.0.0.1"}, "x"), Error);
  EXPECT_THROW(n.lab.attach({"nowhere", "10.0.0.1"}, "x"), Error);
}

TEST(NetLab, DisconnectIsIdempotentAndReattachRestores) {
  Net n;
  n.lab.disconnect({"home", "10.0.0.3"});
  n.lab.disconnect({"home", "10.0.0.3"});
  EXPECT_FALSE(n.lab.attached({"home", "10.0.0.3"}));
  EXPECT_EQ(n.bcast("10.0.0.1"), 1u);
  EXPECT_TRUE(n.inbox["10.0.0.3"].empty());
  EXPECT_THROW(n.bcast("10.0.0.3"), Error);

  n.lab.attach({"home", "10.0.0.3"}, "10.0.0.3");
  EXPECT_EQ(n.bcast("10.0.0.1"), 2u);
  EXPECT_EQ(n.inbox["10.0.0.3"].size(), 1u);  // binding survived
  n.check_conservation();
}

TEST(NetLab, TapsNeedControlAndPresence) {
  Net n;
  TapRule r;
  r.owner = "eve";
  EXPECT_THROW(n.lab.install_tap("home", r), Error);
  n.lab.grant_control("home", "eve");
  EXPECT_THROW(n.lab.install_tap("home", r), Error);  // not attached yet
  n.add("home", "10.0.0.66", "eve");
  EXPECT_NO_THROW(n.lab.install_tap("home", r));
}

TEST(NetLab, DropModifyInject) {
  Net n;
  n.add("home", "10.0.0.66", "eve");
  n.lab.grant_control("home", "eve");

  TapRule drop;
  drop.owner = "eve";
  drop.action = TapAction::drop;
  drop.match = [](const Frame& f) { return f.dst == "10.0.0.2"; };
  auto id = n.lab.install_tap("home", drop);
  EXPECT_EQ(n.lab.send(Frame{"home", "10.0.0.1", 1, "10.0.0.2", 7, Transport::udp, {1}, 0}), 0u);
  EXPECT_TRUE(n.inbox["10.0.0.2"].empty());
  n.lab.remove_tap(id);

  TapRule mod;
  mod.owner = "eve";
  mod.action = TapAction::modify;
  mod.transform = [](const Frame& f) {
    Bytes p = f.payload;
    p.push_back(0xFF);
    return p;
  };
  id = n.lab.install_tap("home", mod);
  n.lab.send(Frame{"home", "10.0.0.1", 1, "10.0.0.2", 7, Transport::udp, {1}, 0});
  EXPECT_EQ(n.inbox["10.0.0.2"].back(), (Bytes{1, 0xFF}));
  EXPECT_EQ(n.lab.stats().modified, 1u);
  n.lab.remove_tap(id);

  n.lab.bind_tcp({"home", "10.0.0.2"}, 80, [](const Frame&) { return Bytes{'o', 'k'}; });
  EXPECT_EQ(*n.lab.exchange(Frame{"home", "10.0.0.1", 4000, "10.0.0.2", 80, Transport::tcp, {}, 0}), (Bytes{'o', 'k'}));
  TapRule inj;
  inj.owner = "eve";
  inj.action = TapAction::inject;
  inj.match = [](const Frame& f) { return f.transport == Transport::tcp && f.dst_port == 80; };
  inj.responder = [](const Frame&) { return std::optional<Bytes>(Bytes{'e', 'v', 'e'}); };
  n.lab.install_tap("home", inj);
  EXPECT_EQ(*n.lab.exchange(Frame{"home", "10.0.0.1", 4000, "10.0.0.2", 80, Transport::tcp, {}, 0}),
            (Bytes{'e', 'v', 'e'}));
  n.check_conservation();
}

TEST(NetLab, BridgeRelaysBothWaysAndTearsDown) {
  auto clock = std::make_shared<VirtualClock>();
  NetLab lab(clock);
  lab.add_network("a");
  lab.add_network("b", true);
  lab.attach({"a", "192.168.0.1"}, "bulb");
  lab.attach({"b", "10.1.0.2"}, "phone");
  lab.attach({"a", "192.168.0.66"}, "eve");
  lab.attach({"b", "10.1.0.1"}, "eve");

  int bulb_seen = 0;
  lab.bind_udp({"a", "192.168.0.1"}, 20002, [&](const Frame& f) {
    ++bulb_seen;
    lab.send(Frame{"a", "192.168.0.1", 20002, f.src, f.src_port, Transport::udp, {'r'}, 0});
  });
  std::vector<Bytes> phone_got;
  lab.bind_udp({"b", "10.1.0.2"}, 5555, [&](const Frame& f) { phone_got.push_back(f.payload); });

  auto h = lab.bridge("eve", {"a", "192.168.0.66"}, {"b", "10.1.0.1"}, 20002,
                      [](const Frame& f) { return !f.payload.empty() && f.payload[0] == 'q'; });
  lab.send(Frame{"b", "10.1.0.2", 5555, std::string(kBroadcastAddress), 20002, Transport::udp, {'q'}, 0});
  EXPECT_EQ(bulb_seen, 1);
  EXPECT_EQ(phone_got, std::vector<Bytes>{Bytes{'r'}});
  EXPECT_EQ(h->relayed(), 2u);

  lab.send(Frame{"b", "10.1.0.2", 5555, std::string(kBroadcastAddress), 20002, Transport::udp, {'x'}, 0});
  EXPECT_EQ(bulb_seen, 1);  // filtered

  h->teardown();
  lab.send(Frame{"b", "10.1.0.2", 5555, std::string(kBroadcastAddress), 20002, Transport::udp, {'q'}, 0});
  EXPECT_EQ(bulb_seen, 1);
  EXPECT_FALSE(h->active());

  // Capture holds both legs of the first relay.
  int on_a = 0, on_b = 0;
  for (const auto& r : lab.capture()) {
    if (r.direction != Direction::sent) continue;
    (r.frame.network == "a" ? on_a : on_b)++;
  }
  EXPECT_GE(on_a, 2);
  EXPECT_GE(on_b, 2);
  EXPECT_EQ(lab.stats().delivered + lab.stats().dropped, lab.stats().fan_out);
}

TEST(NetLab, BridgeNeedsBothSides) {
  auto clock = std::make_shared<VirtualClock>();
  NetLab lab(clock);
  lab.add_network("a");
  lab.add_network("b");
  lab.attach({"a", "1"}, "eve");
  lab.attach({"b", "2"}, "mallory");
  EXPECT_THROW(lab.bridge("eve", {"a", "1"}, {"b", "2"}, 20002, nullptr), Error);
}

TEST(NetLab, ClockIsMonotonicAndAdditive) {
  VirtualClock c;
  const auto t0 = c.now_ms();
  EXPECT_EQ(c.advance_ms(0), t0);
  c.advance_ms(1500);
  c.advance_s(2);
  EXPECT_EQ(c.now_ms(), t0 + 3500);
  EXPECT_THROW(c.advance_ms(-1), Error);
  EXPECT_EQ(c.now_ms(), t0 + 3500);
}

TEST(NetLab, DeferRunsAfterOutermostSend) {
  Net n;
  std::vector<std::string> order;
  n.lab.bind_udp({"home", "10.0.0.2"}, 9, [&](const Frame&) {
    n.lab.defer([&] { order.push_back("deferred"); });
    order.push_back("handler");
  });
  n.lab.send(Frame{"home", "10.0.0.1", 1, "10.0.0.2", 9, Transport::udp, {}, 0});
  order.push_back("after");
  EXPECT_EQ(order, (std::vector<std::string>{"handler", "deferred", "after"}));
}

TEST(NetLab, CaptureJsonlRoundTrips) {
  Net n;
  n.bcast("10.0.0.1", Bytes{0, 1, 2, 250});
  n.lab.send(Frame{"home", "10.0.0.2", 1, "10.0.0.9", 7, Transport::udp, {}, 0});
  const std::string text = n.lab.capture_jsonl();
  auto back = parse_jsonl(text);
  ASSERT_EQ(back.size(), n.lab.capture().size());
  EXPECT_EQ(to_jsonl(back), text);
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(back[i].seq, n.lab.capture()[i].seq);
  EXPECT_THROW(parse_jsonl("{not json}\n"), Error);
}

TEST(NetLab, CaptureTimestampsFollowTheClock) {
  Net n;
  n.bcast("10.0.0.1");
  n.clock->advance_s(10);
  n.bcast("10.0.0.1");
  const auto& cap = n.lab.capture();
  EXPECT_EQ(cap.back().frame.timestamp_ms - cap.front().frame.timestamp_ms, 10000);
}
