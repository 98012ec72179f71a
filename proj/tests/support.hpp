#pragma once

// Wiring for bulb/app tests that do not need the virtual network: the
// transport hands requests straight to bulb objects.

#include <functional>
#include <map>
#include <memory>

#include "app.hpp"
#include "bulb.hpp"
#include "lab.hpp"

namespace testkit {

using namespace tapolab;

class DirectTransport final : public AppTransport {
 public:
  std::map<std::string, Bulb*> bulbs;  // by ip
  std::function<Bytes(Bytes)> mangle_discovery_reply;
  std::vector<Bytes> broadcasts;
  std::vector<std::string> requests;

  std::vector<Datagram> broadcast(const Bytes& payload, std::uint16_t, int) override {
    broadcasts.push_back(payload);
    std::vector<Datagram> out;
    for (auto& [ip, b] : bulbs) {
      if (auto r = b->handle_discovery(payload)) {
        out.push_back(Datagram{ip, mangle_discovery_reply ? mangle_discovery_reply(*r) : *r});
      }
    }
    return out;
  }
  std::optional<std::string> http(const std::string& host, std::uint16_t, const std::string& request) override {
    requests.push_back(request);
    auto it = bulbs.find(host);
    if (it == bulbs.end()) return std::nullopt;
    return it->second->handle_http(request);
  }
  std::string local_address() const override { return "10.0.0.2"; }
};

struct World {
  std::shared_ptr<VirtualClock> clock = std::make_shared<VirtualClock>();
  std::shared_ptr<CloudStub> cloud;
  std::vector<std::unique_ptr<Bulb>> bulbs;
  DirectTransport* transport = nullptr;
  std::unique_ptr<App> app;
  Profile profile;

  explicit World(Profile p = Profile::vulnerable, AppConfig cfg = default_app_config()) : profile(p) {
    if (p == Profile::hardened) cloud = std::make_shared<CloudStub>(Rng(77), clock);
    cfg.profile = p;
    auto t = std::make_unique<DirectTransport>();
    transport = t.get();
    app = std::make_unique<App>(cfg, std::move(t), Rng(3), clock, cloud);
  }

  Bulb& add_bulb(const std::string& ip, bool owned, std::uint64_t seed = 1) {
    BulbConfig c;
    c.device_id = to_hex(Rng(seed).bytes(16));
    c.ip = ip;
    c.mac = "3C-00-00-00-00-0" + std::to_string(bulbs.size());
    c.profile = profile;
    bulbs.push_back(std::make_unique<Bulb>(c, Rng(seed + 100), clock, cloud));
    Bulb& b = *bulbs.back();
    if (owned) {
      const auto& ac = app->config();
      b.provision(ac.tapo_email, ac.tapo_password, WifiConfig{ac.wifi_ssid, ac.wifi_password, "wpa2_psk"});
    }
    transport->bulbs[ip] = &b;
    return b;
  }
};

}  // namespace testkit
