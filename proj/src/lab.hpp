#pragma once

// A lab world: one virtual clock, one NetLab, the cloud stub, and the named
// actors (bulbs, apps, attackers) living on it.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "app.hpp"
#include "bulb.hpp"
#include "hardened.hpp"
#include "netlab.hpp"

namespace tapolab {

struct LabOptions {
  std::uint64_t seed = 1;
  Profile profile = Profile::vulnerable;
  int rsa_bits = 1024;
  ChecksumSecret secret = kDefaultChecksumSecret;
};

/// Secret drawn from the seed inside the low keyspace_bits of the 32-bit space.
ChecksumSecret planted_secret(std::uint64_t seed, int keyspace_bits);

/// Victim account and home Wi-Fi used by the canonical setups.
AppConfig default_app_config();

class Lab {
 public:
  explicit Lab(LabOptions opts);
  Lab(const Lab&) = delete;
  Lab& operator=(const Lab&) = delete;

  void add_network(const std::string& id, bool open = false, const std::string& ssid = {});
  void grant_attacker(const std::string& network, const std::string& attacker);

  /// owner_app: name of an app whose account the bulb is already bound to.
  Bulb& add_bulb(const std::string& name, const std::string& network, const std::string& address,
                 const std::optional<std::string>& owner_app = std::nullopt);
  App& add_app(const std::string& name, const std::string& network, const std::string& address, AppConfig config);
  /// Attackers may be called repeatedly to place endpoints on several networks.
  void add_attacker(const std::string& name, const std::string& network, const std::string& address);

  bool has_actor(const std::string& name) const;
  Bulb& bulb(const std::string& name);
  App& app(const std::string& name);
  /// Network the actor is currently attached to (first one for attackers).
  std::string network_of(const std::string& name) const;
  std::string address_of(const std::string& name, const std::string& network) const;
  EndpointId attacker_endpoint(const std::string& name, const std::string& network) const;
  std::vector<EndpointId> attacker_endpoints(const std::string& name) const;

  /// Deauthentication primitive.
  void disconnect(const std::string& actor, const std::string& network);
  void attach(const std::string& actor, const std::string& network, const std::string& address = {});

  NetLab& net() { return *net_; }
  VirtualClock& clock() { return *clock_; }
  std::shared_ptr<CloudStub> cloud() { return cloud_; }
  Profile profile() const { return opts_.profile; }
  const LabOptions& options() const { return opts_; }
  Rng rng(const std::string& label) const { return root_rng_.fork(label); }

  /// Session of an app opened by script steps.
  std::map<std::string, AppSession>& sessions() { return sessions_; }

 private:
  struct BulbActor {
    std::unique_ptr<Bulb> bulb;
    std::optional<EndpointId> ep;
    std::string address;
  };
  struct AppActor {
    std::unique_ptr<App> app;
    NetlabTransport* transport = nullptr;
    bool attached = true;
  };
  struct AttackerActor {
    std::vector<EndpointId> eps;
  };

  void attach_bulb(const std::string& name, BulbActor& actor, const std::string& network);
  void finish_setup(const std::string& name, const WifiConfig& wifi);

  LabOptions opts_;
  Rng root_rng_;
  std::shared_ptr<VirtualClock> clock_;
  std::unique_ptr<NetLab> net_;
  std::shared_ptr<CloudStub> cloud_;
  std::map<std::string, std::string> ssids_;  // ssid -> network
  std::map<std::string, BulbActor> bulbs_;
  std::map<std::string, AppActor> apps_;
  std::map<std::string, AttackerActor> attackers_;
  std::map<std::string, AppSession> sessions_;
};

}  // namespace tapolab
