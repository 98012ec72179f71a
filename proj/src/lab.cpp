#include "lab.hpp"

#include "error.hpp"

namespace tapolab {

ChecksumSecret planted_secret(std::uint64_t seed, int keyspace_bits) {
  if (keyspace_bits < 1 || keyspace_bits > 32) throw Error(ErrorKind::argument, "keyspace_bits must be 1..32");
  Rng r = Rng(seed).fork("planted-secret");
  std::uint64_t mask = (std::uint64_t{1} << keyspace_bits) - 1;
  return ChecksumSecret::from_u32(static_cast<std::uint32_t>(r.next_u64() & mask));
}

AppConfig default_app_config() {
  AppConfig c;
  c.tapo_email = "alice@example.com";
  c.tapo_password = "S3cret-Passw0rd!";
  c.wifi_ssid = "HomeNet";
  c.wifi_password = "correct horse battery staple";
  return c;
}

Lab::Lab(LabOptions opts)
    : opts_(opts),
      root_rng_(opts.seed),
      clock_(std::make_shared<VirtualClock>()),
      net_(std::make_unique<NetLab>(clock_)) {
  if (opts_.profile == Profile::hardened) {
    cloud_ = std::make_shared<CloudStub>(root_rng_.fork("cloud"), clock_, opts_.rsa_bits);
  }
}

void Lab::add_network(const std::string& id, bool open, const std::string& ssid) {
  net_->add_network(id, open);
  ssids_[ssid.empty() ? id : ssid] = id;
}

void Lab::grant_attacker(const std::string& network, const std::string& attacker) {
  net_->grant_control(network, attacker);
}

bool Lab::has_actor(const std::string& name) const {
  return bulbs_.contains(name) || apps_.contains(name) || attackers_.contains(name);
}

void Lab::attach_bulb(const std::string& name, BulbActor& actor, const std::string& network) {
  EndpointId ep{network, actor.address};
  net_->attach(ep, name);
  Bulb* bulb = actor.bulb.get();
  NetLab* net = net_.get();
  net_->bind_udp(ep, kDiscoveryPort, [bulb, net, ep](const Frame& f) {
    if (auto reply = bulb->handle_discovery(f.payload)) {
      net->send(Frame{ep.network, ep.address, kDiscoveryPort, f.src, f.src_port, Transport::udp, *reply, 0});
    }
  });
  net_->bind_tcp(ep, bulb->config().http_port,
                 [bulb](const Frame& f) { return to_bytes(bulb->handle_http(to_string(f.payload))); });
  actor.ep = ep;
}

Bulb& Lab::add_bulb(const std::string& name, const std::string& network, const std::string& address,
                    const std::optional<std::string>& owner_app) {
  if (has_actor(name)) throw Error(ErrorKind::argument, "duplicate actor '" + name + "'");
  Rng id_rng = rng("device-id/" + name);
  BulbConfig cfg;
  cfg.device_id = to_hex(id_rng.bytes(16));
  Bytes mac = id_rng.bytes(6);
  mac[0] = 0x3C;  // locally stable, looks vendor-ish
  for (std::size_t i = 0; i < mac.size(); ++i) {
    if (i) cfg.mac += '-';
    cfg.mac += to_upper_hex(ByteView(&mac[i], 1));
  }
  cfg.ip = address;
  cfg.profile = opts_.profile;
  cfg.secret = opts_.secret;

  BulbActor actor;
  actor.address = address;
  actor.bulb = std::make_unique<Bulb>(cfg, rng("bulb/" + name), clock_, cloud_);
  if (owner_app) {
    const App& owner = app(*owner_app);
    const auto& c = owner.config();
    actor.bulb->provision(c.tapo_email, c.tapo_password, WifiConfig{c.wifi_ssid, c.wifi_password, c.wifi_key_type});
  }
  actor.bulb->on_setup_complete([this, name](const WifiConfig& wifi) {
    net_->defer([this, name, wifi] { finish_setup(name, wifi); });
  });
  auto& slot = bulbs_[name] = std::move(actor);
  attach_bulb(name, slot, network);
  return *slot.bulb;
}

void Lab::finish_setup(const std::string& name, const WifiConfig& wifi) {
  auto& actor = bulbs_.at(name);
  if (actor.ep) {
    // The bulb drops its own access point and joins the configured network.
    if (net_->is_open(actor.ep->network)) net_->set_open(actor.ep->network, false);
    net_->disconnect(*actor.ep);
    actor.ep.reset();
  }
  auto it = ssids_.find(wifi.ssid);
  if (it != ssids_.end()) attach_bulb(name, actor, it->second);
}

App& Lab::add_app(const std::string& name, const std::string& network, const std::string& address,
                  AppConfig config) {
  if (has_actor(name)) throw Error(ErrorKind::argument, "duplicate actor '" + name + "'");
  config.profile = opts_.profile;
  config.secret = opts_.secret;
  config.rsa_bits = opts_.rsa_bits;
  EndpointId ep{network, address};
  net_->attach(ep, name);
  auto transport = std::make_unique<NetlabTransport>(*net_, ep);
  AppActor actor;
  actor.transport = transport.get();
  actor.app = std::make_unique<App>(std::move(config), std::move(transport), rng("app/" + name), clock_, cloud_);
  return *(apps_[name] = std::move(actor)).app;
}

void Lab::add_attacker(const std::string& name, const std::string& network, const std::string& address) {
  if (bulbs_.contains(name) || apps_.contains(name)) throw Error(ErrorKind::argument, "duplicate actor '" + name + "'");
  EndpointId ep{network, address};
  net_->attach(ep, name);
  attackers_[name].eps.push_back(ep);
}

Bulb& Lab::bulb(const std::string& name) {
  auto it = bulbs_.find(name);
  if (it == bulbs_.end()) throw Error(ErrorKind::argument, "no bulb named '" + name + "'");
  return *it->second.bulb;
}

App& Lab::app(const std::string& name) {
  auto it = apps_.find(name);
  if (it == apps_.end()) throw Error(ErrorKind::argument, "no app named '" + name + "'");
  return *it->second.app;
}

std::string Lab::network_of(const std::string& name) const {
  if (auto b = bulbs_.find(name); b != bulbs_.end()) return b->second.ep ? b->second.ep->network : std::string{};
  if (auto a = apps_.find(name); a != apps_.end()) return a->second.transport->endpoint().network;
  if (auto x = attackers_.find(name); x != attackers_.end() && !x->second.eps.empty()) {
    return x->second.eps.front().network;
  }
  throw Error(ErrorKind::argument, "no actor named '" + name + "'");
}

std::string Lab::address_of(const std::string& name, const std::string& network) const {
  if (auto b = bulbs_.find(name); b != bulbs_.end()) return b->second.address;
  if (auto a = apps_.find(name); a != apps_.end()) return a->second.transport->endpoint().address;
  return attacker_endpoint(name, network).address;
}

EndpointId Lab::attacker_endpoint(const std::string& name, const std::string& network) const {
  auto it = attackers_.find(name);
  if (it == attackers_.end()) throw Error(ErrorKind::argument, "no attacker named '" + name + "'");
  for (const auto& ep : it->second.eps) {
    if (network.empty() || ep.network == network) return ep;
  }
  throw Error(ErrorKind::argument, "attacker '" + name + "' has no endpoint on '" + network + "'");
}

std::vector<EndpointId> Lab::attacker_endpoints(const std::string& name) const {
  auto it = attackers_.find(name);
  if (it == attackers_.end()) throw Error(ErrorKind::argument, "no attacker named '" + name + "'");
  return it->second.eps;
}

void Lab::disconnect(const std::string& actor, const std::string& network) {
  if (auto b = bulbs_.find(actor); b != bulbs_.end()) {
    if (b->second.ep && b->second.ep->network == network) net_->disconnect(*b->second.ep);
    return;
  }
  if (auto a = apps_.find(actor); a != apps_.end()) {
    if (a->second.transport->endpoint().network == network) net_->disconnect(a->second.transport->endpoint());
    return;
  }
  net_->disconnect(attacker_endpoint(actor, network));
}

void Lab::attach(const std::string& actor, const std::string& network, const std::string& address) {
  if (auto b = bulbs_.find(actor); b != bulbs_.end()) {
    if (b->second.ep && net_->attached(*b->second.ep)) net_->disconnect(*b->second.ep);
    if (!address.empty()) {
      b->second.address = address;
      b->second.bulb->set_ip(address);
    }
    attach_bulb(actor, b->second, network);
    return;
  }
  if (auto a = apps_.find(actor); a != apps_.end()) {
    auto& t = *a->second.transport;
    if (net_->attached(t.endpoint())) net_->disconnect(t.endpoint());
    EndpointId ep{network, address.empty() ? t.endpoint().address : address};
    net_->attach(ep, actor);
    t.move_to(ep);
    return;
  }
  auto it = attackers_.find(actor);
  if (it == attackers_.end()) throw Error(ErrorKind::argument, "no actor named '" + actor + "'");
  for (const auto& ep : it->second.eps) {
    if (ep.network == network) {
      net_->attach(EndpointId{network, address.empty() ? ep.address : address}, actor);
      return;
    }
  }
  if (address.empty()) throw Error(ErrorKind::argument, "attach of '" + actor + "' to " + network + " needs an address");
  add_attacker(actor, network, address);
}

}  // namespace tapolab
