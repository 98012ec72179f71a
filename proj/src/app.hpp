#pragma once

// Controller actor: discovery, TSKEP initiator, setup and local control.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bulb.hpp"
#include "clock.hpp"
#include "crypto.hpp"
#include "discovery.hpp"
#include "hardened.hpp"
#include "netlab.hpp"
#include "rpc.hpp"

namespace tapolab {

struct Datagram {
  std::string source;
  Bytes payload;
};

class AppTransport {
 public:
  virtual ~AppTransport() = default;
  /// Broadcasts payload to the discovery port and returns whatever came back
  /// within timeout_ms.
  virtual std::vector<Datagram> broadcast(const Bytes& payload, std::uint16_t port, int timeout_ms) = 0;
  /// One HTTP round-trip; nullopt when the peer is unreachable.
  virtual std::optional<std::string> http(const std::string& host, std::uint16_t port,
                                          const std::string& request) = 0;
  virtual std::string local_address() const = 0;
};

/// Transport over the virtual network, bound to one endpoint.
class NetlabTransport final : public AppTransport {
 public:
  NetlabTransport(NetLab& net, EndpointId ep) : net_(net), ep_(std::move(ep)) {}

  std::vector<Datagram> broadcast(const Bytes& payload, std::uint16_t port, int timeout_ms) override;
  std::optional<std::string> http(const std::string& host, std::uint16_t port, const std::string& request) override;
  std::string local_address() const override { return ep_.address; }

  const EndpointId& endpoint() const { return ep_; }
  void move_to(EndpointId ep) { ep_ = std::move(ep); }

 private:
  NetLab& net_;
  EndpointId ep_;
};

struct AppConfig {
  std::string tapo_email;
  std::string tapo_password;
  std::string wifi_ssid;
  std::string wifi_password;
  std::string wifi_key_type = "wpa2_psk";
  Profile profile = Profile::vulnerable;
  std::optional<RsaPublicKey> trusted_root;
  ChecksumSecret secret = kDefaultChecksumSecret;
  int rsa_bits = 1024;
  bool regenerate_keypair = false;
  int discovery_timeout_ms = 2000;
  int discovery_retries = 3;
};

enum class DiscoveryScope { owned, unconfigured };

struct DiscoveredDevice {
  DiscoveryResponseBody body;
  std::string source_addr;
  bool matched_owner = false;
};

struct AppSession {
  std::string host;
  std::uint16_t port = kHttpPort;
  std::string device_id;
  SessionCookie cookie;
  SessionKeyMaterial material;
  std::optional<AuthToken> token;
  bool setup_login = false;
  std::int64_t next_seq = 1;
};

class App {
 public:
  /// cloud is required for the hardened profile (certificates, discovery keys).
  App(AppConfig config, std::unique_ptr<AppTransport> transport, Rng rng, std::shared_ptr<const Clock> clock,
      std::shared_ptr<CloudStub> cloud);

  std::vector<DiscoveredDevice> discover(DiscoveryScope scope);
  /// Handshake plus login. setup_login selects the fixed setup credentials.
  AppSession establish_session(const DiscoveredDevice& target, bool setup_login = false);
  /// set_qs_info; throws precondition without Wi-Fi config.
  RpcResponse setup_device(AppSession& s);
  RpcResponse control(AppSession& s, const Json& delta);
  RpcResponse get_device_info(AppSession& s);
  /// Wraps, sends and unwraps one inner request. Outer error codes surface as
  /// exceptions (session_expired, freshness, protocol).
  RpcResponse call(AppSession& s, RpcRequest inner);

  const AppConfig& config() const { return config_; }
  std::string owner_id() const { return owner_id_; }
  AppTransport& transport() { return *transport_; }
  const RsaPublicKey& public_key();

  /// Inner requests exactly as serialized before encryption, in send order.
  const std::vector<Json>& sent_inner() const { return sent_inner_; }
  /// Number of peer-identity checks run (signature/certificate).
  std::size_t identity_checks() const { return identity_checks_; }

 private:
  const RsaKeyPair& keypair();
  std::string roundtrip(const std::string& host, std::uint16_t port, const RpcRequest& req);
  IvMode iv_mode() const;

  AppConfig config_;
  std::unique_ptr<AppTransport> transport_;
  Rng rng_;
  std::shared_ptr<const Clock> clock_;
  std::shared_ptr<CloudStub> cloud_;
  std::string owner_id_;
  std::optional<RsaKeyPair> keypair_;
  std::optional<RsaPublicKey> public_;
  std::vector<Json> sent_inner_;
  std::size_t identity_checks_ = 0;
};

}  // namespace tapolab
