#pragma once

// Smart-bulb actor. Transport-agnostic: it consumes raw discovery datagrams
// and raw HTTP requests and produces the bytes to send back. NetLab and the
// loopback socket server both drive the same object.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>

#include "clock.hpp"
#include "crypto.hpp"
#include "discovery.hpp"
#include "hardened.hpp"
#include "json_value.hpp"
#include "rpc.hpp"

namespace tapolab {

struct LampState {
  bool on = true;
  int brightness = 100;         // 1..100
  int hue = 0;                  // 0..359
  int saturation = 0;           // 0..100
  int color_temp_kelvin = 2700; // 2500..6500
  bool color_temp_active = true;

  Json to_json() const;
  bool operator==(const LampState&) const = default;
};

enum class DeviceMode { setup, configured };
std::string_view to_string(DeviceMode m);

struct WifiConfig {
  std::string ssid;
  std::string password;
  std::string key_type = "wpa2_psk";
  bool operator==(const WifiConfig&) const = default;
};

struct BulbConfig {
  std::string device_id;  // 32 lowercase hex
  std::string ip;
  std::string mac;
  Profile profile = Profile::vulnerable;
  ChecksumSecret secret = kDefaultChecksumSecret;
  std::uint16_t http_port = kHttpPort;
};

struct SessionContext {
  SessionCookie cookie;
  SessionKeyMaterial material;
  bool authenticated = false;
  bool setup_login = false;
  std::optional<AuthToken> token;
  FreshnessState freshness;
};

struct DeviceState {
  std::string device_id;
  DeviceMode mode = DeviceMode::setup;
  std::optional<std::string> owner;
  std::optional<LoginCredentials> stored_credentials;
  std::optional<WifiConfig> wifi;
  LampState lamp;
  Profile profile = Profile::vulnerable;
  std::size_t sessions = 0;

  Json to_json() const;
};

class Bulb {
 public:
  using SetupCallback = std::function<void(const WifiConfig&)>;

  /// cloud may be null for the vulnerable profile; hardened bulbs fetch their
  /// factory identity from it.
  Bulb(BulbConfig config, Rng rng, std::shared_ptr<const Clock> clock, std::shared_ptr<CloudStub> cloud);

  /// Pre-provisions a configured bulb (as if setup had happened earlier).
  void provision(std::string_view email, std::string_view password, const WifiConfig& wifi);

  /// Response datagram, or nullopt when the request must be ignored.
  std::optional<Bytes> handle_discovery(ByteView raw);
  /// Full HTTP/1.1 response for one request; never throws.
  std::string handle_http(std::string_view raw);

  DeviceState state() const;
  LampState lamp() const;
  DeviceMode mode() const;
  const BulbConfig& config() const { return config_; }
  void set_ip(std::string ip);
  void set_http_port(std::uint16_t port);

  /// Fired after set_qs_info succeeds, outside the bulb's lock.
  void on_setup_complete(SetupCallback cb) { on_setup_ = std::move(cb); }

 private:
  struct Outcome {
    RpcResponse response;
    std::optional<SessionCookie> set_cookie;
    std::optional<WifiConfig> completed_setup;
  };

  DiscoveryResponseBody discovery_body_locked() const;
  Outcome handle_request_locked(const RpcRequest& req);
  Outcome handshake_locked(const RpcRequest& req);
  Outcome passthrough_locked(const RpcRequest& req);
  RpcResponse dispatch_inner_locked(SessionContext& s, const RpcRequest& inner,
                                    std::optional<WifiConfig>* completed);
  RpcResponse login_locked(SessionContext& s, const RpcRequest& inner);
  RpcResponse set_qs_info_locked(const RpcRequest& inner, std::optional<WifiConfig>* completed);
  RpcResponse set_device_info_locked(const RpcRequest& inner);
  RpcResponse get_device_info_locked() const;
  IvMode iv_mode() const;

  mutable std::mutex mu_;
  BulbConfig config_;
  Rng rng_;
  std::shared_ptr<const Clock> clock_;
  std::shared_ptr<CloudStub> cloud_;
  std::optional<DeviceIdentity> identity_;
  CredentialIssuer issuer_;
  DeviceMode mode_ = DeviceMode::setup;
  std::optional<std::string> owner_;
  std::optional<LoginCredentials> stored_;
  std::optional<WifiConfig> wifi_;
  LampState lamp_;
  std::map<std::string, SessionContext> sessions_;
  std::set<std::string> expired_;
  SetupCallback on_setup_;
};

}  // namespace tapolab
