#include "app.hpp"

#include <algorithm>
#include <set>

#include "error.hpp"

namespace tapolab {

// --- netlab transport -------------------------------------------------------------

std::vector<Datagram> NetlabTransport::broadcast(const Bytes& payload, std::uint16_t port, int timeout_ms) {
  std::vector<Datagram> got;
  const std::uint16_t local = net_.ephemeral_port();
  net_.bind_udp(ep_, local, [&got](const Frame& f) { got.push_back(Datagram{f.src, f.payload}); });
  try {
    net_.send(Frame{ep_.network, ep_.address, local, std::string(kBroadcastAddress), port, Transport::udp, payload, 0});
  } catch (...) {
    net_.unbind_udp(ep_, local);
    throw;
  }
  net_.unbind_udp(ep_, local);
  // Delivery is synchronous, so an empty result means the wait ran out.
  if (got.empty()) net_.clock().advance_ms(timeout_ms);
  return got;
}

std::optional<std::string> NetlabTransport::http(const std::string& host, std::uint16_t port,
                                                 const std::string& request) {
  auto reply = net_.exchange(
      Frame{ep_.network, ep_.address, net_.ephemeral_port(), host, port, Transport::tcp, to_bytes(request), 0});
  if (!reply) return std::nullopt;
  return to_string(*reply);
}

// --- app ------------------------------------------------------------------------------

App::App(AppConfig config, std::unique_ptr<AppTransport> transport, Rng rng, std::shared_ptr<const Clock> clock,
         std::shared_ptr<CloudStub> cloud)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      rng_(std::move(rng)),
      clock_(std::move(clock)),
      cloud_(std::move(cloud)),
      owner_id_(owner_id_for_email(config_.tapo_email)) {
  if (!transport_ || !clock_) throw Error(ErrorKind::argument, "app needs a transport and a clock");
  if (config_.profile == Profile::hardened) {
    if (!cloud_) throw Error(ErrorKind::argument, "hardened app needs the cloud stub");
    if (!config_.trusted_root) config_.trusted_root = cloud_->root();
    cloud_->register_account(owner_id_);
  }
}

IvMode App::iv_mode() const {
  return config_.profile == Profile::hardened ? IvMode::dynamic_iv : IvMode::static_iv;
}

const RsaKeyPair& App::keypair() {
  if (!keypair_) {
    keypair_ = RsaKeyPair::generate(rng_, config_.rsa_bits);
    public_ = keypair_->public_key();
  }
  return *keypair_;
}

const RsaPublicKey& App::public_key() {
  if (!public_) keypair();
  return *public_;
}

std::vector<DiscoveredDevice> App::discover(DiscoveryScope scope) {
  const bool tagged = config_.profile == Profile::hardened && scope == DiscoveryScope::owned;
  const Nonce nonce = rng_.array<4>();
  DiscoveryData request = EmptyRequest{};
  if (scope == DiscoveryScope::owned) request = OwnerScanRequest{owner_id_};

  Bytes payload = tagged ? encode_discovery_v2(request, nonce, cloud_->current_key(owner_id_).key)
                         : encode_discovery(request, nonce, config_.secret);

  std::vector<DiscoveredDevice> out;
  for (int attempt = 0; attempt < std::max(1, config_.discovery_retries) && out.empty(); ++attempt) {
    std::set<std::string> seen;
    for (auto& d : transport_->broadcast(payload, kDiscoveryPort, config_.discovery_timeout_ms)) {
      std::optional<DecodedDiscovery> decoded;
      try {
        if (tagged) {
          auto keys = cloud_->valid_keys_for_account(owner_id_);
          decoded = decode_discovery_v2(d.payload, keys);
        } else {
          decoded = decode_discovery(d.payload, config_.secret);
        }
      } catch (const Error&) {
        continue;
      }
      if (decoded->nonce != nonce) continue;
      auto* body = std::get_if<DiscoveryResponseBody>(&decoded->data);
      if (!body) continue;
      bool matched = body->owner == owner_id_;
      if (scope == DiscoveryScope::owned && !matched) continue;
      if (scope == DiscoveryScope::unconfigured && !body->factory_default) continue;
      if (!seen.insert(body->device_id).second) continue;
      out.push_back(DiscoveredDevice{*body, d.source, matched});
    }
  }
  return out;
}

std::string App::roundtrip(const std::string& host, std::uint16_t port, const RpcRequest& req) {
  auto raw = transport_->http(host, port, build_http_request(req, host, port));
  if (!raw) throw Error(ErrorKind::network, "no HTTP response from " + host + ":" + std::to_string(port));
  return *raw;
}

AppSession App::establish_session(const DiscoveredDevice& target, bool setup_login) {
  AppSession s;
  s.host = target.body.ip;
  s.port = target.body.http_port;
  s.device_id = target.body.device_id;
  s.setup_login = setup_login;
  if (config_.regenerate_keypair) {
    keypair_.reset();
    public_.reset();
  }

  RpcRequest hs;
  hs.method = "handshake";
  hs.params = Json{{"key", public_key().pem()}};
  hs.request_time_millis = config_.profile == Profile::hardened ? clock_->now_ms() : 0;
  HttpResponse resp = parse_http_response(roundtrip(s.host, s.port, hs));
  if (resp.response.error_code != error_code::ok) {
    throw Error(ErrorKind::protocol, "handshake rejected with " + std::to_string(resp.response.error_code));
  }
  if (!resp.set_cookie) throw Error(ErrorKind::protocol, "handshake response lacks TP_SESSIONID");
  const Json& result = resp.response.result ? *resp.response.result : Json::object();
  if (!result.contains("key") || !result["key"].is_string()) {
    throw Error(ErrorKind::protocol, "handshake response lacks key");
  }
  const std::string blob = result["key"].get<std::string>();
  const auto now = clock_->now_s();

  if (config_.profile == Profile::hardened) {
    ++identity_checks_;
    if (!result.contains("signature") || !result["signature"].is_string()) {
      throw Error(ErrorKind::peer_authentication, "key transmission is not signed");
    }
    auto cert = cloud_->certificate_for(target.body.device_id);
    if (!cert) throw Error(ErrorKind::peer_authentication, "no certificate for device " + target.body.device_id);
    Bytes sig;
    try {
      sig = base64_decode(result["signature"].get<std::string>());
    } catch (const Error&) {
      throw Error(ErrorKind::peer_authentication, "signature is not base64");
    }
    if (!verify_key_transmission(blob, sig, *cert, *config_.trusted_root, now)) {
      throw Error(ErrorKind::peer_authentication, "key transmission signature does not verify");
    }
  }

  try {
    s.material = unwrap_key(blob, keypair(), now);
  } catch (const Error& e) {
    throw Error(ErrorKind::protocol, std::string("cannot unwrap session key: ") + e.what());
  }
  s.cookie = *resp.set_cookie;

  const LoginCredentials creds =
      setup_login ? setup_credentials() : encode_login_credentials(config_.tapo_email, config_.tapo_password);
  RpcRequest login;
  login.method = "login_device";
  login.params = Json{{"password", creds.password_b64}, {"username", creds.username_b64}};
  RpcResponse lr = call(s, std::move(login));
  if (lr.error_code != error_code::ok || !lr.result || !lr.result->contains("token")) {
    throw Error(ErrorKind::auth_failure, "login rejected with " + std::to_string(lr.error_code));
  }
  s.token = AuthToken{(*lr.result)["token"].get<std::string>()};
  return s;
}

RpcResponse App::call(AppSession& s, RpcRequest inner) {
  const auto now_ms = clock_->now_ms();
  inner.request_time_millis = now_ms;
  if (s.token) inner.token = s.token->token;
  if (config_.profile == Profile::hardened) inner.seq = s.next_seq++;
  sent_inner_.push_back(inner.to_json());

  RpcRequest outer = wrap_passthrough(inner, s.material, iv_mode(), rng_, now_ms / 1000);
  outer.cookie = s.cookie.value;
  HttpResponse resp = parse_http_response(roundtrip(s.host, s.port, outer));
  switch (resp.response.error_code) {
    case error_code::ok:
      break;
    case error_code::session_expired:
      throw Error(ErrorKind::session_expired, "session expired");
    case error_code::freshness:
      throw Error(ErrorKind::freshness, "request rejected as stale or duplicate");
    default:
      throw Error(ErrorKind::protocol, "passthrough rejected with " + std::to_string(resp.response.error_code));
  }
  return unwrap_passthrough_response(resp.response, s.material, now_ms / 1000);
}

RpcResponse App::setup_device(AppSession& s) {
  if (config_.wifi_ssid.empty()) throw Error(ErrorKind::precondition, "no Wi-Fi network configured");
  RpcRequest req;
  req.method = "set_qs_info";
  req.params = Json{
      {"account",
       {{"password", base64_encode(config_.tapo_password)}, {"username", base64_encode(config_.tapo_email)}}},
      {"extra_info", {{"specs", "EU"}}},
      {"time", {{"region", "Europe/Rome"}, {"time_diff", 60}, {"timestamp", clock_->now_s()}}},
      {"wireless",
       {{"key_type", config_.wifi_key_type},
        {"password", base64_encode(config_.wifi_password)},
        {"ssid", base64_encode(config_.wifi_ssid)}}}};
  RpcResponse r = call(s, std::move(req));
  if (r.error_code != error_code::ok) throw Error(ErrorKind::protocol, "setup rejected with " + std::to_string(r.error_code));
  return r;
}

RpcResponse App::control(AppSession& s, const Json& delta) {
  RpcRequest req;
  req.method = "set_device_info";
  req.params = delta;
  return call(s, std::move(req));
}

RpcResponse App::get_device_info(AppSession& s) {
  RpcRequest req;
  req.method = "get_device_info";
  return call(s, std::move(req));
}

}  // namespace tapolab
