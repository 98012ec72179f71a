#include "bulb.hpp"

#include <algorithm>

#include "error.hpp"

namespace tapolab {

Json LampState::to_json() const {
  return Json{{"device_on", on},
              {"brightness", brightness},
              {"hue", hue},
              {"saturation", saturation},
              {"color_temp", color_temp_kelvin},
              {"color_temp_active", color_temp_active}};
}

std::string_view to_string(DeviceMode m) { return m == DeviceMode::setup ? "setup" : "configured"; }

Json DeviceState::to_json() const {
  Json j;
  j["device_id"] = device_id;
  j["mode"] = std::string(to_string(mode));
  j["owner"] = owner ? Json(*owner) : Json(nullptr);
  j["profile"] = std::string(to_string(profile));
  j["wifi_ssid"] = wifi ? Json(wifi->ssid) : Json(nullptr);
  j["lamp"] = lamp.to_json();
  j["sessions"] = sessions;
  return j;
}

Bulb::Bulb(BulbConfig config, Rng rng, std::shared_ptr<const Clock> clock, std::shared_ptr<CloudStub> cloud)
    : config_(std::move(config)),
      rng_(std::move(rng)),
      clock_(std::move(clock)),
      cloud_(std::move(cloud)),
      issuer_(rng_.fork("credentials")) {
  if (!clock_) throw Error(ErrorKind::argument, "bulb needs a clock");
  if (config_.profile == Profile::hardened) {
    if (!cloud_) throw Error(ErrorKind::argument, "hardened bulb needs the cloud stub");
    identity_ = cloud_->register_device(config_.device_id);
  }
}

void Bulb::provision(std::string_view email, std::string_view password, const WifiConfig& wifi) {
  std::lock_guard lock(mu_);
  stored_ = encode_login_credentials(email, password);
  owner_ = owner_id_for_email(email);
  wifi_ = wifi;
  mode_ = DeviceMode::configured;
  if (cloud_ && config_.profile == Profile::hardened) cloud_->associate(config_.device_id, *owner_);
}

DeviceState Bulb::state() const {
  std::lock_guard lock(mu_);
  return DeviceState{config_.device_id, mode_, owner_, stored_, wifi_, lamp_, config_.profile, sessions_.size()};
}

LampState Bulb::lamp() const {
  std::lock_guard lock(mu_);
  return lamp_;
}

DeviceMode Bulb::mode() const {
  std::lock_guard lock(mu_);
  return mode_;
}

void Bulb::set_ip(std::string ip) {
  std::lock_guard lock(mu_);
  config_.ip = std::move(ip);
}

void Bulb::set_http_port(std::uint16_t port) {
  std::lock_guard lock(mu_);
  config_.http_port = port;
}

IvMode Bulb::iv_mode() const {
  return config_.profile == Profile::hardened ? IvMode::dynamic_iv : IvMode::static_iv;
}

// --- discovery ------------------------------------------------------------------

DiscoveryResponseBody Bulb::discovery_body_locked() const {
  DiscoveryResponseBody b;
  b.device_id = config_.device_id;
  b.owner = owner_.value_or(kUnownedOwner);
  b.ip = config_.ip;
  b.mac = config_.mac;
  b.factory_default = mode_ == DeviceMode::setup;
  b.http_port = config_.http_port;
  return b;
}

std::optional<Bytes> Bulb::handle_discovery(ByteView raw) {
  std::lock_guard lock(mu_);
  try {
    // Hardened bulbs bound to an account speak only the tagged format; until
    // then there is no account key and the legacy checksum is all they have.
    if (config_.profile == Profile::hardened && mode_ == DeviceMode::configured) {
      if (discovery_version(raw) != 2) return std::nullopt;
      auto keys = cloud_->valid_keys_for_device(config_.device_id);
      auto req = decode_discovery_v2(raw, keys);
      if (std::holds_alternative<DiscoveryResponseBody>(req.data)) return std::nullopt;
      auto key = cloud_->current_key(*owner_).key;
      return encode_discovery_v2(discovery_body_locked(), req.nonce, key);
    }
    if (discovery_version(raw) != 1) return std::nullopt;
    auto req = decode_discovery(raw, config_.secret);
    if (std::holds_alternative<DiscoveryResponseBody>(req.data)) return std::nullopt;
    return encode_discovery(discovery_body_locked(), req.nonce, config_.secret);
  } catch (const Error&) {
    return std::nullopt;
  }
}

// --- RPC ---------------------------------------------------------------------------

std::string Bulb::handle_http(std::string_view raw) {
  Outcome out;
  {
    std::lock_guard lock(mu_);
    try {
      out = handle_request_locked(parse_http_request(raw));
    } catch (const Error&) {
      out = Outcome{RpcResponse{error_code::format, std::nullopt}, std::nullopt, std::nullopt};
    }
  }
  if (out.completed_setup && on_setup_) on_setup_(*out.completed_setup);
  return build_http_response(out.response, out.set_cookie);
}

Bulb::Outcome Bulb::handle_request_locked(const RpcRequest& req) {
  if (req.method == "handshake") return handshake_locked(req);
  if (req.method == kPassthroughMethod) return passthrough_locked(req);
  return Outcome{RpcResponse{error_code::unknown_method, std::nullopt}, std::nullopt, std::nullopt};
}

Bulb::Outcome Bulb::handshake_locked(const RpcRequest& req) {
  const auto now = clock_->now_s();
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    if (it->second.material.is_expired(now)) {
      expired_.insert(it->first);
      it = sessions_.erase(it);
    } else {
      ++it;
    }
  }
  if (!req.params.contains("key") || !req.params["key"].is_string()) {
    return Outcome{RpcResponse{error_code::format, std::nullopt}, std::nullopt, std::nullopt};
  }
  std::optional<RsaPublicKey> peer;
  try {
    peer = RsaPublicKey::from_pem(req.params["key"].get<std::string>());
  } catch (const Error&) {
    return Outcome{RpcResponse{error_code::format, std::nullopt}, std::nullopt, std::nullopt};
  }

  SessionContext s;
  s.cookie = issuer_.issue_cookie();
  s.material = generate_session_material(rng_, now);
  std::string blob;
  try {
    blob = wrap_key(s.material, *peer, rng_);
  } catch (const Error&) {
    return Outcome{RpcResponse{error_code::format, std::nullopt}, std::nullopt, std::nullopt};
  }
  Json result{{"key", blob}};
  if (identity_) result["signature"] = base64_encode(sign_key_transmission(blob, identity_->key));
  auto cookie = s.cookie;
  sessions_.emplace(cookie.value, std::move(s));
  return Outcome{RpcResponse{error_code::ok, std::move(result)}, cookie, std::nullopt};
}

Bulb::Outcome Bulb::passthrough_locked(const RpcRequest& req) {
  auto fail = [](int code) { return Outcome{RpcResponse{code, std::nullopt}, std::nullopt, std::nullopt}; };
  if (!req.cookie) return fail(error_code::auth_failure);
  if (expired_.contains(*req.cookie)) return fail(error_code::session_expired);
  auto it = sessions_.find(*req.cookie);
  if (it == sessions_.end()) return fail(error_code::auth_failure);
  SessionContext& s = it->second;
  const auto now_ms = clock_->now_ms();
  if (s.material.is_expired(now_ms / 1000)) {
    expired_.insert(it->first);
    sessions_.erase(it);
    return fail(error_code::session_expired);
  }

  RpcRequest inner;
  try {
    inner = unwrap_passthrough_request(req, s.material, now_ms / 1000);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::session_expired) return fail(error_code::session_expired);
    return fail(error_code::format);
  }

  // The vulnerable profile trusts any ciphertext that decrypts under a live key.
  if (config_.profile == Profile::hardened) {
    if (!inner.seq) return fail(error_code::freshness);
    if (check_freshness(inner.request_time_millis, *inner.seq, s.freshness, now_ms) != FreshnessVerdict::accept) {
      return fail(error_code::freshness);
    }
  }

  std::optional<WifiConfig> completed;
  RpcResponse inner_resp = dispatch_inner_locked(s, inner, &completed);
  RpcResponse outer = wrap_passthrough_response(inner_resp, s.material, iv_mode(), rng_, now_ms / 1000);
  return Outcome{std::move(outer), std::nullopt, std::move(completed)};
}

RpcResponse Bulb::dispatch_inner_locked(SessionContext& s, const RpcRequest& inner,
                                        std::optional<WifiConfig>* completed) {
  if (inner.method == "login_device") return login_locked(s, inner);
  if (!s.authenticated || !inner.token || *inner.token != s.token->token) {
    return RpcResponse{error_code::auth_failure, std::nullopt};
  }
  if (inner.method == "set_qs_info") {
    if (mode_ != DeviceMode::setup || !s.setup_login) return RpcResponse{error_code::unknown_method, std::nullopt};
    return set_qs_info_locked(inner, completed);
  }
  if (inner.method == "get_device_info") return get_device_info_locked();
  if (inner.method == "set_device_info") return set_device_info_locked(inner);
  return RpcResponse{error_code::unknown_method, std::nullopt};
}

RpcResponse Bulb::login_locked(SessionContext& s, const RpcRequest& inner) {
  const auto& p = inner.params;
  if (!p.contains("username") || !p.contains("password") || !p["username"].is_string() ||
      !p["password"].is_string()) {
    return RpcResponse{error_code::format, std::nullopt};
  }
  LoginCredentials given{p["username"].get<std::string>(), p["password"].get<std::string>()};
  const LoginCredentials expected = mode_ == DeviceMode::setup ? setup_credentials() : *stored_;
  if (given != expected) return RpcResponse{error_code::auth_failure, std::nullopt};
  s.authenticated = true;
  s.setup_login = mode_ == DeviceMode::setup;
  s.token = issuer_.issue_token();
  return RpcResponse{error_code::ok, Json{{"token", s.token->token}}};
}

namespace {

std::optional<std::string> b64_field(const Json& obj, const char* name) {
  if (!obj.is_object() || !obj.contains(name) || !obj[name].is_string()) return std::nullopt;
  try {
    return to_string(base64_decode(obj[name].get<std::string>()));
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace

RpcResponse Bulb::set_qs_info_locked(const RpcRequest& inner, std::optional<WifiConfig>* completed) {
  const auto& p = inner.params;
  if (!p.contains("account") || !p.contains("wireless")) return RpcResponse{error_code::format, std::nullopt};
  auto email = b64_field(p["account"], "username");
  auto password = b64_field(p["account"], "password");
  auto ssid = b64_field(p["wireless"], "ssid");
  auto wifi_password = b64_field(p["wireless"], "password");
  if (!email || !password || !ssid || !wifi_password) return RpcResponse{error_code::format, std::nullopt};
  WifiConfig wifi{*ssid, *wifi_password, p["wireless"].value("key_type", std::string("wpa2_psk"))};

  stored_ = encode_login_credentials(*email, *password);
  owner_ = owner_id_for_email(*email);
  wifi_ = wifi;
  mode_ = DeviceMode::configured;
  if (cloud_ && config_.profile == Profile::hardened) cloud_->associate(config_.device_id, *owner_);
  *completed = wifi;
  return RpcResponse{error_code::ok, Json::object()};
}

RpcResponse Bulb::get_device_info_locked() const {
  Json r = lamp_.to_json();
  r["device_id"] = config_.device_id;
  r["model"] = "L530E Series";
  r["type"] = "SMART.TAPOBULB";
  r["mac"] = config_.mac;
  r["ip"] = config_.ip;
  return RpcResponse{error_code::ok, std::move(r)};
}

RpcResponse Bulb::set_device_info_locked(const RpcRequest& inner) {
  const auto& p = inner.params;
  LampState next = lamp_;
  auto int_field = [&](const char* name, int lo, int hi, int& dst) {
    if (!p.contains(name)) return true;
    if (!p[name].is_number_integer()) return false;
    auto v = p[name].get<std::int64_t>();
    if (v < lo || v > hi) return false;
    dst = static_cast<int>(v);
    return true;
  };
  if (p.contains("device_on")) {
    if (!p["device_on"].is_boolean()) return RpcResponse{error_code::format, std::nullopt};
    next.on = p["device_on"].get<bool>();
  }
  if (!int_field("brightness", 1, 100, next.brightness) || !int_field("hue", 0, 359, next.hue) ||
      !int_field("saturation", 0, 100, next.saturation) ||
      !int_field("color_temp", 2500, 6500, next.color_temp_kelvin)) {
    return RpcResponse{error_code::format, std::nullopt};
  }
  if (p.contains("hue") || p.contains("saturation")) next.color_temp_active = false;
  if (p.contains("color_temp")) next.color_temp_active = true;
  lamp_ = next;
  return RpcResponse{error_code::ok, Json::object()};
}

}  // namespace tapolab
