#include "tapolab/tapolab.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <string>

#include "adversary.hpp"
#include "capture_filter.hpp"
#include "crc32.hpp"
#include "error.hpp"
#include "lab.hpp"
#include "script.hpp"
#include "sockets.hpp"

using namespace tapolab;

struct tl_report {
  ScenarioReport report;
};

struct tl_lab {
  LabScript script;
  std::optional<ScriptResult> result;
};

struct tl_bulb {
  std::shared_ptr<CloudStub> cloud;
  std::unique_ptr<Bulb> bulb;
  std::unique_ptr<BulbServer> server;
};

struct tl_app {
  std::shared_ptr<CloudStub> cloud;
  std::unique_ptr<App> app;
};

namespace {

thread_local std::string g_last_error;

tl_status status_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::truncated:
    case ErrorKind::format:
    case ErrorKind::length_overflow:
    case ErrorKind::wrap:
    case ErrorKind::decrypt:
      return TL_E_FORMAT;
    case ErrorKind::authentication:
    case ErrorKind::peer_authentication:
    case ErrorKind::auth_failure:
      return TL_E_AUTHENTICATION;
    case ErrorKind::parse:
      return TL_E_PARSE;
    case ErrorKind::protocol:
    case ErrorKind::session_expired:
    case ErrorKind::freshness:
    case ErrorKind::unknown_method:
      return TL_E_PROTOCOL;
    case ErrorKind::network:
      return TL_E_NETWORK;
    case ErrorKind::io:
      return TL_E_IO;
    case ErrorKind::script:
      return TL_E_SCRIPT;
    case ErrorKind::precondition:
      return TL_E_STATE;
    case ErrorKind::argument:
      return TL_E_ARGUMENT;
  }
  return TL_E_INTERNAL;
}

template <typename F>
tl_status guarded(F&& f) noexcept {
  try {
    g_last_error.clear();
    f();
    return TL_OK;
  } catch (const Error& e) {
    g_last_error = std::string(to_string(e.kind())) + ": " + e.what();
    return status_for(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return TL_E_INTERNAL;
}

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorKind::argument, what);
}

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

std::string or_empty(const char* s) { return s ? s : ""; }

Profile profile_arg(const char* s) { return s && *s ? profile_from_string(s) : Profile::vulnerable; }

ChecksumSecret secret_arg(int has, std::uint32_t v) {
  return has ? ChecksumSecret::from_u32(v) : kDefaultChecksumSecret;
}

std::shared_ptr<CloudStub> cloud_for(Profile p, std::uint64_t seed, std::shared_ptr<const Clock> clock) {
  if (p != Profile::hardened) return nullptr;
  // Same derivation as an in-process lab, so separate processes agree.
  return std::make_shared<CloudStub>(Rng(seed).fork("cloud"), std::move(clock));
}

}  // namespace

extern "C" {

const char* tl_last_error(void) { return g_last_error.c_str(); }
const char* tl_version(void) { return TAPOLAB_VERSION; }
void tl_free(void* p) { std::free(p); }

uint32_t tl_crc32(const uint8_t* data, size_t len) { return crc32(ByteView(data, data ? len : 0)); }

tl_status tl_discovery_encode(const char* data_json, const uint8_t nonce[4], uint32_t secret, uint8_t** out,
                              size_t* out_len) {
  return guarded([&] {
    require(nonce && out && out_len, "null argument");
    std::string text = or_empty(data_json);
    DiscoveryData data = parse_discovery_data(view(text));
    Nonce n{};
    std::memcpy(n.data(), nonce, n.size());
    Bytes b = encode_discovery(data, n, ChecksumSecret::from_u32(secret));
    auto* p = static_cast<uint8_t*>(std::malloc(b.size()));
    if (!p) throw std::bad_alloc();
    std::memcpy(p, b.data(), b.size());
    *out = p;
    *out_len = b.size();
  });
}

tl_status tl_discovery_decode(const uint8_t* raw, size_t len, uint32_t secret, char** data_json, uint8_t nonce[4]) {
  return guarded([&] {
    require(raw && data_json, "null argument");
    auto d = decode_discovery(ByteView(raw, len), ChecksumSecret::from_u32(secret));
    *data_json = dup_string(to_string(serialize_discovery_data(d.data)));
    if (nonce) std::memcpy(nonce, d.nonce.data(), d.nonce.size());
  });
}

tl_status tl_bruteforce(const uint8_t* raw, size_t len, int keyspace_bits, unsigned threads, uint32_t* found,
                        size_t* matches, uint64_t* tested) {
  return guarded([&] {
    require(raw && matches, "null argument");
    auto r = bruteforce_checksum(ByteView(raw, len), keyspace_bits, threads);
    *matches = r.matches.size();
    if (tested) *tested = r.tested;
    if (found && !r.matches.empty()) *found = r.matches.front().as_u32();
  });
}

tl_status tl_scenario_run(int scenario_id, const tl_scenario_options* opts, tl_report** out) {
  return guarded([&] {
    require(out, "null argument");
    LabOptions lo;
    ScenarioOptions so;
    if (opts) {
      lo.profile = profile_arg(opts->profile);
      lo.seed = opts->seed;
      if (opts->keyspace_bits) so.keyspace_bits = opts->keyspace_bits;
      so.full_keyspace = opts->full_keyspace != 0;
      so.threads = opts->threads;
    }
    *out = new tl_report{run_standard_scenario(scenario_id, lo, so)};
  });
}

int tl_report_success(const tl_report* r) { return r && r->report.success ? 1 : 0; }

const char* tl_report_exfiltrated(const tl_report* r, const char* key) {
  if (!r || !key) return nullptr;
  auto it = r->report.exfiltrated.find(key);
  return it == r->report.exfiltrated.end() ? nullptr : it->second.c_str();
}

tl_status tl_report_json(const tl_report* r, char** out) {
  return guarded([&] {
    require(r && out, "null argument");
    *out = dup_string(r->report.to_json().dump(2));
  });
}

void tl_report_free(tl_report* r) { delete r; }

tl_status tl_lab_load(const char* path, tl_lab** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new tl_lab{load_script(path), std::nullopt};
  });
}

tl_status tl_lab_parse(const char* text, tl_lab** out) {
  return guarded([&] {
    require(text && out, "null argument");
    *out = new tl_lab{parse_script(text), std::nullopt};
  });
}

tl_status tl_lab_run(tl_lab* lab, const tl_run_options* opts, int* passed) {
  return guarded([&] {
    require(lab, "null lab");
    ScriptOverrides ov;
    if (opts) {
      if (opts->profile && *opts->profile) ov.profile = profile_from_string(opts->profile);
      if (opts->has_seed) ov.seed = opts->seed;
      if (opts->keyspace_bits) ov.keyspace_bits = opts->keyspace_bits;
      ov.full_keyspace = opts->full_keyspace != 0;
      ov.threads = opts->threads;
    }
    lab->result.reset();
    lab->result = run_script(lab->script, ov);
    if (passed) *passed = lab->result->passed() ? 1 : 0;
  });
}

tl_status tl_lab_capture_jsonl(const tl_lab* lab, char** out) {
  return guarded([&] {
    require(lab && out, "null argument");
    if (!lab->result) throw Error(ErrorKind::precondition, "lab has not been run");
    *out = dup_string(to_jsonl(lab->result->capture));
  });
}

tl_status tl_lab_reports_json(const tl_lab* lab, char** out) {
  return guarded([&] {
    require(lab && out, "null argument");
    if (!lab->result) throw Error(ErrorKind::precondition, "lab has not been run");
    *out = dup_string(lab->result->reports_json().dump(2));
  });
}

tl_status tl_lab_first_failure(const tl_lab* lab, char** out) {
  return guarded([&] {
    require(lab && out, "null argument");
    if (!lab->result) throw Error(ErrorKind::precondition, "lab has not been run");
    const AssertionResult* f = lab->result->first_failure();
    *out = f ? dup_string("line " + std::to_string(f->line) + ": " + f->text + " (" + f->detail + ")") : nullptr;
  });
}

void tl_lab_free(tl_lab* lab) { delete lab; }

tl_status tl_capture_filter(const char* jsonl, const char* filter, char** out) {
  return guarded([&] {
    require(jsonl && out, "null argument");
    *out = dup_string(export_capture(jsonl, or_empty(filter)));
  });
}

tl_status tl_bulb_create(const tl_bulb_options* opts, tl_bulb** out) {
  return guarded([&] {
    require(opts && out, "null argument");
    const Profile profile = profile_arg(opts->profile);
    const std::string name = opts->name && *opts->name ? opts->name : "bulb";
    auto clock = std::make_shared<SystemClock>();
    auto b = std::make_unique<tl_bulb>();
    b->cloud = cloud_for(profile, opts->seed, clock);

    Rng root(opts->seed);
    Rng id_rng = root.fork("device-id/" + name);
    BulbConfig cfg;
    cfg.device_id = to_hex(id_rng.bytes(16));
    Bytes mac = id_rng.bytes(6);
    mac[0] = 0x3C;
    for (std::size_t i = 0; i < mac.size(); ++i) {
      if (i) cfg.mac += '-';
      cfg.mac += to_upper_hex(ByteView(&mac[i], 1));
    }
    cfg.ip = "127.0.0.1";
    cfg.profile = profile;
    cfg.secret = secret_arg(opts->has_secret, opts->secret);
    b->bulb = std::make_unique<Bulb>(cfg, root.fork("bulb/" + name), clock, b->cloud);
    if (opts->email && *opts->email) {
      b->bulb->provision(opts->email, or_empty(opts->password),
                         WifiConfig{or_empty(opts->ssid), or_empty(opts->wifi_password), "wpa2_psk"});
    }
    *out = b.release();
  });
}

tl_status tl_bulb_serve(tl_bulb* b, const char* address, uint16_t udp_port, uint16_t tcp_port) {
  return guarded([&] {
    require(b, "null bulb");
    if (b->server) throw Error(ErrorKind::precondition, "bulb is already serving");
    SocketEndpoints where;
    if (address && *address) where.address = address;
    where.udp_port = udp_port;
    where.tcp_port = tcp_port;
    // Discovery must advertise where HTTP actually listens.
    auto server = std::make_unique<BulbServer>(*b->bulb, where);
    b->bulb->set_ip(where.address);
    b->bulb->set_http_port(server->tcp_port());
    server->start();
    b->server = std::move(server);
  });
}

tl_status tl_bulb_ports(const tl_bulb* b, uint16_t* udp_port, uint16_t* tcp_port) {
  return guarded([&] {
    require(b, "null bulb");
    if (!b->server) throw Error(ErrorKind::precondition, "bulb is not serving");
    if (udp_port) *udp_port = b->server->udp_port();
    if (tcp_port) *tcp_port = b->server->tcp_port();
  });
}

void tl_bulb_stop(tl_bulb* b) {
  if (b && b->server) b->server.reset();
}

tl_status tl_bulb_state_json(const tl_bulb* b, char** out) {
  return guarded([&] {
    require(b && out, "null argument");
    *out = dup_string(b->bulb->state().to_json().dump(2));
  });
}

void tl_bulb_free(tl_bulb* b) {
  if (!b) return;
  b->server.reset();
  delete b;
}

tl_status tl_app_create(const tl_app_options* opts, tl_app** out) {
  return guarded([&] {
    require(opts && out, "null argument");
    require(opts->discovery_port != 0, "discovery_port is required");
    const Profile profile = profile_arg(opts->profile);
    auto clock = std::make_shared<SystemClock>();
    auto a = std::make_unique<tl_app>();
    a->cloud = cloud_for(profile, opts->seed, clock);
    AppConfig cfg = default_app_config();
    if (opts->email) cfg.tapo_email = opts->email;
    if (opts->password) cfg.tapo_password = opts->password;
    if (opts->ssid) cfg.wifi_ssid = opts->ssid;
    if (opts->wifi_password) cfg.wifi_password = opts->wifi_password;
    cfg.profile = profile;
    cfg.secret = secret_arg(opts->has_secret, opts->secret);
    cfg.discovery_timeout_ms = opts->timeout_ms > 0 ? opts->timeout_ms : 1000;
    cfg.discovery_retries = 1;
    const std::string target = opts->target && *opts->target ? opts->target : "127.0.0.1";
    auto transport = std::make_unique<SocketTransport>(target, opts->discovery_port);
    a->app = std::make_unique<App>(cfg, std::move(transport), Rng::system(), clock, a->cloud);
    *out = a.release();
  });
}

namespace {

std::vector<DiscoveredDevice> discover_with_cloud(tl_app* a, DiscoveryScope scope) {
  auto found = a->app->discover(scope);
  // This process's view of the cloud learns devices as they are found; the
  // seed-derived identity matches the one the bulb process registered.
  if (a->cloud) {
    for (const auto& d : found) a->cloud->register_device(d.body.device_id);
  }
  return found;
}

}  // namespace

tl_status tl_app_discover(tl_app* a, int unconfigured, char** out) {
  return guarded([&] {
    require(a && out, "null argument");
    auto found = discover_with_cloud(a, unconfigured ? DiscoveryScope::unconfigured : DiscoveryScope::owned);
    Json arr = Json::array();
    for (const auto& d : found) arr.push_back(d.body.to_json());
    *out = dup_string(arr.dump(2));
  });
}

tl_status tl_app_setup(tl_app* a, char** out) {
  return guarded([&] {
    require(a, "null app");
    auto found = discover_with_cloud(a, DiscoveryScope::unconfigured);
    if (found.empty()) throw Error(ErrorKind::network, "no unconfigured bulb answered");
    AppSession s = a->app->establish_session(found.front(), true);
    RpcResponse r = a->app->setup_device(s);
    if (r.error_code != 0) throw Error(ErrorKind::protocol, "set_qs_info returned " + std::to_string(r.error_code));
    if (out) *out = dup_string(r.to_json().dump(2));
  });
}

tl_status tl_app_control(tl_app* a, const char* delta_json, char** out) {
  return guarded([&] {
    require(a && delta_json, "null argument");
    Json delta;
    try {
      delta = Json::parse(delta_json);
    } catch (const std::exception& e) {
      throw Error(ErrorKind::parse, std::string("delta is not JSON: ") + e.what());
    }
    auto found = discover_with_cloud(a, DiscoveryScope::owned);
    if (found.empty()) throw Error(ErrorKind::network, "no owned bulb answered");
    AppSession s = a->app->establish_session(found.front());
    RpcResponse r = a->app->control(s, delta);
    if (r.error_code != 0) throw Error(ErrorKind::protocol, "set_device_info returned " + std::to_string(r.error_code));
    RpcResponse info = a->app->get_device_info(s);
    if (out) *out = dup_string(info.result.value_or(Json::object()).dump(2));
  });
}

void tl_app_free(tl_app* a) { delete a; }

}  // extern "C"
