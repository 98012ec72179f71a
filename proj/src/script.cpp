#include "script.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "error.hpp"
#include "lab.hpp"

namespace tapolab {

namespace {

[[noreturn]] void fail_at(int line, const std::string& msg) {
  throw Error(ErrorKind::script, "line " + std::to_string(line) + ": " + msg);
}

std::vector<std::string> split_words(std::string_view s, int line) {
  std::vector<std::string> out;
  std::string cur;
  bool in_word = false, quoted = false;
  for (char c : s) {
    if (quoted) {
      if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
      in_word = true;
    } else if (c == '#') {
      break;
    } else if (c == ' ' || c == '\t' || c == '\r') {
      if (in_word) out.push_back(std::move(cur));
      cur.clear();
      in_word = false;
    } else {
      cur += c;
      in_word = true;
    }
  }
  if (quoted) fail_at(line, "unterminated quote");
  if (in_word) out.push_back(std::move(cur));
  return out;
}

template <typename T>
T parse_int(const std::string& s, int line, const char* what) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) fail_at(line, std::string("bad ") + what + " '" + s + "'");
  return v;
}

bool parse_bool(const std::string& s, int line) {
  if (s == "true" || s == "on" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "off" || s == "no" || s == "0") return false;
  fail_at(line, "bad boolean '" + s + "'");
}

std::int64_t parse_duration_ms(const std::string& s, int line) {
  std::size_t i = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i == 0) fail_at(line, "bad duration '" + s + "'");
  auto n = parse_int<std::int64_t>(s.substr(0, i), line, "duration");
  std::string unit = s.substr(i);
  if (unit == "ms") return n;
  if (unit.empty() || unit == "s") return n * 1000;
  if (unit == "m") return n * 60'000;
  if (unit == "h") return n * 3'600'000;
  fail_at(line, "bad duration unit '" + unit + "'");
}

ChecksumSecret parse_secret_hex(const std::string& s, int line) {
  if (s.size() != 8) fail_at(line, "secret must be 8 hex digits");
  Bytes b;
  try {
    b = from_hex(s);
  } catch (const Error&) {
    fail_at(line, "secret must be 8 hex digits");
  }
  ChecksumSecret out;
  std::copy(b.begin(), b.end(), out.key.begin());
  return out;
}

struct VerbSpec {
  std::size_t min_args, max_args;
  std::set<std::string> keys;
};

const std::map<std::string, VerbSpec>& verbs() {
  static const std::map<std::string, VerbSpec> v = {
      {"seed", {1, 1, {}}},
      {"profile", {1, 1, {}}},
      {"keyspace", {1, 1, {}}},
      {"secret", {1, 1, {}}},
      {"network", {1, 2, {"ssid", "attacker"}}},
      {"app", {1, 1, {"net", "ip", "email", "password", "ssid", "wifi_password"}}},
      {"bulb", {1, 1, {"net", "ip", "owner"}}},
      {"attacker", {1, 1, {"net", "ip"}}},
      {"discover", {1, 2, {}}},
      {"setup", {1, 1, {}}},
      {"connect", {1, 1, {}}},
      {"control", {1, 1, {"on", "brightness", "hue", "saturation", "color_temp"}}},
      {"advance", {1, 1, {}}},
      {"disconnect", {2, 2, {}}},
      {"attach", {2, 3, {}}},
      {"attack", {1, 1, {"attacker", "app", "bulb"}}},
      {"assert", {2, 3, {"success", "stage", "fix", "exfiltrated", "on", "brightness", "mode", "ssid", "owner"}}},
  };
  return v;
}

const std::set<std::string> kHeaderVerbs = {"seed", "profile", "keyspace", "secret"};

void validate(const ScriptStatement& st) {
  const auto& spec = verbs().at(st.verb);
  if (st.args.size() < spec.min_args || st.args.size() > spec.max_args) {
    fail_at(st.line, "wrong number of arguments to '" + st.verb + "'");
  }
  for (const auto& [k, _] : st.kv) {
    if (!spec.keys.contains(k)) fail_at(st.line, "unknown key '" + k + "' for '" + st.verb + "'");
  }
  auto need = [&](const char* k) {
    if (!st.kv.contains(k)) fail_at(st.line, "'" + st.verb + "' needs " + k + "=");
  };
  if (st.verb == "app" || st.verb == "bulb" || st.verb == "attacker") {
    need("net");
    need("ip");
  }
  if (st.verb == "network" && st.args.size() == 2 && st.args[1] != "open") {
    fail_at(st.line, "unexpected '" + st.args[1] + "'");
  }
  if (st.verb == "discover" && st.args.size() == 2 && st.args[1] != "owned" && st.args[1] != "unconfigured") {
    fail_at(st.line, "discover scope must be owned or unconfigured");
  }
  if (st.verb == "control" && st.kv.empty()) fail_at(st.line, "control needs at least one key=value");
  if (st.verb == "advance") parse_duration_ms(st.args[0], st.line);
  if (st.verb == "attack") {
    int id = parse_int<int>(st.args[0], st.line, "scenario id");
    if (id < 1 || id > 5) fail_at(st.line, "scenario id must be 1..5");
  }
  if (st.verb == "assert") {
    const std::string& what = st.args[0];
    if (what == "report") {
      parse_int<int>(st.args[1], st.line, "scenario id");
    } else if (what == "discovered") {
      if (st.args.size() != 3) fail_at(st.line, "assert discovered needs <app> <count>");
      parse_int<std::size_t>(st.args[2], st.line, "count");
    } else if (what != "bulb") {
      fail_at(st.line, "assert target must be report, bulb or discovered");
    }
    if (st.kv.contains("success")) parse_bool(st.kv.at("success"), st.line);
    if (st.kv.contains("on")) parse_bool(st.kv.at("on"), st.line);
    if (st.kv.contains("brightness")) parse_int<int>(st.kv.at("brightness"), st.line, "brightness");
  }
  if (st.verb == "control") {
    for (const auto& [k, v] : st.kv) {
      if (k == "on") {
        parse_bool(v, st.line);
      } else {
        parse_int<int>(v, st.line, k.c_str());
      }
    }
  }
}

}  // namespace

LabScript parse_script(std::string_view text) {
  LabScript script;
  std::set<std::string> actors, networks;
  bool body_started = false;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    auto words = split_words(raw, line);
    if (words.empty()) continue;

    ScriptStatement st;
    st.line = line;
    std::size_t i = 0;
    if (words[0] == "[vulnerable]" || words[0] == "[hardened]") {
      st.only = words[0] == "[hardened]" ? Profile::hardened : Profile::vulnerable;
      ++i;
    }
    if (i >= words.size()) fail_at(line, "guard without a statement");
    st.verb = words[i++];
    if (!verbs().contains(st.verb)) fail_at(line, "unknown statement '" + st.verb + "'");
    for (; i < words.size(); ++i) {
      auto eq = words[i].find('=');
      if (eq == std::string::npos) {
        st.args.push_back(words[i]);
      } else {
        if (eq == 0) fail_at(line, "empty key in '" + words[i] + "'");
        st.kv[words[i].substr(0, eq)] = words[i].substr(eq + 1);
      }
    }
    st.text = raw.substr(0, raw.find('#'));
    while (!st.text.empty() && std::isspace(static_cast<unsigned char>(st.text.back()))) st.text.pop_back();
    validate(st);

    if (kHeaderVerbs.contains(st.verb)) {
      if (st.only) fail_at(line, "'" + st.verb + "' cannot be guarded");
      if (body_started) fail_at(line, "'" + st.verb + "' must come before the topology");
      const std::string& a = st.args[0];
      if (st.verb == "seed") script.seed = parse_int<std::uint64_t>(a, line, "seed");
      if (st.verb == "profile") {
        try {
          script.profile = profile_from_string(a);
        } catch (const Error&) {
          fail_at(line, "unknown profile '" + a + "'");
        }
      }
      if (st.verb == "keyspace") {
        script.keyspace_bits = parse_int<int>(a, line, "keyspace");
        if (script.keyspace_bits < 1 || script.keyspace_bits > 32) fail_at(line, "keyspace must be 1..32");
      }
      if (st.verb == "secret") {
        if (a != "planted") parse_secret_hex(a, line);
        script.secret = a;
      }
      continue;
    }
    body_started = true;

    // Static reference checks: declarations precede use.
    if (st.verb == "network") {
      if (!networks.insert(st.args[0]).second) fail_at(line, "duplicate network '" + st.args[0] + "'");
    } else if (st.verb == "app" || st.verb == "bulb" || st.verb == "attacker") {
      if (!networks.contains(st.kv.at("net"))) fail_at(line, "unknown network '" + st.kv.at("net") + "'");
      if (st.verb != "attacker" && !actors.insert(st.args[0]).second) {
        fail_at(line, "duplicate actor '" + st.args[0] + "'");
      }
      actors.insert(st.args[0]);
      if (st.kv.contains("owner") && !actors.contains(st.kv.at("owner"))) {
        fail_at(line, "unknown owner '" + st.kv.at("owner") + "'");
      }
    } else if (st.verb == "discover" || st.verb == "setup" || st.verb == "connect" || st.verb == "control" ||
               st.verb == "disconnect" || st.verb == "attach") {
      if (!actors.contains(st.args[0])) fail_at(line, "unknown actor '" + st.args[0] + "'");
      if ((st.verb == "disconnect" || st.verb == "attach") && !networks.contains(st.args[1])) {
        fail_at(line, "unknown network '" + st.args[1] + "'");
      }
    }
    script.statements.push_back(std::move(st));
  }
  return script;
}

LabScript load_script(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::io, "cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_script(ss.str());
}

bool ScriptResult::passed() const { return first_failure() == nullptr; }

const AssertionResult* ScriptResult::first_failure() const {
  for (const auto& a : assertions) {
    if (!a.passed) return &a;
  }
  return nullptr;
}

Json ScriptResult::reports_json() const {
  Json out = Json::object();
  out["profile"] = std::string(to_string(profile));
  out["seed"] = seed;
  Json reps = Json::array();
  for (const auto& r : reports) reps.push_back(r.to_json());
  out["reports"] = std::move(reps);
  Json asserts = Json::array();
  for (const auto& a : assertions) {
    asserts.push_back(Json{{"line", a.line}, {"assertion", a.text}, {"passed", a.passed}, {"detail", a.detail}});
  }
  out["assertions"] = std::move(asserts);
  out["passed"] = passed();
  return out;
}

namespace {

class Runner {
 public:
  Runner(const LabScript& script, const ScriptOverrides& ov) : script_(script), ov_(ov) {
    LabOptions lo;
    lo.seed = ov.seed.value_or(script.seed);
    lo.profile = ov.profile.value_or(script.profile);
    scen_.keyspace_bits = ov.keyspace_bits.value_or(script.keyspace_bits);
    scen_.full_keyspace = ov.full_keyspace;
    scen_.threads = ov.threads;
    if (script.secret) {
      lo.secret = *script.secret == "planted"
                      ? planted_secret(lo.seed, scen_.full_keyspace ? 32 : scen_.keyspace_bits)
                      : parse_secret_hex(*script.secret, 0);
    }
    lab_ = std::make_unique<Lab>(lo);
    result_.profile = lo.profile;
    result_.seed = lo.seed;
  }

  ScriptResult run() {
    for (const auto& st : script_.statements) {
      if (st.only && *st.only != lab_->profile()) continue;
      try {
        exec(st);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::script) throw;
        fail_at(st.line, "'" + st.text + "' failed: " + e.what());
      }
    }
    result_.capture = lab_->net().capture();
    return std::move(result_);
  }

 private:
  std::string kv_or(const ScriptStatement& st, const char* k, std::string def) const {
    auto it = st.kv.find(k);
    return it == st.kv.end() ? def : it->second;
  }

  AppSession& session_for(const ScriptStatement& st, const std::string& app_name) {
    auto& sessions = lab_->sessions();
    auto it = sessions.find(app_name);
    if (it != sessions.end()) return it->second;
    App& app = lab_->app(app_name);
    auto found = app.discover(DiscoveryScope::owned);
    if (found.empty()) fail_at(st.line, "app '" + app_name + "' found no owned bulb");
    return sessions.insert_or_assign(app_name, app.establish_session(found.front())).first->second;
  }

  void exec(const ScriptStatement& st) {
    const std::string& v = st.verb;
    const auto& a = st.args;
    if (v == "network") {
      lab_->add_network(a[0], a.size() == 2, kv_or(st, "ssid", ""));
      if (st.kv.contains("attacker")) lab_->grant_attacker(a[0], st.kv.at("attacker"));
    } else if (v == "app") {
      AppConfig c = default_app_config();
      c.tapo_email = kv_or(st, "email", c.tapo_email);
      c.tapo_password = kv_or(st, "password", c.tapo_password);
      c.wifi_ssid = kv_or(st, "ssid", c.wifi_ssid);
      c.wifi_password = kv_or(st, "wifi_password", c.wifi_password);
      lab_->add_app(a[0], st.kv.at("net"), st.kv.at("ip"), c);
    } else if (v == "bulb") {
      std::optional<std::string> owner;
      if (st.kv.contains("owner")) owner = st.kv.at("owner");
      lab_->add_bulb(a[0], st.kv.at("net"), st.kv.at("ip"), owner);
    } else if (v == "attacker") {
      lab_->add_attacker(a[0], st.kv.at("net"), st.kv.at("ip"));
    } else if (v == "discover") {
      auto scope = a.size() == 2 && a[1] == "unconfigured" ? DiscoveryScope::unconfigured : DiscoveryScope::owned;
      discovered_[a[0]] = lab_->app(a[0]).discover(scope);
    } else if (v == "setup") {
      App& app = lab_->app(a[0]);
      auto found = app.discover(DiscoveryScope::unconfigured);
      if (found.empty()) fail_at(st.line, "app '" + a[0] + "' found no unconfigured bulb");
      AppSession s = app.establish_session(found.front(), true);
      RpcResponse r = app.setup_device(s);
      if (r.error_code != 0) fail_at(st.line, "set_qs_info returned " + std::to_string(r.error_code));
    } else if (v == "connect") {
      lab_->sessions().erase(a[0]);
      session_for(st, a[0]);
    } else if (v == "control") {
      Json delta = Json::object();
      for (const auto& [k, val] : st.kv) {
        if (k == "on") {
          delta["device_on"] = parse_bool(val, st.line);
        } else {
          delta[k] = parse_int<int>(val, st.line, k.c_str());
        }
      }
      App& app = lab_->app(a[0]);
      RpcResponse r = app.control(session_for(st, a[0]), delta);
      if (r.error_code != 0) fail_at(st.line, "set_device_info returned " + std::to_string(r.error_code));
    } else if (v == "advance") {
      lab_->clock().advance_ms(parse_duration_ms(a[0], st.line));
    } else if (v == "disconnect") {
      lab_->disconnect(a[0], a[1]);
    } else if (v == "attach") {
      lab_->attach(a[0], a[1], a.size() == 3 ? a[2] : std::string{});
    } else if (v == "attack") {
      ScenarioRoles roles;
      roles.attacker = kv_or(st, "attacker", roles.attacker);
      roles.app = kv_or(st, "app", roles.app);
      roles.bulb = kv_or(st, "bulb", roles.bulb);
      result_.reports.push_back(run_scenario(*lab_, std::stoi(a[0]), roles, scen_));
    } else if (v == "assert") {
      result_.assertions.push_back(check(st));
    }
  }

  AssertionResult check(const ScriptStatement& st) {
    AssertionResult r{st.line, st.text, true, {}};
    auto mismatch = [&](const std::string& what, const std::string& want, const std::string& got) {
      if (!r.passed) return;
      r.passed = false;
      r.detail = what + ": expected " + want + ", got " + got;
    };
    const auto& a = st.args;
    if (a[0] == "report") {
      int id = std::stoi(a[1]);
      const ScenarioReport* rep = nullptr;
      for (auto it = result_.reports.rbegin(); it != result_.reports.rend(); ++it) {
        if (it->scenario_id == id) {
          rep = &*it;
          break;
        }
      }
      if (!rep) {
        r.passed = false;
        r.detail = "no report for scenario " + a[1];
        return r;
      }
      if (st.kv.contains("success")) {
        bool want = parse_bool(st.kv.at("success"), st.line);
        if (rep->success != want) mismatch("success", want ? "true" : "false", rep->success ? "true" : "false");
      }
      if (st.kv.contains("stage") && rep->failure_stage != st.kv.at("stage")) {
        mismatch("stage", st.kv.at("stage"), rep->failure_stage.empty() ? "none" : rep->failure_stage);
      }
      if (st.kv.contains("fix") && rep->blocking_fix != st.kv.at("fix")) {
        mismatch("fix", st.kv.at("fix"), rep->blocking_fix.empty() ? "none" : rep->blocking_fix);
      }
      if (st.kv.contains("exfiltrated")) {
        std::istringstream keys(st.kv.at("exfiltrated"));
        std::string k;
        while (std::getline(keys, k, ',')) {
          if (!k.empty() && !rep->exfiltrated.contains(k)) mismatch("exfiltrated", k, "nothing");
        }
      }
    } else if (a[0] == "bulb") {
      DeviceState s = lab_->bulb(a[1]).state();
      if (st.kv.contains("on")) {
        bool want = parse_bool(st.kv.at("on"), st.line);
        if (s.lamp.on != want) mismatch("on", want ? "true" : "false", s.lamp.on ? "true" : "false");
      }
      if (st.kv.contains("brightness")) {
        int want = parse_int<int>(st.kv.at("brightness"), st.line, "brightness");
        if (s.lamp.brightness != want) mismatch("brightness", std::to_string(want), std::to_string(s.lamp.brightness));
      }
      if (st.kv.contains("mode") && std::string(to_string(s.mode)) != st.kv.at("mode")) {
        mismatch("mode", st.kv.at("mode"), std::string(to_string(s.mode)));
      }
      if (st.kv.contains("ssid")) {
        std::string got = s.wifi ? s.wifi->ssid : "none";
        if (got != st.kv.at("ssid")) mismatch("ssid", st.kv.at("ssid"), got);
      }
      if (st.kv.contains("owner")) {
        std::string want = lab_->app(st.kv.at("owner")).owner_id();
        std::string got = s.owner.value_or("none");
        if (got != want) mismatch("owner", want, got);
      }
    } else {
      std::size_t want = std::stoul(a[2]);
      auto it = discovered_.find(a[1]);
      std::size_t got = it == discovered_.end() ? 0 : it->second.size();
      if (got != want) mismatch("discovered", std::to_string(want), std::to_string(got));
    }
    return r;
  }

  const LabScript& script_;
  ScriptOverrides ov_;
  ScenarioOptions scen_;
  std::unique_ptr<Lab> lab_;
  ScriptResult result_;
  std::map<std::string, std::vector<DiscoveredDevice>> discovered_;
};

}  // namespace

ScriptResult run_script(const LabScript& script, const ScriptOverrides& overrides) {
  return Runner(script, overrides).run();
}

}  // namespace tapolab
