#pragma once

// Declarative lab scripts. One statement per line, '#' starts a comment.
//
//   seed <n>
//   profile vulnerable|hardened
//   keyspace <bits>                      scenario 1 scan width (default 24)
//   secret planted|<8 hex digits>        planted: drawn from the seed inside the keyspace
//   network <id> [open] [ssid=<s>] [attacker=<name>]
//   app <name> net=<id> ip=<addr> [email=<s>] [password=<s>] [ssid=<s>] [wifi_password=<s>]
//   bulb <name> net=<id> ip=<addr> [owner=<app>]
//   attacker <name> net=<id> ip=<addr>
//
//   discover <app> [owned|unconfigured]
//   setup <app>                          onboard the first unconfigured bulb
//   connect <app>                        session with the first owned bulb
//   control <app> key=value...           on, brightness, hue, saturation, color_temp
//   advance <n>[ms|s|m|h]
//   disconnect <actor> <network>
//   attach <actor> <network> [<addr>]
//   attack <id> [attacker=<name>] [app=<name>] [bulb=<name>]
//
//   assert report <id> [success=<bool>] [stage=<s>] [fix=<s>] [exfiltrated=<k1,k2>]
//   assert bulb <name> [on=<bool>] [brightness=<n>] [mode=setup|configured] [ssid=<s>] [owner=<app>]
//   assert discovered <app> <count>
//
// Any statement may be prefixed with [vulnerable] or [hardened]; it then runs
// only under that profile. Values with spaces go in double quotes.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adversary.hpp"
#include "hardened.hpp"
#include "netlab.hpp"

namespace tapolab {

struct ScriptStatement {
  int line = 0;
  std::string text;  // as written, for messages
  std::optional<Profile> only;
  std::string verb;
  std::vector<std::string> args;
  std::map<std::string, std::string> kv;
};

struct LabScript {
  std::uint64_t seed = 1;
  Profile profile = Profile::vulnerable;
  int keyspace_bits = 24;
  std::optional<std::string> secret;  // "planted" or hex
  std::vector<ScriptStatement> statements;
};

/// Throws Error{script} with "line N: ..." on any syntax or reference error
/// that can be seen without running.
LabScript parse_script(std::string_view text);
LabScript load_script(const std::string& path);

struct ScriptOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<Profile> profile;
  std::optional<int> keyspace_bits;
  bool full_keyspace = false;
  unsigned threads = 0;
};

struct AssertionResult {
  int line = 0;
  std::string text;
  bool passed = false;
  std::string detail;
};

struct ScriptResult {
  Profile profile = Profile::vulnerable;
  std::uint64_t seed = 0;
  std::vector<ScenarioReport> reports;
  std::vector<AssertionResult> assertions;
  std::vector<CaptureRecord> capture;

  bool passed() const;
  /// First failed assertion, if any.
  const AssertionResult* first_failure() const;
  Json reports_json() const;
};

/// Runtime reference errors (unknown actor, failed setup step) throw
/// Error{script}; assertion failures are recorded, not thrown.
ScriptResult run_script(const LabScript& script, const ScriptOverrides& overrides = {});

}  // namespace tapolab
