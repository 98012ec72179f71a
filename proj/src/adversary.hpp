#pragma once

// The five attack programs, run against a Lab world, plus the offline
// checksum brute force they rely on.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "discovery.hpp"
#include "json_value.hpp"
#include "lab.hpp"

namespace tapolab {

struct ScenarioReport {
  int scenario_id = 0;
  Profile profile = Profile::vulnerable;
  bool success = false;
  std::string failure_stage;  // empty on success
  std::string blocking_fix;   // which hardening measure stopped the attack
  std::map<std::string, std::string> exfiltrated;
  Json observations = Json::object();
  std::vector<std::uint64_t> trace;  // capture seqs produced during the run
  std::int64_t duration_ms = 0;      // virtual

  Json to_json() const;
  static ScenarioReport from_json(const Json& j);
};

struct BruteforceResult {
  std::vector<ChecksumSecret> matches;  // ascending
  std::uint64_t tested = 0;
};

/// Scans the low keyspace_bits of the 32-bit secret space for secrets under
/// which the captured v1 payload verifies. threads == 0 picks the hardware
/// concurrency.
BruteforceResult bruteforce_checksum(ByteView captured, int keyspace_bits, unsigned threads = 0);

struct ScenarioOptions {
  int keyspace_bits = 24;
  bool full_keyspace = false;
  unsigned threads = 0;
};

/// Actor names the scenario program plays against.
struct ScenarioRoles {
  std::string attacker = "eve";
  std::string app = "phone";
  std::string bulb = "bulb";
};

/// Throws argument for unknown ids or missing actors.
ScenarioReport run_scenario(Lab& lab, int id, const ScenarioRoles& roles, const ScenarioOptions& opts = {});

/// Canonical topologies: 'A' bulb at home, victim and attacker on a public
/// network; 'B' everyone at home, attacker controls it; 'C' bulb in setup
/// mode with its open AP, attacker runs a second AP.
std::unique_ptr<Lab> build_setup(char setup, const LabOptions& opts);
char setup_for_scenario(int id);

/// Builds the scenario's canonical setup and runs it. Scenario 1 plants its
/// secret inside the scanned keyspace.
ScenarioReport run_standard_scenario(int id, LabOptions lab_opts, const ScenarioOptions& opts = {});

}  // namespace tapolab
