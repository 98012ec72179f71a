// attackctl: run attack scenarios on their canonical topologies.

#include <vector>

#include "cli_common.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Run attack scenarios"};
  app.require_subcommand(1);
  app.fallthrough();
  auto* sc = app.add_subcommand("scenario", "Run one scenario or all five on the canonical setups");
  std::string which = "all", profile = "vulnerable", expect, report;
  uint64_t seed = 1;
  int keyspace = 24;
  bool full_keyspace = false;
  unsigned threads = 0;
  sc->add_option("id", which, "1..5 or all")->check(CLI::IsMember({"1", "2", "3", "4", "5", "all"}));
  app.add_option("--profile", profile)->check(CLI::IsMember({"vulnerable", "hardened"}));
  app.add_option("--seed", seed);
  app.add_option("--keyspace", keyspace, "Scenario 1 keyspace bits")->check(CLI::Range(1, 32));
  app.add_flag("--full-keyspace", full_keyspace, "Scan all 32 bits in scenario 1 (slow)");
  app.add_option("--threads", threads, "Brute-force threads (0 = all cores)");
  app.add_option("--expect", expect, "Exit 1 unless every scenario ends this way")
      ->check(CLI::IsMember({"success", "failure"}));
  app.add_option("--report", report, "Write the reports JSON array here ('-' for stdout)");
  tools::add_config(app);
  if (int rc = tools::parse_or_exit(app, argc, argv); rc >= 0) return rc;

  std::vector<int> ids;
  if (which == "all") {
    ids = {1, 2, 3, 4, 5};
  } else {
    ids = {std::stoi(which)};
  }
  tl_scenario_options o{};
  o.profile = profile.c_str();
  o.seed = seed;
  o.keyspace_bits = keyspace;
  o.full_keyspace = full_keyspace;
  o.threads = threads;

  int rc = tools::kPass;
  std::string all = "[";
  for (int id : ids) {
    tl_report* r = nullptr;
    if (tl_status st = tl_scenario_run(id, &o, &r); st != TL_OK) return tools::report_error("attackctl", st);
    tools::CString json;
    tl_report_json(r, json.out());
    const bool ok = tl_report_success(r);
    tl_report_free(r);
    std::printf("scenario %d (%s): %s\n", id, profile.c_str(), ok ? "success" : "failure");
    if (all.size() > 1) all += ",";
    all += json.str();
    if (!expect.empty() && ok != (expect == "success")) {
      std::fprintf(stderr, "attackctl: scenario %d expected %s\n", id, expect.c_str());
      rc = tools::kAssertion;
    }
  }
  all += "]\n";
  if (!report.empty() && !tools::write_file(report, all)) {
    std::fprintf(stderr, "attackctl: cannot write %s\n", report.c_str());
    return tools::kUsage;
  }
  return rc;
}
