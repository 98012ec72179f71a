// labctl: run declarative lab scripts, export filtered captures, and drive a
// loopback bulb process end to end.

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <thread>

#include "cli_common.hpp"

namespace {

constexpr const char* kTool = "labctl";
using tools::kConfigEnv;

struct RunArgs {
  std::string script;
  std::string profile;
  std::int64_t seed = -1;
  int keyspace = 0;
  bool full_keyspace = false;
  unsigned threads = 0;
  std::string report;
  std::string capture;
  bool real_sockets = false;
  int port_base = 20002;
};

int run_script(const RunArgs& a) {
  std::string path = a.script;
  if (const char* env = std::getenv(kConfigEnv); env && *env) path = env;
  if (path.empty()) {
    std::fprintf(stderr, "%s: no script given (argument or %s)\n", kTool, kConfigEnv);
    return tools::kUsage;
  }
  tl_lab* lab = nullptr;
  if (tl_status st = tl_lab_load(path.c_str(), &lab); st != TL_OK) return tools::report_error(kTool, st);
  std::unique_ptr<tl_lab, decltype(&tl_lab_free)> guard(lab, tl_lab_free);

  tl_run_options opts{};
  opts.profile = a.profile.empty() ? nullptr : a.profile.c_str();
  opts.has_seed = a.seed >= 0;
  opts.seed = a.seed >= 0 ? static_cast<uint64_t>(a.seed) : 0;
  opts.keyspace_bits = a.keyspace;
  opts.full_keyspace = a.full_keyspace;
  opts.threads = a.threads;
  int passed = 0;
  if (tl_status st = tl_lab_run(lab, &opts, &passed); st != TL_OK) {
    std::fprintf(stderr, "%s: %s\n", kTool, tl_last_error());
    return tools::kUsage;
  }

  tools::CString capture, reports, failure;
  tl_lab_capture_jsonl(lab, capture.out());
  tl_lab_reports_json(lab, reports.out());
  tl_lab_first_failure(lab, failure.out());
  if (!a.capture.empty() && !tools::write_file(a.capture, capture.str())) {
    std::fprintf(stderr, "%s: cannot write %s\n", kTool, a.capture.c_str());
    return tools::kUsage;
  }
  if (!a.report.empty() && !tools::write_file(a.report, reports.str() + "\n")) {
    std::fprintf(stderr, "%s: cannot write %s\n", kTool, a.report.c_str());
    return tools::kUsage;
  }
  if (!passed) {
    std::fprintf(stderr, "%s: assertion failed: %s\n", kTool, failure.str().c_str());
    return tools::kAssertion;
  }
  std::printf("%s: %s passed\n", kTool, path.c_str());
  return tools::kPass;
}

int export_capture(const std::string& in, const std::string& filter, const std::string& out) {
  std::ifstream f(in, std::ios::binary);
  if (!f) {
    std::fprintf(stderr, "%s: cannot read %s\n", kTool, in.c_str());
    return tools::kUsage;
  }
  std::stringstream ss;
  ss << f.rdbuf();
  tools::CString result;
  if (tl_status st = tl_capture_filter(ss.str().c_str(), filter.c_str(), result.out()); st != TL_OK) {
    return tools::report_error(kTool, st);
  }
  if (!tools::write_file(out, result.str())) {
    std::fprintf(stderr, "%s: cannot write %s\n", kTool, out.c_str());
    return tools::kUsage;
  }
  return tools::kPass;
}

std::string sibling(const char* name) {
  std::error_code ec;
  auto self = std::filesystem::read_symlink("/proc/self/exe", ec);
  if (ec) return name;
  return (self.parent_path() / name).string();
}

// Spawns bulbd on port_base, onboards it through the real sockets, switches
// the light and checks the answer. Exit 1 if the bulb does not end up as set.
int loopback(const RunArgs& a) {
  const std::string seed = std::to_string(a.seed >= 0 ? a.seed : 1);
  const std::string profile = a.profile.empty() ? "vulnerable" : a.profile;
  const std::string base = std::to_string(a.port_base);
  const std::string bulbd = sibling("bulbd");

  int pipefd[2];
  if (pipe(pipefd) != 0) return tools::kUsage;
  pid_t pid = fork();
  if (pid < 0) return tools::kUsage;
  if (pid == 0) {
    dup2(pipefd[1], STDOUT_FILENO);
    close(pipefd[0]);
    execl(bulbd.c_str(), "bulbd", "--profile", profile.c_str(), "--seed", seed.c_str(), "--port-base", base.c_str(),
          static_cast<char*>(nullptr));
    _exit(127);
  }
  close(pipefd[1]);
  // Wait for the "listening" line so the sockets are bound.
  char line[256] = {};
  FILE* child_out = fdopen(pipefd[0], "r");
  bool ready = child_out && std::fgets(line, sizeof line, child_out) && std::string(line).find("listening") == 0;

  int rc = tools::kAssertion;
  if (ready) {
    tl_app_options o{};
    o.profile = profile.c_str();
    o.seed = std::stoull(seed);
    o.discovery_port = static_cast<uint16_t>(a.port_base);
    o.timeout_ms = 1000;
    tl_app* app = nullptr;
    tools::CString setup, info;
    bool ok = tl_app_create(&o, &app) == TL_OK && tl_app_setup(app, setup.out()) == TL_OK &&
              tl_app_control(app, "{\"device_on\":false,\"brightness\":42}", info.out()) == TL_OK;
    if (ok) {
      auto j = info.str();
      ok = j.find("\"device_on\": false") != std::string::npos && j.find("\"brightness\": 42") != std::string::npos;
      std::printf("%s: loopback %s (%s profile)\n", kTool, ok ? "passed" : "failed", profile.c_str());
    } else {
      std::fprintf(stderr, "%s: loopback failed: %s\n", kTool, tl_last_error());
    }
    tl_app_free(app);
    rc = ok ? tools::kPass : tools::kAssertion;
  } else {
    std::fprintf(stderr, "%s: bulbd did not come up (%s)\n", kTool, bulbd.c_str());
  }
  kill(pid, SIGTERM);
  int status = 0;
  waitpid(pid, &status, 0);
  if (child_out) std::fclose(child_out);
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lab scripts, capture export and loopback runs"};
  app.require_subcommand(1);
  RunArgs ra;

  auto add_run_flags = [&](CLI::App* sub) {
    sub->add_option("--profile", ra.profile, "Override the script's profile")
        ->check(CLI::IsMember({"vulnerable", "hardened"}));
    sub->add_option("--seed", ra.seed, "Override the script's seed")->check(CLI::NonNegativeNumber);
  };

  auto* run = app.add_subcommand("run", "Run a lab script; exit 1 on the first failed assertion");
  run->add_option("script", ra.script, "Script path (" + std::string(kConfigEnv) + " overrides)");
  add_run_flags(run);
  run->add_option("--keyspace", ra.keyspace, "Scenario 1 keyspace bits")->check(CLI::Range(1, 32));
  run->add_flag("--full-keyspace", ra.full_keyspace, "Scan all 32 bits in scenario 1");
  run->add_option("--threads", ra.threads, "Brute-force threads (0 = all cores)");
  run->add_option("--report", ra.report, "Write reports JSON here ('-' for stdout)");
  run->add_option("--capture", ra.capture, "Write the capture log (JSONL) here");
  run->add_flag("--real-sockets", ra.real_sockets, "Run the loopback smoke instead of a script");
  run->add_option("--port-base", ra.port_base, "UDP port for --real-sockets; TCP uses the next one")
      ->check(CLI::Range(1024, 65534));

  std::string in, filter, out = "-";
  auto* exp = app.add_subcommand("export", "Filter a capture log");
  exp->add_option("capture", in, "Capture JSONL")->required();
  exp->add_option("--filter,-f", filter, "Filter expression, e.g. 'udp and broadcast'");
  exp->add_option("--out,-o", out, "Output path ('-' for stdout)");

  if (int rc = tools::parse_or_exit(app, argc, argv); rc >= 0) return rc;
  if (*exp) return export_capture(in, filter, out);
  if (ra.real_sockets) return loopback(ra);
  return run_script(ra);
}
