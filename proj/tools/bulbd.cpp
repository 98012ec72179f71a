// bulbd: one bulb on real loopback sockets until SIGINT/SIGTERM or --duration-ms.

#include <signal.h>

#include <atomic>
#include <chrono>
#include <thread>

#include "cli_common.hpp"

namespace {

std::atomic<bool> g_stop{false};
void on_signal(int) { g_stop = true; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Run a bulb on loopback sockets"};
  std::string profile = "vulnerable", name = "bulb", address = "127.0.0.1", secret_hex, state_out;
  std::string email, password, ssid, wifi_password;
  uint64_t seed = 1;
  int port_base = 20002;
  int duration_ms = 0;
  app.add_option("--profile", profile)->check(CLI::IsMember({"vulnerable", "hardened"}));
  app.add_option("--seed", seed, "Shared with appctl; derives identity and cloud keys");
  app.add_option("--name", name, "Actor name (identity derivation)");
  app.add_option("--address", address);
  app.add_option("--port-base", port_base, "UDP discovery port; HTTP listens on the next one")
      ->check(CLI::Range(0, 65534));
  app.add_option("--secret", secret_hex, "Checksum secret, 8 hex digits");
  app.add_option("--owner-email", email, "Pre-provision for this account");
  app.add_option("--owner-password", password);
  app.add_option("--ssid", ssid);
  app.add_option("--wifi-password", wifi_password);
  app.add_option("--duration-ms", duration_ms, "Stop after this long (0 = until signalled)");
  app.add_option("--state-out", state_out, "Write final device state JSON here on exit");
  tools::add_config(app);
  if (int rc = tools::parse_or_exit(app, argc, argv); rc >= 0) return rc;

  tl_bulb_options o{};
  o.name = name.c_str();
  o.profile = profile.c_str();
  o.seed = seed;
  if (!secret_hex.empty()) {
    if (!tools::parse_secret(secret_hex, o.secret)) {
      std::fprintf(stderr, "bulbd: --secret needs 8 hex digits\n");
      return tools::kUsage;
    }
    o.has_secret = 1;
  }
  if (!email.empty()) {
    o.email = email.c_str();
    o.password = password.c_str();
    o.ssid = ssid.c_str();
    o.wifi_password = wifi_password.c_str();
  }

  tl_bulb* bulb = nullptr;
  if (tl_status st = tl_bulb_create(&o, &bulb); st != TL_OK) return tools::report_error("bulbd", st);
  std::unique_ptr<tl_bulb, decltype(&tl_bulb_free)> guard(bulb, tl_bulb_free);
  const auto udp = static_cast<uint16_t>(port_base);
  const auto tcp = static_cast<uint16_t>(port_base ? port_base + 1 : 0);
  if (tl_status st = tl_bulb_serve(bulb, address.c_str(), udp, tcp); st != TL_OK) {
    return tools::report_error("bulbd", st);
  }
  uint16_t bound_udp = 0, bound_tcp = 0;
  tl_bulb_ports(bulb, &bound_udp, &bound_tcp);
  std::printf("listening udp=%u tcp=%u profile=%s\n", bound_udp, bound_tcp, profile.c_str());
  std::fflush(stdout);

  signal(SIGINT, on_signal);
  signal(SIGTERM, on_signal);
  const auto until = std::chrono::steady_clock::now() + std::chrono::milliseconds(duration_ms);
  while (!g_stop && (duration_ms == 0 || std::chrono::steady_clock::now() < until)) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  tl_bulb_stop(bulb);

  if (!state_out.empty()) {
    tools::CString state;
    tl_bulb_state_json(bulb, state.out());
    tools::write_file(state_out, state.str() + "\n");
  }
  return tools::kPass;
}
