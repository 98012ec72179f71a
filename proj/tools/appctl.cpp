// appctl: discover, onboard and control a bulb over loopback sockets.

#include <optional>

#include "cli_common.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Companion app over loopback sockets"};
  app.require_subcommand(1);
  std::string profile = "vulnerable", target = "127.0.0.1", secret_hex;
  std::string email = "alice@example.com", password = "S3cret-Passw0rd!";
  std::string ssid = "HomeNet", wifi_password = "correct horse battery staple";
  uint64_t seed = 1;
  int port_base = 20002, timeout_ms = 1000;
  app.add_option("--profile", profile)->check(CLI::IsMember({"vulnerable", "hardened"}));
  app.add_option("--seed", seed, "Must match bulbd for the hardened profile");
  app.add_option("--target", target, "Bulb address");
  app.add_option("--port-base", port_base, "Bulb's UDP discovery port")->check(CLI::Range(1, 65535));
  app.add_option("--timeout-ms", timeout_ms);
  app.add_option("--secret", secret_hex, "Checksum secret, 8 hex digits");
  app.add_option("--email", email);
  app.add_option("--password", password);
  app.add_option("--ssid", ssid);
  app.add_option("--wifi-password", wifi_password);

  bool unconfigured = false;
  auto* discover = app.add_subcommand("discover", "Print discovered bulbs as JSON");
  discover->add_flag("--unconfigured", unconfigured, "Look for bulbs in setup mode instead of owned ones");
  auto* setup = app.add_subcommand("setup", "Onboard the first bulb in setup mode");
  auto* control = app.add_subcommand("control", "Change the light and print device info");
  std::optional<bool> on;
  std::optional<int> brightness, hue, saturation, color_temp;
  control->add_flag("--on{true},--off{false}", on, "Switch on or off");
  control->add_option("--brightness", brightness)->check(CLI::Range(1, 100));
  control->add_option("--hue", hue)->check(CLI::Range(0, 359));
  control->add_option("--saturation", saturation)->check(CLI::Range(0, 100));
  control->add_option("--color-temp", color_temp)->check(CLI::Range(2500, 6500));
  tools::add_config(app);
  if (int rc = tools::parse_or_exit(app, argc, argv); rc >= 0) return rc;

  tl_app_options o{};
  o.profile = profile.c_str();
  o.seed = seed;
  o.email = email.c_str();
  o.password = password.c_str();
  o.ssid = ssid.c_str();
  o.wifi_password = wifi_password.c_str();
  o.target = target.c_str();
  o.discovery_port = static_cast<uint16_t>(port_base);
  o.timeout_ms = timeout_ms;
  if (!secret_hex.empty()) {
    if (!tools::parse_secret(secret_hex, o.secret)) {
      std::fprintf(stderr, "appctl: --secret needs 8 hex digits\n");
      return tools::kUsage;
    }
    o.has_secret = 1;
  }
  tl_app* handle = nullptr;
  if (tl_status st = tl_app_create(&o, &handle); st != TL_OK) return tools::report_error("appctl", st);
  std::unique_ptr<tl_app, decltype(&tl_app_free)> guard(handle, tl_app_free);

  tools::CString out;
  tl_status st = TL_OK;
  if (*discover) {
    st = tl_app_discover(handle, unconfigured, out.out());
  } else if (*setup) {
    st = tl_app_setup(handle, out.out());
  } else {
    std::string delta = "{";
    auto field = [&](const char* k, const std::string& v) {
      if (delta.size() > 1) delta += ",";
      delta += "\"" + std::string(k) + "\":" + v;
    };
    if (on) field("device_on", *on ? "true" : "false");
    if (brightness) field("brightness", std::to_string(*brightness));
    if (hue) field("hue", std::to_string(*hue));
    if (saturation) field("saturation", std::to_string(*saturation));
    if (color_temp) field("color_temp", std::to_string(*color_temp));
    delta += "}";
    st = tl_app_control(handle, delta.c_str(), out.out());
  }
  if (st != TL_OK) return tools::report_error("appctl", st);
  std::printf("%s\n", out.str().c_str());
  return tools::kPass;
}
