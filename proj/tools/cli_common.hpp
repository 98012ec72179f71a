#pragma once

// Shared bits for the command-line tools. Everything here goes through the
// C interface only.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "tapolab/tapolab.h"

namespace tools {

enum Exit { kPass = 0, kAssertion = 1, kUsage = 2 };

// Owns a malloc'd string from the C API.
struct CString {
  char* p = nullptr;
  ~CString() { tl_free(p); }
  char** out() { return &p; }
  std::string str() const { return p ? p : ""; }
};

inline int report_error(const char* tool, tl_status st) {
  std::fprintf(stderr, "%s: %s\n", tool, tl_last_error());
  return st == TL_E_ARGUMENT || st == TL_E_PARSE || st == TL_E_SCRIPT || st == TL_E_IO ? kUsage : kAssertion;
}

inline constexpr const char* kConfigEnv = "TAPOLAB_CONFIG";

// key=value config file. The environment variable, when set, wins over the
// flag.
inline void add_config(CLI::App& app) {
  app.set_config("--config", "", "key=value settings file (" + std::string(kConfigEnv) + " overrides)")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
}

inline int parse_or_exit(CLI::App& app, int argc, char** argv) {
  if (app.get_name().empty() && argc > 0) {
    std::string self = argv[0];
    app.name(self.substr(self.find_last_of('/') + 1));
  }
  std::vector<std::string> args(argv + 1, argv + argc);
  if (const char* env = std::getenv(kConfigEnv); env && *env && app.get_config_ptr()) {
    args.push_back(std::string("--config=") + env);
  }
  std::reverse(args.begin(), args.end());  // CLI11 takes the vector reversed
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  return -1;
}

inline bool write_file(const std::string& path, const std::string& data) {
  if (path == "-") {
    std::cout << data;
    return true;
  }
  std::ofstream f(path, std::ios::binary);
  f << data;
  return static_cast<bool>(f);
}

inline bool parse_secret(const std::string& hex, uint32_t& out) {
  if (hex.size() != 8) return false;
  try {
    std::size_t used = 0;
    out = static_cast<uint32_t>(std::stoul(hex, &used, 16));
    return used == 8;
  } catch (...) {
    return false;
  }
}

}  // namespace tools
