#pragma once

// Loopback real-socket mode. The bulb listens on a UDP discovery port and a
// TCP HTTP port; the app side talks to it through ordinary sockets. Loopback
// has no broadcast domain, so "broadcast" is a unicast to the configured
// target address.

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <thread>

#include "app.hpp"
#include "bulb.hpp"

namespace tapolab {

struct SocketEndpoints {
  std::string address = "127.0.0.1";
  std::uint16_t udp_port = 0;  // 0 picks a free port
  std::uint16_t tcp_port = 0;
};

class BulbServer {
 public:
  /// Binds both sockets immediately; throws network on failure.
  BulbServer(Bulb& bulb, SocketEndpoints where);
  ~BulbServer();
  BulbServer(const BulbServer&) = delete;
  BulbServer& operator=(const BulbServer&) = delete;

  void start();
  void stop();
  bool running() const { return running_; }
  std::uint16_t udp_port() const { return udp_port_; }
  std::uint16_t tcp_port() const { return tcp_port_; }

 private:
  void udp_loop();
  void tcp_loop();

  Bulb& bulb_;
  int udp_fd_ = -1;
  int tcp_fd_ = -1;
  std::uint16_t udp_port_ = 0;
  std::uint16_t tcp_port_ = 0;
  std::atomic<bool> running_{false};
  std::thread udp_thread_, tcp_thread_;
};

class SocketTransport final : public AppTransport {
 public:
  /// discovery_port replaces the well-known port on broadcast.
  SocketTransport(std::string target_address, std::uint16_t discovery_port);

  std::vector<Datagram> broadcast(const Bytes& payload, std::uint16_t port, int timeout_ms) override;
  std::optional<std::string> http(const std::string& host, std::uint16_t port, const std::string& request) override;
  std::string local_address() const override { return "127.0.0.1"; }

 private:
  std::string target_;
  std::uint16_t discovery_port_;
};

}  // namespace tapolab
