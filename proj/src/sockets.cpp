#include "sockets.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

#include "error.hpp"
#include "rpc.hpp"

namespace tapolab {

namespace {

constexpr int kPollMs = 50;

[[noreturn]] void sys_fail(const std::string& what) {
  throw Error(ErrorKind::network, what + ": " + std::strerror(errno));
}

sockaddr_in make_addr(const std::string& host, std::uint16_t port) {
  sockaddr_in a{};
  a.sin_family = AF_INET;
  a.sin_port = htons(port);
  if (inet_pton(AF_INET, host.c_str(), &a.sin_addr) != 1) {
    throw Error(ErrorKind::argument, "not an IPv4 address: " + host);
  }
  return a;
}

std::uint16_t bound_port(int fd) {
  sockaddr_in a{};
  socklen_t len = sizeof a;
  if (getsockname(fd, reinterpret_cast<sockaddr*>(&a), &len) != 0) sys_fail("getsockname");
  return ntohs(a.sin_port);
}

int open_bound(int type, const std::string& host, std::uint16_t port) {
  int fd = ::socket(AF_INET, type, 0);
  if (fd < 0) sys_fail("socket");
  int one = 1;
  setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in a = make_addr(host, port);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&a), sizeof a) != 0) {
    int saved = errno;
    ::close(fd);
    errno = saved;
    sys_fail("bind " + host + ":" + std::to_string(port));
  }
  return fd;
}

bool readable(int fd, int timeout_ms) {
  pollfd p{fd, POLLIN, 0};
  return ::poll(&p, 1, timeout_ms) > 0 && (p.revents & POLLIN);
}

// Reads one complete HTTP message (headers plus Content-Length body).
std::optional<std::string> read_message(int fd, int timeout_ms) {
  std::string buf;
  char chunk[4096];
  while (true) {
    if (auto need = http_message_length(buf); need && buf.size() >= *need) return buf.substr(0, *need);
    if (!readable(fd, timeout_ms)) return std::nullopt;
    ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n <= 0) return buf.empty() ? std::nullopt : std::optional<std::string>(buf);
    buf.append(chunk, static_cast<std::size_t>(n));
  }
}

void write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n <= 0) return;
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

}  // namespace

BulbServer::BulbServer(Bulb& bulb, SocketEndpoints where) : bulb_(bulb) {
  udp_fd_ = open_bound(SOCK_DGRAM, where.address, where.udp_port);
  try {
    tcp_fd_ = open_bound(SOCK_STREAM, where.address, where.tcp_port);
    if (::listen(tcp_fd_, 16) != 0) sys_fail("listen");
  } catch (...) {
    ::close(udp_fd_);
    if (tcp_fd_ >= 0) ::close(tcp_fd_);
    throw;
  }
  udp_port_ = bound_port(udp_fd_);
  tcp_port_ = bound_port(tcp_fd_);
}

BulbServer::~BulbServer() {
  stop();
  ::close(udp_fd_);
  ::close(tcp_fd_);
}

void BulbServer::start() {
  if (running_.exchange(true)) return;
  udp_thread_ = std::thread([this] { udp_loop(); });
  tcp_thread_ = std::thread([this] { tcp_loop(); });
}

void BulbServer::stop() {
  if (!running_.exchange(false)) return;
  if (udp_thread_.joinable()) udp_thread_.join();
  if (tcp_thread_.joinable()) tcp_thread_.join();
}

void BulbServer::udp_loop() {
  std::uint8_t buf[2048];
  while (running_) {
    if (!readable(udp_fd_, kPollMs)) continue;
    sockaddr_in from{};
    socklen_t len = sizeof from;
    ssize_t n = ::recvfrom(udp_fd_, buf, sizeof buf, 0, reinterpret_cast<sockaddr*>(&from), &len);
    if (n <= 0) continue;
    if (auto reply = bulb_.handle_discovery(ByteView(buf, static_cast<std::size_t>(n)))) {
      ::sendto(udp_fd_, reply->data(), reply->size(), 0, reinterpret_cast<sockaddr*>(&from), len);
    }
  }
}

void BulbServer::tcp_loop() {
  while (running_) {
    if (!readable(tcp_fd_, kPollMs)) continue;
    int c = ::accept(tcp_fd_, nullptr, nullptr);
    if (c < 0) continue;
    // One request per connection, served inline: the bulb is single-user.
    if (auto req = read_message(c, 2000)) write_all(c, bulb_.handle_http(*req));
    ::close(c);
  }
}

SocketTransport::SocketTransport(std::string target_address, std::uint16_t discovery_port)
    : target_(std::move(target_address)), discovery_port_(discovery_port) {}

std::vector<Datagram> SocketTransport::broadcast(const Bytes& payload, std::uint16_t port, int timeout_ms) {
  int fd = open_bound(SOCK_DGRAM, "0.0.0.0", 0);
  std::vector<Datagram> out;
  sockaddr_in to = make_addr(target_, port == kDiscoveryPort ? discovery_port_ : port);
  if (::sendto(fd, payload.data(), payload.size(), 0, reinterpret_cast<sockaddr*>(&to), sizeof to) < 0) {
    ::close(fd);
    sys_fail("sendto");
  }
  using clock = std::chrono::steady_clock;
  const auto deadline = clock::now() + std::chrono::milliseconds(timeout_ms);
  std::uint8_t buf[2048];
  while (true) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now()).count();
    if (left <= 0 || !readable(fd, static_cast<int>(left))) break;
    sockaddr_in from{};
    socklen_t len = sizeof from;
    ssize_t n = ::recvfrom(fd, buf, sizeof buf, 0, reinterpret_cast<sockaddr*>(&from), &len);
    if (n <= 0) continue;
    char ip[INET_ADDRSTRLEN] = {};
    inet_ntop(AF_INET, &from.sin_addr, ip, sizeof ip);
    out.push_back(Datagram{ip, Bytes(buf, buf + n)});
    // A single bulb answers once; stop early instead of idling out the window.
    break;
  }
  ::close(fd);
  return out;
}

std::optional<std::string> SocketTransport::http(const std::string& host, std::uint16_t port,
                                                 const std::string& request) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) sys_fail("socket");
  sockaddr_in a = make_addr(host, port);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&a), sizeof a) != 0) {
    ::close(fd);
    return std::nullopt;
  }
  write_all(fd, request);
  auto reply = read_message(fd, 5000);
  ::close(fd);
  return reply;
}

}  // namespace tapolab
