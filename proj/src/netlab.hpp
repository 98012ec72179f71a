#pragma once

// Deterministic in-process virtual network. Delivery is synchronous and
// depth-first: a handler that sends while handling a frame runs to completion
// before the outer send returns, so a given script always yields the same
// event order.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bytes.hpp"
#include "clock.hpp"
#include "json_value.hpp"

namespace tapolab {

inline constexpr std::string_view kBroadcastAddress = "255.255.255.255";

enum class Transport { udp, tcp };
std::string_view to_string(Transport t);

struct Frame {
  std::string network;
  std::string src;
  std::uint16_t src_port = 0;
  std::string dst;
  std::uint16_t dst_port = 0;
  Transport transport = Transport::udp;
  Bytes payload;
  std::int64_t timestamp_ms = 0;

  bool broadcast() const { return dst == kBroadcastAddress; }
};

enum class Direction { sent, delivered, dropped, modified };
std::string_view to_string(Direction d);

struct CaptureRecord {
  std::uint64_t seq = 0;
  Direction direction = Direction::sent;
  Frame frame;
  std::string recipient;  // delivered/dropped only

  Json to_json() const;
  static CaptureRecord from_json(const Json& j);
};

std::string to_jsonl(const std::vector<CaptureRecord>& records);
std::vector<CaptureRecord> parse_jsonl(std::string_view text);

struct EndpointId {
  std::string network;
  std::string address;
  auto operator<=>(const EndpointId&) const = default;
};

enum class TapAction { observe, drop, modify, inject };

struct TapRule {
  std::string owner;
  std::function<bool(const Frame&)> match;
  TapAction action = TapAction::observe;
  // Called for every matched frame, whatever the action.
  std::function<void(const Frame&)> observer;
  // modify: replacement payload.
  std::function<Bytes(const Frame&)> transform;
  // inject: consumes the frame and answers in place of its destination.
  std::function<std::optional<Bytes>(const Frame&)> responder;
};

using UdpHandler = std::function<void(const Frame&)>;
using TcpHandler = std::function<Bytes(const Frame&)>;

class NetLab;

class BridgeHandle {
 public:
  BridgeHandle(NetLab& lab, EndpointId a, EndpointId b, std::uint16_t port)
      : lab_(&lab), side_a_(std::move(a)), side_b_(std::move(b)), port_(port) {}
  void teardown();
  bool active() const { return active_; }
  std::size_t relayed() const { return relayed_; }

 private:
  friend class NetLab;
  NetLab* lab_;
  EndpointId side_a_, side_b_;
  std::uint16_t port_;
  std::vector<std::uint16_t> reply_ports_;
  std::size_t relayed_ = 0;
  bool active_ = true;
};

struct NetStats {
  std::uint64_t sent = 0;
  std::uint64_t fan_out = 0;  // sum over sent frames of intended recipients
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::uint64_t modified = 0;
};

class NetLab {
 public:
  explicit NetLab(std::shared_ptr<VirtualClock> clock);

  void add_network(const std::string& id, bool open = false);
  bool has_network(const std::string& id) const;
  bool is_open(const std::string& id) const;
  void set_open(const std::string& id, bool open);

  /// Throws network on unknown network or an address already in use.
  void attach(const EndpointId& ep, const std::string& owner);
  /// Detaches ep (the deauthentication primitive). No-op when not attached;
  /// port bindings survive and come back on re-attach.
  void disconnect(const EndpointId& ep);
  bool attached(const EndpointId& ep) const;
  std::optional<std::string> owner_of(const EndpointId& ep) const;

  void bind_udp(const EndpointId& ep, std::uint16_t port, UdpHandler handler);
  void unbind_udp(const EndpointId& ep, std::uint16_t port);
  void bind_tcp(const EndpointId& ep, std::uint16_t port, TcpHandler handler);
  std::uint16_t ephemeral_port();

  /// Datagram send. Returns the number of deliveries. Throws network when
  /// the source endpoint is detached.
  std::size_t send(Frame frame);
  /// One TCP request/response round-trip; nullopt when the request or the
  /// reply never arrives.
  std::optional<Bytes> exchange(Frame request);

  /// Full tap rights over a network (attacker-controlled or ARP-spoofed).
  void grant_control(const std::string& network, const std::string& owner);
  /// Throws precondition unless owner has an attached endpoint on the
  /// network and holds control over it.
  std::size_t install_tap(const std::string& network, TapRule rule);
  void remove_tap(std::size_t id);

  /// Relays datagrams arriving at side_b on `port` that satisfy filter onto
  /// side_a's network, and routes replies back to the original sender.
  std::shared_ptr<BridgeHandle> bridge(const std::string& owner, const EndpointId& side_a,
                                       const EndpointId& side_b, std::uint16_t port,
                                       std::function<bool(const Frame&)> filter);

  /// Runs fn once the outermost send/exchange has returned.
  void defer(std::function<void()> fn);

  const std::vector<CaptureRecord>& capture() const { return capture_; }
  std::string capture_jsonl() const { return to_jsonl(capture_); }
  const NetStats& stats() const { return stats_; }
  VirtualClock& clock() { return *clock_; }
  std::shared_ptr<VirtualClock> clock_ptr() const { return clock_; }

 private:
  struct Network {
    bool open = false;
    std::vector<std::string> members;  // attach order
    std::vector<std::string> controllers;
  };
  struct Tap {
    std::size_t id;
    std::string network;
    TapRule rule;
  };
  struct Scope {
    explicit Scope(NetLab& lab);
    ~Scope();
    NetLab& lab;
  };

  void record(Direction d, const Frame& f, const std::string& recipient = {});
  std::vector<std::string> recipients(const Frame& f) const;
  // Runs taps; returns false when the frame was consumed (drop/inject).
  bool apply_taps(Frame& f, std::size_t fan_out, std::optional<Bytes>* injected);
  bool deliver_udp(const Frame& f, const std::string& to);

  std::shared_ptr<VirtualClock> clock_;
  std::map<std::string, Network> networks_;
  std::map<EndpointId, std::string> owners_;
  std::map<EndpointId, std::map<std::uint16_t, UdpHandler>> udp_;
  std::map<EndpointId, std::map<std::uint16_t, TcpHandler>> tcp_;
  std::vector<Tap> taps_;
  std::vector<CaptureRecord> capture_;
  std::vector<std::function<void()>> deferred_;
  NetStats stats_;
  std::size_t next_tap_ = 1;
  std::uint16_t next_port_ = 49152;
  int depth_ = 0;
};

}  // namespace tapolab
