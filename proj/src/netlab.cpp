#include "netlab.hpp"

#include <algorithm>

#include "crypto.hpp"
#include "error.hpp"

namespace tapolab {

std::string_view to_string(Transport t) { return t == Transport::udp ? "udp" : "tcp"; }

std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::sent: return "sent";
    case Direction::delivered: return "delivered";
    case Direction::dropped: return "dropped";
    case Direction::modified: return "modified";
  }
  return "sent";
}

Json CaptureRecord::to_json() const {
  Json j;
  j["seq"] = seq;
  j["t"] = frame.timestamp_ms;
  j["dir"] = to_string(direction);
  j["net"] = frame.network;
  j["proto"] = to_string(frame.transport);
  j["src"] = frame.src;
  j["sport"] = frame.src_port;
  j["dst"] = frame.dst;
  j["dport"] = frame.dst_port;
  if (!recipient.empty()) j["to"] = recipient;
  j["payload"] = base64_encode(frame.payload);
  return j;
}

CaptureRecord CaptureRecord::from_json(const Json& j) {
  try {
    CaptureRecord r;
    r.seq = j.at("seq").get<std::uint64_t>();
    r.frame.timestamp_ms = j.at("t").get<std::int64_t>();
    auto dir = j.at("dir").get<std::string>();
    if (dir == "sent") r.direction = Direction::sent;
    else if (dir == "delivered") r.direction = Direction::delivered;
    else if (dir == "dropped") r.direction = Direction::dropped;
    else if (dir == "modified") r.direction = Direction::modified;
    else throw Error(ErrorKind::format, "unknown capture direction '" + dir + "'");
    r.frame.network = j.at("net").get<std::string>();
    auto proto = j.at("proto").get<std::string>();
    if (proto != "udp" && proto != "tcp") throw Error(ErrorKind::format, "unknown transport '" + proto + "'");
    r.frame.transport = proto == "udp" ? Transport::udp : Transport::tcp;
    r.frame.src = j.at("src").get<std::string>();
    r.frame.src_port = j.at("sport").get<std::uint16_t>();
    r.frame.dst = j.at("dst").get<std::string>();
    r.frame.dst_port = j.at("dport").get<std::uint16_t>();
    if (j.contains("to")) r.recipient = j["to"].get<std::string>();
    r.frame.payload = base64_decode(j.at("payload").get<std::string>());
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, std::string("capture record: ") + e.what());
  }
}

std::string to_jsonl(const std::vector<CaptureRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += r.to_json().dump();
    out += '\n';
  }
  return out;
}

std::vector<CaptureRecord> parse_jsonl(std::string_view text) {
  std::vector<CaptureRecord> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    auto line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorKind::parse, "capture log line is not JSON");
    out.push_back(CaptureRecord::from_json(j));
  }
  return out;
}

void BridgeHandle::teardown() {
  if (!active_) return;
  active_ = false;
  lab_->unbind_udp(side_b_, port_);
  for (auto p : reply_ports_) lab_->unbind_udp(side_a_, p);
  reply_ports_.clear();
}

NetLab::Scope::Scope(NetLab& l) : lab(l) { ++lab.depth_; }

NetLab::Scope::~Scope() {
  if (--lab.depth_ == 0) {
    while (!lab.deferred_.empty()) {
      auto pending = std::move(lab.deferred_);
      lab.deferred_.clear();
      for (auto& fn : pending) fn();
    }
  }
}

NetLab::NetLab(std::shared_ptr<VirtualClock> clock) : clock_(std::move(clock)) {
  if (!clock_) clock_ = std::make_shared<VirtualClock>();
}

void NetLab::add_network(const std::string& id, bool open) {
  if (networks_.contains(id)) throw Error(ErrorKind::network, "network '" + id + "' already exists");
  networks_[id].open = open;
}

bool NetLab::has_network(const std::string& id) const { return networks_.contains(id); }

bool NetLab::is_open(const std::string& id) const {
  auto it = networks_.find(id);
  return it != networks_.end() && it->second.open;
}

void NetLab::set_open(const std::string& id, bool open) {
  auto it = networks_.find(id);
  if (it == networks_.end()) throw Error(ErrorKind::network, "unknown network '" + id + "'");
  it->second.open = open;
}

void NetLab::attach(const EndpointId& ep, const std::string& owner) {
  auto it = networks_.find(ep.network);
  if (it == networks_.end()) throw Error(ErrorKind::network, "unknown network '" + ep.network + "'");
  if (ep.address == kBroadcastAddress) throw Error(ErrorKind::network, "cannot attach the broadcast address");
  if (auto o = owners_.find(ep); o != owners_.end()) {
    if (o->second == owner) return;
    throw Error(ErrorKind::network, "address " + ep.address + " already in use on " + ep.network);
  }
  owners_[ep] = owner;
  it->second.members.push_back(ep.address);
}

void NetLab::disconnect(const EndpointId& ep) {
  if (owners_.erase(ep) == 0) return;
  auto& members = networks_[ep.network].members;
  members.erase(std::remove(members.begin(), members.end(), ep.address), members.end());
}

bool NetLab::attached(const EndpointId& ep) const { return owners_.contains(ep); }

std::optional<std::string> NetLab::owner_of(const EndpointId& ep) const {
  auto it = owners_.find(ep);
  if (it == owners_.end()) return std::nullopt;
  return it->second;
}

void NetLab::bind_udp(const EndpointId& ep, std::uint16_t port, UdpHandler handler) {
  udp_[ep][port] = std::move(handler);
}

void NetLab::unbind_udp(const EndpointId& ep, std::uint16_t port) {
  if (auto it = udp_.find(ep); it != udp_.end()) it->second.erase(port);
}

void NetLab::bind_tcp(const EndpointId& ep, std::uint16_t port, TcpHandler handler) {
  tcp_[ep][port] = std::move(handler);
}

std::uint16_t NetLab::ephemeral_port() {
  std::uint16_t p = next_port_;
  next_port_ = next_port_ == 65535 ? 49152 : static_cast<std::uint16_t>(next_port_ + 1);
  return p;
}

void NetLab::record(Direction d, const Frame& f, const std::string& recipient) {
  capture_.push_back(CaptureRecord{capture_.size() + 1, d, f, recipient});
}

std::vector<std::string> NetLab::recipients(const Frame& f) const {
  if (!f.broadcast()) return {f.dst};
  std::vector<std::string> out;
  auto it = networks_.find(f.network);
  if (it == networks_.end()) return out;
  for (const auto& m : it->second.members) {
    if (m != f.src) out.push_back(m);
  }
  return out;
}

bool NetLab::apply_taps(Frame& f, std::size_t fan_out, std::optional<Bytes>* injected) {
  std::vector<std::size_t> ids;
  for (const auto& t : taps_) {
    if (t.network == f.network) ids.push_back(t.id);
  }
  auto drop_all = [&] {
    auto to = recipients(f);
    to.resize(fan_out);
    for (const auto& r : to) {
      record(Direction::dropped, f, r);
      ++stats_.dropped;
    }
  };
  for (auto id : ids) {
    auto it = std::find_if(taps_.begin(), taps_.end(), [id](const Tap& t) { return t.id == id; });
    if (it == taps_.end()) continue;
    TapRule rule = it->rule;
    if (rule.match && !rule.match(f)) continue;
    if (rule.observer) rule.observer(f);
    switch (rule.action) {
      case TapAction::observe:
        break;
      case TapAction::drop:
        drop_all();
        return false;
      case TapAction::modify:
        if (rule.transform) {
          f.payload = rule.transform(f);
          record(Direction::modified, f);
          ++stats_.modified;
        }
        break;
      case TapAction::inject:
        drop_all();
        if (rule.responder) *injected = rule.responder(f);
        return false;
    }
  }
  return true;
}

bool NetLab::deliver_udp(const Frame& f, const std::string& to) {
  EndpointId target{f.network, to};
  if (!attached(target)) {
    record(Direction::dropped, f, to);
    ++stats_.dropped;
    return false;
  }
  record(Direction::delivered, f, to);
  ++stats_.delivered;
  auto eps = udp_.find(target);
  if (eps == udp_.end()) return true;
  auto h = eps->second.find(f.dst_port);
  if (h == eps->second.end()) return true;
  UdpHandler handler = h->second;
  handler(f);
  return true;
}

std::size_t NetLab::send(Frame frame) {
  Scope scope(*this);
  if (!attached({frame.network, frame.src})) {
    throw Error(ErrorKind::network, "send from detached endpoint " + frame.src + " on " + frame.network);
  }
  frame.transport = Transport::udp;
  frame.timestamp_ms = clock_->now_ms();
  auto to = recipients(frame);
  ++stats_.sent;
  stats_.fan_out += to.size();
  record(Direction::sent, frame);

  std::optional<Bytes> injected;
  if (!apply_taps(frame, to.size(), &injected)) {
    if (injected && !frame.broadcast()) {
      Frame reply{frame.network, frame.dst, frame.dst_port, frame.src, frame.src_port,
                  Transport::udp, std::move(*injected), clock_->now_ms()};
      ++stats_.sent;
      ++stats_.fan_out;
      record(Direction::sent, reply);
      deliver_udp(reply, reply.dst);
    }
    return 0;
  }
  std::size_t delivered = 0;
  for (const auto& r : to) {
    if (deliver_udp(frame, r)) ++delivered;
  }
  return delivered;
}

std::optional<Bytes> NetLab::exchange(Frame request) {
  Scope scope(*this);
  if (!attached({request.network, request.src})) {
    throw Error(ErrorKind::network, "connect from detached endpoint " + request.src + " on " + request.network);
  }
  request.transport = Transport::tcp;
  request.timestamp_ms = clock_->now_ms();
  ++stats_.sent;
  ++stats_.fan_out;
  record(Direction::sent, request);

  auto reply_frame = [&](Bytes payload) {
    return Frame{request.network, request.dst, request.dst_port, request.src, request.src_port,
                 Transport::tcp, std::move(payload), clock_->now_ms()};
  };
  auto finish = [&](Frame reply) -> std::optional<Bytes> {
    if (!attached({reply.network, reply.dst})) {
      record(Direction::dropped, reply, reply.dst);
      ++stats_.dropped;
      return std::nullopt;
    }
    record(Direction::delivered, reply, reply.dst);
    ++stats_.delivered;
    return std::move(reply.payload);
  };

  std::optional<Bytes> injected;
  if (!apply_taps(request, 1, &injected)) {
    if (!injected) return std::nullopt;
    Frame reply = reply_frame(std::move(*injected));
    ++stats_.sent;
    ++stats_.fan_out;
    record(Direction::sent, reply);
    return finish(std::move(reply));
  }

  EndpointId target{request.network, request.dst};
  TcpHandler handler;
  if (attached(target)) {
    if (auto eps = tcp_.find(target); eps != tcp_.end()) {
      if (auto h = eps->second.find(request.dst_port); h != eps->second.end()) handler = h->second;
    }
  }
  if (!handler) {
    record(Direction::dropped, request, request.dst);
    ++stats_.dropped;
    return std::nullopt;
  }
  record(Direction::delivered, request, request.dst);
  ++stats_.delivered;

  Frame reply = reply_frame(handler(request));
  ++stats_.sent;
  ++stats_.fan_out;
  record(Direction::sent, reply);
  std::optional<Bytes> reply_injected;
  if (!apply_taps(reply, 1, &reply_injected)) {
    if (!reply_injected) return std::nullopt;
    Frame spoofed = reply_frame(std::move(*reply_injected));
    ++stats_.sent;
    ++stats_.fan_out;
    record(Direction::sent, spoofed);
    return finish(std::move(spoofed));
  }
  return finish(std::move(reply));
}

void NetLab::grant_control(const std::string& network, const std::string& owner) {
  auto it = networks_.find(network);
  if (it == networks_.end()) throw Error(ErrorKind::network, "unknown network '" + network + "'");
  if (std::find(it->second.controllers.begin(), it->second.controllers.end(), owner) ==
      it->second.controllers.end()) {
    it->second.controllers.push_back(owner);
  }
}

std::size_t NetLab::install_tap(const std::string& network, TapRule rule) {
  auto it = networks_.find(network);
  if (it == networks_.end()) throw Error(ErrorKind::network, "unknown network '" + network + "'");
  const auto& ctl = it->second.controllers;
  if (std::find(ctl.begin(), ctl.end(), rule.owner) == ctl.end()) {
    throw Error(ErrorKind::precondition, rule.owner + " has no control over " + network);
  }
  bool present = std::any_of(owners_.begin(), owners_.end(), [&](const auto& kv) {
    return kv.first.network == network && kv.second == rule.owner;
  });
  if (!present) throw Error(ErrorKind::precondition, rule.owner + " is not attached to " + network);
  std::size_t id = next_tap_++;
  taps_.push_back(Tap{id, network, std::move(rule)});
  return id;
}

void NetLab::remove_tap(std::size_t id) {
  taps_.erase(std::remove_if(taps_.begin(), taps_.end(), [id](const Tap& t) { return t.id == id; }),
              taps_.end());
}

std::shared_ptr<BridgeHandle> NetLab::bridge(const std::string& owner, const EndpointId& side_a,
                                             const EndpointId& side_b, std::uint16_t port,
                                             std::function<bool(const Frame&)> filter) {
  if (owner_of(side_a) != owner || owner_of(side_b) != owner) {
    throw Error(ErrorKind::network, "bridge requires " + owner + " on both networks");
  }
  auto handle = std::make_shared<BridgeHandle>(*this, side_a, side_b, port);
  std::weak_ptr<BridgeHandle> weak = handle;
  bind_udp(side_b, port, [this, weak, side_a, side_b, port, filter = std::move(filter)](const Frame& f) {
    auto h = weak.lock();
    if (!h || !h->active_ || (filter && !filter(f))) return;
    if (!attached(side_a) || !attached(side_b)) return;
    std::uint16_t relay_port = ephemeral_port();
    h->reply_ports_.push_back(relay_port);
    std::string origin = f.src;
    std::uint16_t origin_port = f.src_port;
    bind_udp(side_a, relay_port, [this, weak, side_b, port, origin, origin_port](const Frame& reply) {
      auto hb = weak.lock();
      if (!hb || !hb->active_ || !attached(side_b)) return;
      ++hb->relayed_;
      send(Frame{side_b.network, side_b.address, port, origin, origin_port, Transport::udp, reply.payload, 0});
    });
    ++h->relayed_;
    send(Frame{side_a.network, side_a.address, relay_port, std::string(kBroadcastAddress), f.dst_port,
               Transport::udp, f.payload, 0});
  });
  return handle;
}

void NetLab::defer(std::function<void()> fn) {
  if (depth_ == 0) {
    fn();
    return;
  }
  deferred_.push_back(std::move(fn));
}

}  // namespace tapolab
