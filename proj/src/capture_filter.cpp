#include "capture_filter.hpp"

#include <cctype>
#include <charconv>
#include <functional>

#include "error.hpp"

namespace tapolab {

struct CaptureFilter::Node {
  std::function<bool(const CaptureRecord&)> eval;
};

namespace {

using NodePtr = std::shared_ptr<const CaptureFilter::Node>;

NodePtr leaf(std::function<bool(const CaptureRecord&)> fn) {
  return std::make_shared<CaptureFilter::Node>(CaptureFilter::Node{std::move(fn)});
}

std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '(' || c == ')') {
      out.emplace_back(1, c);
      ++i;
    } else if ((c == '&' || c == '|' || c == '=') && i + 1 < s.size() && s[i + 1] == c) {
      out.emplace_back(2, c);
      i += 2;
    } else if (c == '!' && !(i + 1 < s.size() && s[i + 1] == '=')) {
      out.emplace_back("!");
      ++i;
    } else {
      std::size_t j = i;
      while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j])) && s[j] != '(' && s[j] != ')' &&
             !(s[j] == '=' && j + 1 < s.size() && s[j + 1] == '=')) {
        if ((s[j] == '&' || s[j] == '|') && j + 1 < s.size() && s[j + 1] == s[j]) break;
        ++j;
      }
      out.emplace_back(s.substr(i, j - i));
      i = j;
    }
  }
  return out;
}

class Parser {
 public:
  explicit Parser(std::vector<std::string> toks) : toks_(std::move(toks)) {}

  NodePtr parse() {
    NodePtr n = parse_or();
    if (pos_ != toks_.size()) throw Error(ErrorKind::parse, "unexpected '" + toks_[pos_] + "' in filter");
    return n;
  }

 private:
  bool accept(std::string_view a, std::string_view b = {}) {
    if (pos_ < toks_.size() && (toks_[pos_] == a || (!b.empty() && toks_[pos_] == b))) {
      ++pos_;
      return true;
    }
    return false;
  }
  std::string next(const char* what) {
    if (pos_ >= toks_.size()) throw Error(ErrorKind::parse, std::string("filter ends where ") + what + " was expected");
    return toks_[pos_++];
  }
  std::uint16_t number(const char* what) {
    std::string t = next(what);
    unsigned v = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || p != t.data() + t.size() || v > 65535) {
      throw Error(ErrorKind::parse, "bad port '" + t + "' in filter");
    }
    return static_cast<std::uint16_t>(v);
  }
  void expect_eq() {
    if (!accept("==")) throw Error(ErrorKind::parse, "expected '==' in filter");
  }

  NodePtr parse_or() {
    NodePtr lhs = parse_and();
    while (accept("or", "||")) {
      NodePtr rhs = parse_and();
      lhs = leaf([lhs, rhs](const CaptureRecord& r) { return lhs->eval(r) || rhs->eval(r); });
    }
    return lhs;
  }
  NodePtr parse_and() {
    NodePtr lhs = parse_unary();
    while (accept("and", "&&")) {
      NodePtr rhs = parse_unary();
      lhs = leaf([lhs, rhs](const CaptureRecord& r) { return lhs->eval(r) && rhs->eval(r); });
    }
    return lhs;
  }
  NodePtr parse_unary() {
    if (accept("not", "!")) {
      NodePtr inner = parse_unary();
      return leaf([inner](const CaptureRecord& r) { return !inner->eval(r); });
    }
    if (accept("(")) {
      NodePtr inner = parse_or();
      if (!accept(")")) throw Error(ErrorKind::parse, "missing ')' in filter");
      return inner;
    }
    return parse_term();
  }

  NodePtr port_term(std::optional<Transport> t, bool src, bool dst, std::uint16_t p) {
    return leaf([=](const CaptureRecord& r) {
      if (t && r.frame.transport != *t) return false;
      return (src && r.frame.src_port == p) || (dst && r.frame.dst_port == p);
    });
  }
  NodePtr addr_term(bool src, bool dst, std::string a) {
    return leaf([=](const CaptureRecord& r) { return (src && r.frame.src == a) || (dst && r.frame.dst == a); });
  }
  NodePtr dir_term(Direction d) {
    return leaf([d](const CaptureRecord& r) { return r.direction == d; });
  }

  NodePtr parse_term() {
    std::string t = next("a term");
    if (t == "udp") return leaf([](const CaptureRecord& r) { return r.frame.transport == Transport::udp; });
    if (t == "tcp") return leaf([](const CaptureRecord& r) { return r.frame.transport == Transport::tcp; });
    if (t == "broadcast") return leaf([](const CaptureRecord& r) { return r.frame.broadcast(); });
    if (t == "sent") return dir_term(Direction::sent);
    if (t == "delivered") return dir_term(Direction::delivered);
    if (t == "dropped") return dir_term(Direction::dropped);
    if (t == "modified") return dir_term(Direction::modified);
    if (t == "port") return port_term(std::nullopt, true, true, number("a port"));
    if (t == "sport") return port_term(std::nullopt, true, false, number("a port"));
    if (t == "dport") return port_term(std::nullopt, false, true, number("a port"));
    if (t == "src") return addr_term(true, false, next("an address"));
    if (t == "dst") return addr_term(false, true, next("an address"));
    if (t == "host") return addr_term(true, true, next("an address"));
    if (t == "net") {
      std::string id = next("a network id");
      return leaf([id](const CaptureRecord& r) { return r.frame.network == id; });
    }
    if (t == "ip.src" || t == "ip.dst" || t == "ip.addr") {
      expect_eq();
      return addr_term(t != "ip.dst", t != "ip.src", next("an address"));
    }
    if (t == "udp.port" || t == "tcp.port") {
      expect_eq();
      return port_term(t == "udp.port" ? Transport::udp : Transport::tcp, true, true, number("a port"));
    }
    throw Error(ErrorKind::parse, "unknown filter term '" + t + "'");
  }

  std::vector<std::string> toks_;
  std::size_t pos_ = 0;
};

}  // namespace

CaptureFilter CaptureFilter::parse(std::string_view text) {
  CaptureFilter f;
  auto toks = tokenize(text);
  if (!toks.empty()) f.root_ = Parser(std::move(toks)).parse();
  return f;
}

bool CaptureFilter::matches(const CaptureRecord& r) const { return !root_ || root_->eval(r); }

std::vector<CaptureRecord> filter_capture(const std::vector<CaptureRecord>& records, const CaptureFilter& f) {
  std::vector<CaptureRecord> out;
  for (const auto& r : records) {
    if (f.matches(r)) out.push_back(r);
  }
  return out;
}

std::string export_capture(std::string_view jsonl, std::string_view filter) {
  CaptureFilter f = CaptureFilter::parse(filter);
  if (f.match_all()) return std::string(jsonl);
  return to_jsonl(filter_capture(parse_jsonl(jsonl), f));
}

}  // namespace tapolab
