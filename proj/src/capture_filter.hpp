#pragma once

// Display filters over capture logs.
//
//   expr   := or
//   or     := and (("or" | "||") and)*
//   and    := unary (("and" | "&&") unary)*
//   unary  := ("not" | "!") unary | "(" expr ")" | term
//   term   := udp | tcp | broadcast | sent | delivered | dropped | modified
//           | port N | sport N | dport N | src ADDR | dst ADDR | host ADDR | net ID
//           | ip.src == ADDR | ip.dst == ADDR | ip.addr == ADDR
//           | udp.port == N | tcp.port == N

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "netlab.hpp"

namespace tapolab {

class CaptureFilter {
 public:
  struct Node;

  /// Empty or blank text matches everything. Throws Error{parse}.
  static CaptureFilter parse(std::string_view text);

  bool matches(const CaptureRecord& r) const;
  bool match_all() const { return !root_; }

 private:
  std::shared_ptr<const Node> root_;
};

std::vector<CaptureRecord> filter_capture(const std::vector<CaptureRecord>& records, const CaptureFilter& f);
/// JSONL in, JSONL out. An empty filter returns the input unchanged.
std::string export_capture(std::string_view jsonl, std::string_view filter);

}  // namespace tapolab
