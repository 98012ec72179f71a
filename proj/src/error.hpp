#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tapolab {

enum class ErrorKind {
  truncated,
  format,
  authentication,  // MAC / checksum mismatch
  parse,
  length_overflow,
  wrap,
  decrypt,
  protocol,
  session_expired,
  peer_authentication,
  auth_failure,  // login rejected by the peer
  freshness,
  unknown_method,
  precondition,
  network,
  argument,
  io,
  script,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace tapolab
