#include "error.hpp"

namespace tapolab {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::truncated: return "truncated";
    case ErrorKind::format: return "format";
    case ErrorKind::authentication: return "authentication";
    case ErrorKind::parse: return "parse";
    case ErrorKind::length_overflow: return "length-overflow";
    case ErrorKind::wrap: return "wrap";
    case ErrorKind::decrypt: return "decrypt";
    case ErrorKind::protocol: return "protocol";
    case ErrorKind::session_expired: return "session-expired";
    case ErrorKind::peer_authentication: return "peer-authentication";
    case ErrorKind::auth_failure: return "auth-failure";
    case ErrorKind::freshness: return "freshness";
    case ErrorKind::unknown_method: return "unknown-method";
    case ErrorKind::precondition: return "precondition";
    case ErrorKind::network: return "network";
    case ErrorKind::argument: return "argument";
    case ErrorKind::io: return "io";
    case ErrorKind::script: return "script";
  }
  return "unknown";
}

}  // namespace tapolab
