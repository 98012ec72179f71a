#pragma once

// JSON-RPC style envelopes carried in HTTP/1.1 POST /app bodies, plus the
// securePassthrough wrapper that encrypts an inner request under the session
// key.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "crypto.hpp"
#include "json_value.hpp"

namespace tapolab {

namespace error_code {
inline constexpr int ok = 0;
inline constexpr int format = -1001;
inline constexpr int unknown_method = -1002;
inline constexpr int auth_failure = -1003;
inline constexpr int session_expired = -1004;
inline constexpr int freshness = -1005;
}  // namespace error_code

inline constexpr std::string_view kPassthroughMethod = "securePassthrough";

struct RpcRequest {
  std::string method;
  Json params = Json::object();
  std::int64_t request_time_millis = 0;
  std::optional<std::string> terminal_uuid;
  std::optional<std::string> token;
  std::optional<std::int64_t> seq;
  // TP_SESSIONID value; travels in the Cookie header, never in the body.
  std::optional<std::string> cookie;

  Json to_json() const;
  /// Throws Error{format} unless method is a non-empty string and params an object.
  static RpcRequest from_json(const Json& j);
  bool operator==(const RpcRequest&) const = default;
};

struct RpcResponse {
  int error_code = error_code::ok;
  std::optional<Json> result;

  Json to_json() const;
  static RpcResponse from_json(const Json& j);
  bool operator==(const RpcResponse&) const = default;
};

struct HttpMessage {
  std::string start_line;
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;

  /// Case-insensitive header lookup.
  std::optional<std::string> header(std::string_view name) const;
};

/// Parses a complete HTTP/1.1 message; throws truncated if the body is
/// shorter than Content-Length, format on malformed framing.
HttpMessage parse_http(std::string_view raw);
/// Length of the first complete message in raw, or nullopt if more bytes are needed.
std::optional<std::size_t> http_message_length(std::string_view raw);

std::string build_http_request(const RpcRequest& req, std::string_view host, std::uint16_t port = 80);
RpcRequest parse_http_request(std::string_view raw);

struct HttpResponse {
  RpcResponse response;
  std::optional<SessionCookie> set_cookie;
  bool operator==(const HttpResponse&) const = default;
};

std::string build_http_response(const RpcResponse& resp,
                                const std::optional<SessionCookie>& set_cookie = std::nullopt);
HttpResponse parse_http_response(std::string_view raw);

/// Outer securePassthrough request; params.request holds the encrypted inner
/// JSON, params.iv the per-message IV when mode is dynamic_iv.
RpcRequest wrap_passthrough(const RpcRequest& inner, const SessionKeyMaterial& material, IvMode mode,
                            Rng& rng, std::int64_t now_s);
RpcRequest unwrap_passthrough_request(const RpcRequest& outer, const SessionKeyMaterial& material,
                                      std::int64_t now_s);

RpcResponse wrap_passthrough_response(const RpcResponse& inner, const SessionKeyMaterial& material,
                                      IvMode mode, Rng& rng, std::int64_t now_s);
RpcResponse unwrap_passthrough_response(const RpcResponse& outer, const SessionKeyMaterial& material,
                                        std::int64_t now_s);

/// Shape-generic unwrap: accepts an outer request (params.request) or an
/// outer response (result.response). Throws format on unknown shapes,
/// protocol when decryption fails.
Json unwrap_passthrough(const Json& outer, const SessionKeyMaterial& material, std::int64_t now_s);

struct LoginCredentials {
  std::string username_b64;  // base64 of lowercase hex SHA-1 of the email
  std::string password_b64;
  bool operator==(const LoginCredentials&) const = default;
};

LoginCredentials encode_login_credentials(std::string_view email, std::string_view password);

/// Constant pair the app logs in with while a device is in setup mode.
inline constexpr std::string_view kSetupUsername = "tapo_setup";
inline constexpr std::string_view kSetupPassword = "tapo_setup";
LoginCredentials setup_credentials();

/// Account id: first 16 bytes of SHA1(email), lowercase hex.
std::string owner_id_for_email(std::string_view email);

}  // namespace tapolab
