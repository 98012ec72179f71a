#include "rpc.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "error.hpp"

namespace tapolab {
namespace {

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

Json parse_body(std::string_view body) {
  Json j = Json::parse(body.begin(), body.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorKind::format, "HTTP body is not a JSON object");
  return j;
}

std::optional<std::size_t> content_length(std::string_view head) {
  std::size_t pos = 0;
  while (pos < head.size()) {
    std::size_t eol = head.find("\r\n", pos);
    if (eol == std::string_view::npos) eol = head.size();
    std::string_view line = head.substr(pos, eol - pos);
    if (auto colon = line.find(':'); colon != std::string_view::npos &&
                                     iequals(trim(line.substr(0, colon)), "Content-Length")) {
      auto v = trim(line.substr(colon + 1));
      std::size_t n = 0;
      auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
      if (ec != std::errc{} || p != v.data() + v.size()) throw Error(ErrorKind::format, "bad Content-Length");
      return n;
    }
    pos = eol + 2;
  }
  return std::nullopt;
}

AesIv iv_from_b64(const Json& field) {
  if (!field.is_string()) throw Error(ErrorKind::format, "iv field is not a string");
  Bytes raw = base64_decode(field.get<std::string>());
  if (raw.size() != 16) throw Error(ErrorKind::format, "iv is not 16 bytes");
  AesIv iv{};
  std::copy(raw.begin(), raw.end(), iv.begin());
  return iv;
}

Json encrypted_fields(const std::string& field, const Json& inner, const SessionKeyMaterial& material,
                      IvMode mode, Rng& rng, std::int64_t now_s) {
  auto enc = encrypt_payload(view(inner.dump()), material, mode, rng, now_s);
  Json p;
  p[field] = enc.ciphertext_b64;
  if (mode == IvMode::dynamic_iv) p["iv"] = base64_encode(enc.iv_used);
  return p;
}

Json decrypt_fields(const Json& holder, const std::string& field, const SessionKeyMaterial& material,
                    std::int64_t now_s) {
  if (!holder.is_object() || !holder.contains(field) || !holder[field].is_string()) {
    throw Error(ErrorKind::format, "passthrough envelope lacks '" + field + "'");
  }
  std::optional<AesIv> iv;
  if (holder.contains("iv")) iv = iv_from_b64(holder["iv"]);
  base64_decode(holder[field].get<std::string>());  // malformed text is a format error
  Bytes plain;
  try {
    plain = decrypt_payload(holder[field].get<std::string>(), material, now_s, iv);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::session_expired) throw;
    throw Error(ErrorKind::protocol, std::string("passthrough decryption failed: ") + e.what());
  }
  Json j = Json::parse(plain.begin(), plain.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorKind::protocol, "passthrough plaintext is not JSON");
  return j;
}

}  // namespace

Json RpcRequest::to_json() const {
  Json j;
  j["method"] = method;
  j["params"] = params;
  j["requestTimeMils"] = request_time_millis;
  if (terminal_uuid) j["terminalUUID"] = *terminal_uuid;
  if (token) j["token"] = *token;
  if (seq) j["seq"] = *seq;
  return j;
}

RpcRequest RpcRequest::from_json(const Json& j) {
  if (!j.is_object() || !j.contains("method") || !j["method"].is_string() ||
      j["method"].get<std::string>().empty()) {
    throw Error(ErrorKind::format, "request lacks a method");
  }
  RpcRequest r;
  r.method = j["method"].get<std::string>();
  if (j.contains("params")) {
    if (!j["params"].is_object()) throw Error(ErrorKind::format, "params is not an object");
    r.params = j["params"];
  }
  try {
    if (j.contains("requestTimeMils")) r.request_time_millis = j["requestTimeMils"].get<std::int64_t>();
    if (j.contains("terminalUUID")) r.terminal_uuid = j["terminalUUID"].get<std::string>();
    if (j.contains("token")) r.token = j["token"].get<std::string>();
    if (j.contains("seq")) r.seq = j["seq"].get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, e.what());
  }
  return r;
}

Json RpcResponse::to_json() const {
  Json j;
  j["error_code"] = error_code;
  if (result) j["result"] = *result;
  return j;
}

RpcResponse RpcResponse::from_json(const Json& j) {
  if (!j.is_object() || !j.contains("error_code") || !j["error_code"].is_number_integer()) {
    throw Error(ErrorKind::format, "response lacks error_code");
  }
  RpcResponse r;
  r.error_code = j["error_code"].get<int>();
  if (j.contains("result")) r.result = j["result"];
  return r;
}

std::optional<std::string> HttpMessage::header(std::string_view name) const {
  for (const auto& [k, v] : headers) {
    if (iequals(k, name)) return v;
  }
  return std::nullopt;
}

std::optional<std::size_t> http_message_length(std::string_view raw) {
  auto end = raw.find("\r\n\r\n");
  if (end == std::string_view::npos) return std::nullopt;
  std::size_t body = content_length(raw.substr(0, end)).value_or(0);
  std::size_t total = end + 4 + body;
  if (raw.size() < total) return std::nullopt;
  return total;
}

HttpMessage parse_http(std::string_view raw) {
  auto end = raw.find("\r\n\r\n");
  if (end == std::string_view::npos) throw Error(ErrorKind::truncated, "HTTP header block incomplete");
  std::string_view head = raw.substr(0, end);
  HttpMessage msg;
  std::size_t pos = head.find("\r\n");
  msg.start_line = std::string(head.substr(0, pos));
  while (pos != std::string_view::npos) {
    std::size_t start = pos + 2;
    std::size_t eol = head.find("\r\n", start);
    std::string_view line = head.substr(start, eol == std::string_view::npos ? eol : eol - start);
    pos = eol;
    if (line.empty()) continue;
    auto colon = line.find(':');
    if (colon == std::string_view::npos) throw Error(ErrorKind::format, "malformed HTTP header line");
    msg.headers.emplace_back(std::string(trim(line.substr(0, colon))), std::string(trim(line.substr(colon + 1))));
  }
  std::size_t len = content_length(head).value_or(raw.size() - end - 4);
  if (raw.size() - end - 4 < len) throw Error(ErrorKind::truncated, "HTTP body shorter than Content-Length");
  msg.body = std::string(raw.substr(end + 4, len));
  return msg;
}

std::string build_http_request(const RpcRequest& req, std::string_view host, std::uint16_t port) {
  std::string body = req.to_json().dump();
  std::string out;
  out += "POST /app HTTP/1.1\r\n";
  out += "Referer: http://" + std::string(host) + ":" + std::to_string(port) + "\r\n";
  out += "Accept: application/json\r\n";
  out += "requestByApp: true\r\n";
  out += "Content-Type: application/json; charset=UTF-8\r\n";
  out += "Content-Length: " + std::to_string(body.size()) + "\r\n";
  out += "Host: " + std::string(host) + "\r\n";
  out += "Connection: Keep-Alive\r\n";
  out += "Accept-Encoding: gzip\r\n";
  if (req.cookie) out += "Cookie: TP_SESSIONID=" + *req.cookie + "\r\n";
  out += "User-Agent: okhttp/3.12.13\r\n";
  out += "\r\n";
  out += body;
  return out;
}

RpcRequest parse_http_request(std::string_view raw) {
  HttpMessage msg = parse_http(raw);
  if (msg.start_line != "POST /app HTTP/1.1") throw Error(ErrorKind::format, "expected POST /app HTTP/1.1");
  RpcRequest r = RpcRequest::from_json(parse_body(msg.body));
  if (auto c = msg.header("Cookie")) {
    std::string_view v = *c;
    constexpr std::string_view kPrefix = "TP_SESSIONID=";
    if (v.substr(0, kPrefix.size()) != kPrefix) throw Error(ErrorKind::format, "unexpected Cookie header");
    v.remove_prefix(kPrefix.size());
    r.cookie = std::string(v.substr(0, v.find(';')));
  }
  return r;
}

std::string build_http_response(const RpcResponse& resp, const std::optional<SessionCookie>& set_cookie) {
  std::string body = resp.to_json().dump();
  std::string out;
  out += "HTTP/1.1 200 OK\r\n";
  out += "Content-Type: application/json;charset=UTF-8\r\n";
  out += "Content-Length: " + std::to_string(body.size()) + "\r\n";
  if (set_cookie) {
    out += "Connection: close\r\n";
    out += "Set-Cookie: " + set_cookie->set_cookie_header() + "\r\n";
  }
  out += "\r\n";
  out += body;
  return out;
}

HttpResponse parse_http_response(std::string_view raw) {
  HttpMessage msg = parse_http(raw);
  if (msg.start_line.rfind("HTTP/1.1 ", 0) != 0) throw Error(ErrorKind::format, "not an HTTP/1.1 response");
  HttpResponse out{RpcResponse::from_json(parse_body(msg.body)), std::nullopt};
  if (auto sc = msg.header("Set-Cookie")) {
    std::string_view v = *sc;
    constexpr std::string_view kPrefix = "TP_SESSIONID=";
    if (v.substr(0, kPrefix.size()) != kPrefix) throw Error(ErrorKind::format, "unexpected Set-Cookie header");
    v.remove_prefix(kPrefix.size());
    SessionCookie cookie;
    auto semi = v.find(';');
    cookie.value = std::string(v.substr(0, semi));
    if (semi != std::string_view::npos) {
      auto rest = v.substr(semi + 1);
      constexpr std::string_view kTimeout = "TIMEOUT=";
      if (rest.substr(0, kTimeout.size()) == kTimeout) {
        rest.remove_prefix(kTimeout.size());
        std::from_chars(rest.data(), rest.data() + rest.size(), cookie.timeout_minutes);
      }
    }
    out.set_cookie = cookie;
  }
  return out;
}

RpcRequest wrap_passthrough(const RpcRequest& inner, const SessionKeyMaterial& material, IvMode mode,
                            Rng& rng, std::int64_t now_s) {
  RpcRequest outer;
  outer.method = std::string(kPassthroughMethod);
  outer.params = encrypted_fields("request", inner.to_json(), material, mode, rng, now_s);
  outer.cookie = inner.cookie;
  return outer;
}

RpcRequest unwrap_passthrough_request(const RpcRequest& outer, const SessionKeyMaterial& material,
                                      std::int64_t now_s) {
  if (outer.method != kPassthroughMethod) throw Error(ErrorKind::format, "not a securePassthrough request");
  RpcRequest inner = RpcRequest::from_json(decrypt_fields(outer.params, "request", material, now_s));
  inner.cookie = outer.cookie;
  return inner;
}

RpcResponse wrap_passthrough_response(const RpcResponse& inner, const SessionKeyMaterial& material,
                                      IvMode mode, Rng& rng, std::int64_t now_s) {
  RpcResponse outer;
  outer.result = encrypted_fields("response", inner.to_json(), material, mode, rng, now_s);
  return outer;
}

RpcResponse unwrap_passthrough_response(const RpcResponse& outer, const SessionKeyMaterial& material,
                                        std::int64_t now_s) {
  if (!outer.result) throw Error(ErrorKind::format, "passthrough response has no result");
  return RpcResponse::from_json(decrypt_fields(*outer.result, "response", material, now_s));
}

Json unwrap_passthrough(const Json& outer, const SessionKeyMaterial& material, std::int64_t now_s) {
  if (outer.is_object() && outer.contains("params") && outer["params"].is_object() &&
      outer["params"].contains("request")) {
    return decrypt_fields(outer["params"], "request", material, now_s);
  }
  if (outer.is_object() && outer.contains("result") && outer["result"].is_object() &&
      outer["result"].contains("response")) {
    return decrypt_fields(outer["result"], "response", material, now_s);
  }
  throw Error(ErrorKind::format, "unknown passthrough envelope shape");
}

LoginCredentials encode_login_credentials(std::string_view email, std::string_view password) {
  return LoginCredentials{base64_encode(sha1_hex(email)), base64_encode(password)};
}

LoginCredentials setup_credentials() { return encode_login_credentials(kSetupUsername, kSetupPassword); }

std::string owner_id_for_email(std::string_view email) {
  Bytes digest = sha1(view(email));
  return to_hex(ByteView(digest).first(16));
}

}  // namespace tapolab
