#include <gtest/gtest.h>

#include "crypto.hpp"
#include "error.hpp"
#include "rpc.hpp"

using namespace tapolab;

namespace {

constexpr std::int64_t kNow = 1'700'000'000;

SessionKeyMaterial material() {
  Rng r(21);
  return generate_session_material(r, kNow);
}

}  // namespace

TEST(Http, RequestCarriesListingHeadersAndCookie) {
  RpcRequest r;
  r.method = "handshake";
  r.params = Json{{"key", "PEM"}};
  r.cookie = "0123456789ABCDEF0123456789ABCDEF";
  std::string raw = build_http_request(r, "192.168.1.20");
  EXPECT_EQ(raw.rfind("POST /app HTTP/1.1\r\n", 0), 0u);
  EXPECT_NE(raw.find("requestByApp: true\r\n"), std::string::npos);
  EXPECT_NE(raw.find("Cookie: TP_SESSIONID=0123456789ABCDEF0123456789ABCDEF\r\n"), std::string::npos);
  EXPECT_LT(raw.find("Cookie:"), raw.find("\r\n\r\n"));
  EXPECT_NE(raw.find(R"("method":"handshake")"), std::string::npos);
  EXPECT_EQ(parse_http_request(raw), r);
}

TEST(Http, ResponseRoundTripWithSetCookie) {
  RpcResponse resp{0, Json{{"key", "abc"}}};
  SessionCookie c{"0123456789ABCDEF0123456789ABCDEF", 1440};
  std::string raw = build_http_response(resp, c);
  EXPECT_NE(raw.find("Set-Cookie: TP_SESSIONID=0123456789ABCDEF0123456789ABCDEF;TIMEOUT=1440"), std::string::npos);
  auto back = parse_http_response(raw);
  EXPECT_EQ(back.response, resp);
  EXPECT_EQ(back.set_cookie, c);
}

TEST(Http, TruncatedBodyAndIncrementalLength) {
  RpcRequest r{"get_device_info"};
  std::string raw = build_http_request(r, "h");
  EXPECT_EQ(http_message_length(raw), raw.size());
  EXPECT_FALSE(http_message_length(raw.substr(0, raw.size() - 1)));
  try {
    parse_http(raw.substr(0, raw.size() - 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::truncated);
  }
}

TEST(Envelope, RandomMethodParamsRoundTrip) {
  Rng rng(500);
  for (int i = 0; i < 500; ++i) {
    RpcRequest r;
    r.method = "m" + to_hex(rng.bytes(1 + rng.next_u64() % 8));
    r.params = Json::object();
    const int n = static_cast<int>(rng.next_u64() % 5);
    for (int j = 0; j < n; ++j) {
      const std::string key = "k" + std::to_string(j);
      switch (rng.next_u64() % 3) {
        case 0: r.params[key] = static_cast<std::int64_t>(rng.next_u64() % 100000); break;
        case 1: r.params[key] = base64_encode(rng.bytes(rng.next_u64() % 20)); break;
        default: r.params[key] = rng.next_u64() % 2 == 0;
      }
    }
    r.request_time_millis = static_cast<std::int64_t>(rng.next_u64() % 2'000'000'000'000);
    if (rng.next_u64() % 2) r.token = to_hex(rng.bytes(16));
    ASSERT_EQ(RpcRequest::from_json(r.to_json()), r);
    ASSERT_EQ(parse_http_request(build_http_request(r, "h")), r);
  }
}

TEST(Envelope, FromJsonValidatesShape) {
  EXPECT_THROW(RpcRequest::from_json(Json{{"params", Json::object()}}), Error);
  EXPECT_THROW(RpcRequest::from_json(Json{{"method", ""}}), Error);
  EXPECT_THROW(RpcRequest::from_json(Json{{"method", "x"}, {"params", 3}}), Error);
}

TEST(Passthrough, WrapUnwrapAndLoginShape) {
  auto m = material();
  Rng rng(1);
  RpcRequest login{"login_device", Json{{"username", "u"}, {"password", "p"}}};
  RpcRequest outer = wrap_passthrough(login, m, IvMode::static_iv, rng, kNow);
  EXPECT_EQ(outer.method, kPassthroughMethod);
  EXPECT_FALSE(outer.to_json().dump().find("login_device") != std::string::npos);
  RpcRequest inner = unwrap_passthrough_request(outer, m, kNow);
  EXPECT_EQ(inner, login);
  EXPECT_EQ(unwrap_passthrough(outer.to_json(), m, kNow)["method"], "login_device");
}

TEST(Passthrough, StaticModeGivesIdenticalRequests) {
  auto m = material();
  Rng rng(1);
  RpcRequest inner{"set_device_info", Json{{"device_on", false}}};
  auto a = wrap_passthrough(inner, m, IvMode::static_iv, rng, kNow);
  auto b = wrap_passthrough(inner, m, IvMode::static_iv, rng, kNow);
  EXPECT_EQ(a.params["request"], b.params["request"]);
  auto c = wrap_passthrough(inner, m, IvMode::dynamic_iv, rng, kNow);
  auto d = wrap_passthrough(inner, m, IvMode::dynamic_iv, rng, kNow);
  EXPECT_NE(c.params["request"], d.params["request"]);
  EXPECT_TRUE(c.params.contains("iv"));
  EXPECT_EQ(unwrap_passthrough_request(d, m, kNow), inner);
}

TEST(Passthrough, ResponseRoundTrip) {
  auto m = material();
  Rng rng(2);
  RpcResponse inner{0, Json{{"token", "abc"}}};
  auto outer = wrap_passthrough_response(inner, m, IvMode::static_iv, rng, kNow);
  EXPECT_EQ(unwrap_passthrough_response(outer, m, kNow), inner);
  Json j = unwrap_passthrough(outer.to_json(), m, kNow);
  EXPECT_EQ(j["error_code"], 0);
}

TEST(Passthrough, GarbageIsFormatError) {
  auto m = material();
  try {
    unwrap_passthrough(Json{{"params", Json{{"request", "!!!"}}}}, m, kNow);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::format);
  }
  try {
    unwrap_passthrough(Json{{"foo", 1}}, m, kNow);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::format);
  }
}

// SHA-1 reference values from Python hashlib.
TEST(Credentials, EmailHashOracle) {
  auto c = encode_login_credentials("", "pw");
  EXPECT_EQ(c.username_b64, "ZGEzOWEzZWU1ZTZiNGIwZDMyNTViZmVmOTU2MDE4OTBhZmQ4MDcwOQ==");
  EXPECT_EQ(to_string(base64_decode(c.password_b64)), "pw");
  auto a = encode_login_credentials("alice@example.com", "S3cret-Passw0rd!");
  EXPECT_EQ(a.username_b64, "ZmMyMzk4YTczZGQ1NGQ2MjM3YzRmZGI1OGZkN2Q3NTM0N2NmNWFmMw==");
  EXPECT_EQ(a, encode_login_credentials("alice@example.com", "S3cret-Passw0rd!"));
  EXPECT_EQ(owner_id_for_email("alice@example.com"), "fc2398a73dd54d6237c4fdb58fd7d753");
}
