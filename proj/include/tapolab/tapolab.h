#ifndef TAPOLAB_TAPOLAB_H
#define TAPOLAB_TAPOLAB_H

/* C interface to the smart-bulb protocol lab.
 *
 * Conventions: every fallible call returns tl_status; on failure a message is
 * available from tl_last_error() on the same thread until the next call.
 * Strings and buffers handed out through out-parameters belong to the caller
 * and are released with tl_free(). Handles are released with their *_free.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define TL_API __declspec(dllexport)
#elif defined(TAPOLAB_BUILDING)
#define TL_API __attribute__((visibility("default")))
#else
#define TL_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tl_status {
  TL_OK = 0,
  TL_E_ARGUMENT = 1,
  TL_E_FORMAT = 2,         /* truncated or malformed wire data */
  TL_E_AUTHENTICATION = 3, /* checksum, tag, signature or certificate mismatch */
  TL_E_PARSE = 4,
  TL_E_PROTOCOL = 5,       /* peer answered with an error */
  TL_E_NETWORK = 6,
  TL_E_IO = 7,
  TL_E_SCRIPT = 8,
  TL_E_STATE = 9,          /* operation not valid in the current state */
  TL_E_INTERNAL = 99
} tl_status;

TL_API const char* tl_last_error(void);
TL_API const char* tl_version(void);
TL_API void tl_free(void* p);

/* --- wire format -------------------------------------------------------- */

TL_API uint32_t tl_crc32(const uint8_t* data, size_t len);

/* data_json: request or response JSON; NULL or "" encodes the empty request.
 * secret is the 4-byte checksum secret as a big-endian integer. */
TL_API tl_status tl_discovery_encode(const char* data_json, const uint8_t nonce[4], uint32_t secret,
                                     uint8_t** out, size_t* out_len);
/* data_json receives the JSON body ("" for an empty request); nonce may be NULL. */
TL_API tl_status tl_discovery_decode(const uint8_t* raw, size_t len, uint32_t secret, char** data_json,
                                     uint8_t nonce[4]);
/* Scans the low keyspace_bits of the secret space. found receives the lowest
 * verifying secret when *matches > 0. threads == 0 uses every core. */
TL_API tl_status tl_bruteforce(const uint8_t* raw, size_t len, int keyspace_bits, unsigned threads,
                               uint32_t* found, size_t* matches, uint64_t* tested);

/* --- scenarios ---------------------------------------------------------- */

typedef struct tl_report tl_report;

typedef struct tl_scenario_options {
  const char* profile;  /* "vulnerable" (NULL) or "hardened" */
  uint64_t seed;
  int keyspace_bits;    /* 0 means 24 */
  int full_keyspace;
  unsigned threads;
} tl_scenario_options;

/* Runs scenario 1..5 on its canonical topology. */
TL_API tl_status tl_scenario_run(int scenario_id, const tl_scenario_options* opts, tl_report** out);
TL_API int tl_report_success(const tl_report* r);
/* NULL when the key was not exfiltrated. Owned by the report. */
TL_API const char* tl_report_exfiltrated(const tl_report* r, const char* key);
TL_API tl_status tl_report_json(const tl_report* r, char** out);
TL_API void tl_report_free(tl_report* r);

/* --- lab scripts -------------------------------------------------------- */

typedef struct tl_lab tl_lab;

typedef struct tl_run_options {
  const char* profile;  /* NULL keeps the script's */
  int has_seed;
  uint64_t seed;
  int keyspace_bits;    /* 0 keeps the script's */
  int full_keyspace;
  unsigned threads;
} tl_run_options;

TL_API tl_status tl_lab_load(const char* path, tl_lab** out);
TL_API tl_status tl_lab_parse(const char* text, tl_lab** out);
/* passed receives 1 when every assertion held. opts may be NULL. */
TL_API tl_status tl_lab_run(tl_lab* lab, const tl_run_options* opts, int* passed);
TL_API tl_status tl_lab_capture_jsonl(const tl_lab* lab, char** out);
TL_API tl_status tl_lab_reports_json(const tl_lab* lab, char** out);
/* out receives NULL when nothing failed. */
TL_API tl_status tl_lab_first_failure(const tl_lab* lab, char** out);
TL_API void tl_lab_free(tl_lab* lab);

/* Filters a JSONL capture log; an empty filter returns it unchanged. */
TL_API tl_status tl_capture_filter(const char* jsonl, const char* filter, char** out);

/* --- real sockets (loopback) ------------------------------------------- */

typedef struct tl_bulb tl_bulb;
typedef struct tl_app tl_app;

/* Both sides derive the cloud stub from seed, so a hardened bulb and app in
 * different processes agree on certificates and discovery keys. */
typedef struct tl_bulb_options {
  const char* name;        /* device identity is derived from seed and name */
  const char* profile;
  uint64_t seed;
  int has_secret;
  uint32_t secret;
  /* Owner account and Wi-Fi; NULL email leaves the bulb in setup mode. */
  const char* email;
  const char* password;
  const char* ssid;
  const char* wifi_password;
} tl_bulb_options;

TL_API tl_status tl_bulb_create(const tl_bulb_options* opts, tl_bulb** out);
/* Ports of 0 are picked by the kernel; read them back with tl_bulb_ports. */
TL_API tl_status tl_bulb_serve(tl_bulb* b, const char* address, uint16_t udp_port, uint16_t tcp_port);
TL_API tl_status tl_bulb_ports(const tl_bulb* b, uint16_t* udp_port, uint16_t* tcp_port);
TL_API void tl_bulb_stop(tl_bulb* b);
TL_API tl_status tl_bulb_state_json(const tl_bulb* b, char** out);
TL_API void tl_bulb_free(tl_bulb* b);

typedef struct tl_app_options {
  const char* profile;
  uint64_t seed;
  int has_secret;
  uint32_t secret;
  const char* email;
  const char* password;
  const char* ssid;
  const char* wifi_password;
  const char* target;       /* bulb address, default 127.0.0.1 */
  uint16_t discovery_port;  /* bulb's UDP port */
  int timeout_ms;           /* 0 means 1000 */
} tl_app_options;

TL_API tl_status tl_app_create(const tl_app_options* opts, tl_app** out);
/* JSON array of discovery bodies. */
TL_API tl_status tl_app_discover(tl_app* a, int unconfigured, char** out);
/* Onboards the first unconfigured bulb; out receives the set_qs_info response. */
TL_API tl_status tl_app_setup(tl_app* a, char** out);
/* delta_json e.g. {"device_on":false}; out receives the device info after the change. */
TL_API tl_status tl_app_control(tl_app* a, const char* delta_json, char** out);
TL_API void tl_app_free(tl_app* a);

#ifdef __cplusplus
}
#endif

#endif
