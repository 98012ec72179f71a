#pragma once

#include <chrono>
#include <cstdint>

#include "error.hpp"

namespace tapolab {

class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::int64_t now_ms() const = 0;
  std::int64_t now_s() const { return now_ms() / 1000; }
};

/// Shared simulated time; only moves forward.
class VirtualClock final : public Clock {
 public:
  static constexpr std::int64_t kDefaultStartMs = 1'700'000'000'000;

  explicit VirtualClock(std::int64_t start_ms = kDefaultStartMs) : now_(start_ms) {}

  std::int64_t now_ms() const override { return now_; }

  std::int64_t advance_ms(std::int64_t delta) {
    if (delta < 0) throw Error(ErrorKind::argument, "clock cannot move backwards");
    now_ += delta;
    return now_;
  }
  std::int64_t advance_s(std::int64_t delta) { return advance_ms(delta * 1000); }

 private:
  std::int64_t now_;
};

class SystemClock final : public Clock {
 public:
  std::int64_t now_ms() const override {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
  }
};

}  // namespace tapolab
