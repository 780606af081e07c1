#pragma once

#include <atomic>
#include <chrono>

#include "batchinfer/types.hpp"

namespace batchinfer {

class Clock {
 public:
  virtual ~Clock() = default;
  virtual TimestampMs now_ms() const = 0;
};

// Milliseconds elapsed since construction.
class SteadyClock final : public Clock {
 public:
  SteadyClock() : start_(std::chrono::steady_clock::now()) {}

  TimestampMs now_ms() const override {
    return static_cast<TimestampMs>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                         std::chrono::steady_clock::now() - start_)
                                         .count());
  }

  std::chrono::steady_clock::time_point start() const { return start_; }

 private:
  std::chrono::steady_clock::time_point start_;
};

// Test clock advanced explicitly.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(TimestampMs start = 0) : now_(start) {}

  TimestampMs now_ms() const override { return now_.load(); }
  void set(TimestampMs t) { now_.store(t); }
  void advance(TimestampMs dt) { now_.fetch_add(dt); }

 private:
  std::atomic<TimestampMs> now_;
};

}  // namespace batchinfer
