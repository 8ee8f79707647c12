#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>

namespace karl {

using Duration = std::chrono::milliseconds;

/// Milliseconds since the epoch. The data store and audit log only ever see
/// this integer form.
using Millis = std::int64_t;

/// Time source injected everywhere time matters. Production uses
/// SystemClock; tests and scenarios use ManualClock, where sleeping advances
/// simulated time instantly.
class Clock {
 public:
  virtual ~Clock() = default;

  virtual Millis now_ms() const = 0;
  virtual void sleep_for(Duration d) = 0;

  /// Waits until `pred` holds or `timeout` elapses. Returns pred().
  virtual bool wait_for(std::unique_lock<std::mutex>& lock,
                        std::condition_variable& cv, Duration timeout,
                        const std::function<bool()>& pred) = 0;

  /// True when wait_for cannot observe the passage of time by itself and
  /// callers must compare elapsed simulated time after the fact.
  virtual bool simulated() const { return false; }
};

class SystemClock final : public Clock {
 public:
  Millis now_ms() const override {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch())
        .count();
  }
  void sleep_for(Duration d) override { std::this_thread::sleep_for(d); }
  bool wait_for(std::unique_lock<std::mutex>& lock, std::condition_variable& cv,
                Duration timeout,
                const std::function<bool()>& pred) override {
    return cv.wait_for(lock, timeout, pred);
  }
};

/// Simulated time. sleep_for advances the shared counter; wait_for blocks in
/// real time until the predicate holds, since in simulation every stub
/// eventually returns.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(Millis start = 0) : now_(start) {}

  Millis now_ms() const override { return now_.load(); }
  void sleep_for(Duration d) override { now_ += d.count(); }
  bool wait_for(std::unique_lock<std::mutex>& lock, std::condition_variable& cv,
                Duration, const std::function<bool()>& pred) override {
    cv.wait(lock, pred);
    return true;
  }
  bool simulated() const override { return true; }

  void advance(Duration d) { now_ += d.count(); }
  void set(Millis t) { now_ = t; }

 private:
  std::atomic<Millis> now_;
};

}  // namespace karl
