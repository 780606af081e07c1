#pragma once

#include <chrono>
#include <cstdint>
#include <future>
#include <optional>
#include <stop_token>
#include <thread>
#include <type_traits>

namespace batchinfer {

template <typename T>
struct RetryOutcome {
  std::optional<T> value;
  // Every attempt timed out; the caller substitutes error rows.
  bool degraded = false;
  // The outer stop fired (the worker is gone).
  bool cancelled = false;
  // Executors killed and restarted after a timeout.
  std::uint32_t restarts = 0;
};

// Runs `attempt(index, stop)` on a fresh executor thread per attempt. An
// attempt still running after `timeout` is stopped, joined (the restart) and
// retried, up to 1 + max_retries attempts in total. `attempt` returns
// std::optional<T>; nullopt means it observed its stop token.
//
// timeout == 0 runs a single attempt inline on the caller's thread.
template <typename Fn>
auto run_with_timeout_retry(Fn&& attempt, std::chrono::milliseconds timeout, std::uint32_t max_retries,
                            std::stop_token outer)
    -> RetryOutcome<typename std::invoke_result_t<Fn&, std::uint32_t, std::stop_token>::value_type> {
  using T = typename std::invoke_result_t<Fn&, std::uint32_t, std::stop_token>::value_type;
  RetryOutcome<T> outcome;
  if (timeout.count() <= 0) {
    outcome.value = attempt(0u, outer);
    outcome.cancelled = !outcome.value.has_value();
    return outcome;
  }
  for (std::uint32_t i = 0; i <= max_retries; ++i) {
    std::promise<std::optional<T>> promise;
    auto result = promise.get_future();
    std::jthread executor([&attempt, i, p = std::move(promise)](std::stop_token st) mutable {
      p.set_value(attempt(i, st));
    });
    std::stop_callback forward(outer, [&executor] { executor.request_stop(); });
    const bool finished = result.wait_for(timeout) == std::future_status::ready;
    if (outer.stop_requested()) {
      outcome.cancelled = true;
      return outcome;
    }
    if (finished) {
      outcome.value = result.get();
      outcome.cancelled = !outcome.value.has_value();
      return outcome;
    }
    executor.request_stop();
    executor.join();
    ++outcome.restarts;
  }
  outcome.degraded = true;
  return outcome;
}

}  // namespace batchinfer
