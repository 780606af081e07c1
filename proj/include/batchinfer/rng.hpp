#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <string_view>

namespace batchinfer {

// SplitMix64 finalizer. Bijective, so distinct keys never collide.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Deterministic, platform-independent random stream (SplitMix64).
//
// Streams are derived rather than shared: `for_component` gives each
// subsystem (cluster, workload, fan-out, ...) its own stream, so draws in one
// component never shift another's sequence. `keyed` derives a stream from a
// tuple of integers; it is used for per-item draws that must not depend on
// thread interleaving.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed) : state_(seed) {}

  static RngStream for_component(std::uint64_t seed, std::string_view component) {
    return RngStream(mix64(seed ^ mix64(fnv1a64(component))));
  }

  static RngStream keyed(std::uint64_t seed, std::initializer_list<std::uint64_t> key) {
    std::uint64_t s = mix64(seed);
    for (std::uint64_t k : key) s = mix64(s ^ k);
    return RngStream(s);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next(); }

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform integer in [lo, hi], unbiased (rejection sampling).
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi);

  bool bernoulli(double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return uniform01() < p;
  }

  // Knuth's multiplication method; adequate for the small means used by
  // synthetic fan-out.
  std::uint32_t poisson(double mean);

 private:
  std::uint64_t state_;
};

}  // namespace batchinfer
