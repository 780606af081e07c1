#include "batchinfer/rng.hpp"

#include <cmath>

namespace batchinfer {

std::uint64_t RngStream::uniform_int(std::uint64_t lo, std::uint64_t hi) {
  if (hi <= lo) return lo;
  const std::uint64_t span = hi - lo;
  if (span == std::numeric_limits<std::uint64_t>::max()) return next();
  const std::uint64_t n = span + 1;
  // Largest multiple of n that fits; draws above it are rejected.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = next();
  } while (x >= limit);
  return lo + x % n;
}

std::uint32_t RngStream::poisson(double mean) {
  if (mean <= 0.0) return 0;
  const double threshold = std::exp(-mean);
  std::uint32_t k = 0;
  double p = uniform01();
  while (p > threshold) {
    ++k;
    p *= uniform01();
  }
  return k;
}

}  // namespace batchinfer
