#include "batchinfer/model.hpp"

#include <chrono>
#include <condition_variable>
#include <mutex>

#include <fmt/format.h>

namespace batchinfer {

namespace {

std::uint64_t lineage_key(const Item& item) {
  std::uint64_t h = mix64(item.lineage.size());
  for (std::uint32_t i : item.lineage) h = mix64(h ^ i);
  return h;
}

}  // namespace

bool draw_failure(std::uint64_t seed, const PredictorNode& node, const Item& item) {
  auto rng = RngStream::keyed(seed, {fnv1a64("failure"), fnv1a64(node.id), item.origin, lineage_key(item)});
  return rng.bernoulli(node.model.failure_rate);
}

std::uint32_t draw_fanout(std::uint64_t seed, const PredictorNode& node, const Item& item) {
  auto rng = RngStream::keyed(seed, {fnv1a64("fanout"), fnv1a64(node.id), item.origin, lineage_key(item)});
  return node.model.fanout.draw(rng);
}

std::string derive_payload(const PredictorNode& node, const Item& parent, std::uint32_t index) {
  std::uint64_t word = mix64(fnv1a64(parent.payload) ^ mix64(fnv1a64(node.id) + index));
  std::string out(8, '\0');
  for (std::size_t i = 0; i < 8; ++i, word >>= 8) out[i] = static_cast<char>(word & 0xFF);
  return out;
}

std::vector<ItemResult> apply_model(std::uint64_t seed, const PredictorNode& node,
                                    std::span<const Item> batch) {
  std::vector<ItemResult> results;
  results.reserve(batch.size());
  for (const Item& item : batch) {
    ItemResult r;
    if (draw_failure(seed, node, item)) {
      r.error = TolerableError{TolerableErrorKind::InferenceError,
                               fmt::format("{}: inference failed for record {}", node.id, item.origin)};
    } else {
      const std::uint32_t n = draw_fanout(seed, node, item);
      r.outputs.reserve(n);
      for (std::uint32_t i = 0; i < n; ++i) {
        Item child;
        child.origin = item.origin;
        child.shard = item.shard;
        child.lineage = item.lineage;
        child.lineage.push_back(i);
        child.payload = derive_payload(node, item, i);
        r.outputs.push_back(std::move(child));
      }
    }
    results.push_back(std::move(r));
  }
  return results;
}

bool simulate_work(double ms, std::stop_token stop) {
  if (stop.stop_requested()) return false;
  if (ms <= 0.0) return true;
  std::mutex mu;
  std::condition_variable_any cv;
  std::unique_lock lock(mu);
  cv.wait_for(lock, stop, std::chrono::duration<double, std::milli>(ms), [] { return false; });
  return !stop.stop_requested();
}

std::optional<std::vector<ItemResult>> execute_batch(std::uint64_t seed, const PredictorNode& node,
                                                     std::span<const Item> batch, double speed_factor,
                                                     std::stop_token stop, bool hang) {
  if (hang) {
    std::mutex mu;
    std::condition_variable_any cv;
    std::unique_lock lock(mu);
    cv.wait(lock, stop, [] { return false; });
    return std::nullopt;
  }
  const double cost = node.model.cost_per_record_ms * static_cast<double>(batch.size()) / speed_factor;
  if (!simulate_work(cost, stop)) return std::nullopt;
  return apply_model(seed, node, batch);
}

}  // namespace batchinfer
