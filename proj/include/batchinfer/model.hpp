#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stop_token>
#include <string>
#include <vector>

#include "batchinfer/pipeline.hpp"

namespace batchinfer {

// A unit flowing through the predictor graph: the loaded record itself or
// one of its fan-out descendants.
struct Item {
  RecordId origin = 0;
  ShardId shard = 0;
  // Descendant index at each fan-out hop; empty for the loaded record.
  std::vector<std::uint32_t> lineage;
  std::string payload;
};

struct ItemResult {
  std::optional<TolerableError> error;
  std::vector<Item> outputs;
};

// Per-item model behaviour. Every draw is keyed on (seed, node, origin,
// lineage), so results do not depend on batching, threads or retries.
bool draw_failure(std::uint64_t seed, const PredictorNode& node, const Item& item);
std::uint32_t draw_fanout(std::uint64_t seed, const PredictorNode& node, const Item& item);
std::string derive_payload(const PredictorNode& node, const Item& parent, std::uint32_t index);

// Applies the model to every item without simulating cost.
std::vector<ItemResult> apply_model(std::uint64_t seed, const PredictorNode& node,
                                    std::span<const Item> batch);

// Sleeps for `ms`; returns false if `stop` fired first.
bool simulate_work(double ms, std::stop_token stop);

// Spends cost_per_record / speed_factor per item, then applies the model.
// A hanging execution waits for `stop`. Returns nullopt when stopped.
std::optional<std::vector<ItemResult>> execute_batch(std::uint64_t seed, const PredictorNode& node,
                                                     std::span<const Item> batch, double speed_factor,
                                                     std::stop_token stop, bool hang = false);

}  // namespace batchinfer
