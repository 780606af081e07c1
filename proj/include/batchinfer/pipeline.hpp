#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "batchinfer/rng.hpp"
#include "batchinfer/types.hpp"

namespace batchinfer {

// Outputs-per-input distribution of a synthetic model.
struct FanoutSpec {
  enum class Kind { Constant, Uniform, Poisson };
  Kind kind = Kind::Constant;
  std::uint32_t value = 1;      // Constant
  std::uint32_t min = 0;        // Uniform, inclusive
  std::uint32_t max = 0;        // Uniform, inclusive
  double mean_value = 0.0;      // Poisson

  std::uint32_t draw(RngStream& rng) const;
  double mean() const;
};

struct SyntheticModel {
  double cost_per_record_ms = 0.0;
  // Probability of an InferenceError per input record.
  double failure_rate = 0.0;
  FanoutSpec fanout;
};

struct PredictorNode {
  std::string id;
  // Upstream node ids; empty means the node reads the loader output.
  std::vector<std::string> inputs;
  SyntheticModel model;
  std::uint32_t target_batch_size = 1;
  std::uint32_t executors = 1;
  std::uint32_t max_executors = 1;
  std::uint32_t device_demand = 1;
};

struct StageSpec {
  double cost_per_record_ms = 0.0;
  std::uint32_t initial_executors = 1;
  std::uint32_t max_executors = 1;
};

struct AutoscaleConfig {
  bool enabled = false;
  double low_watermark = 0.1;
  double high_watermark = 0.9;
  double util_threshold = 0.7;
  std::uint32_t consecutive_ticks = 3;
  TimestampMs tick_interval_ms = 50;
  std::uint32_t cooldown_ticks = 5;

  void validate() const;
};

enum class ExecutionMode {
  // Loader, predictors and writer run as concurrent stages.
  Pipelined,
  // One thread runs load -> every model -> write back to back.
  Sequential,
};

inline constexpr const char* kLoadStage = "load";
inline constexpr const char* kWriteStage = "write";

struct PipelineSpec {
  std::vector<PredictorNode> nodes;
  StageSpec loader;
  StageSpec writer;
  // Batches per inter-stage queue.
  std::uint32_t queue_capacity = 4;
  // Records per loader batch.
  std::uint32_t batch_size = 16;
  AutoscaleConfig autoscale;
  // Abstract device units shared by predictor executors; 0 = unlimited.
  std::uint32_t device_units = 0;
  // Per-batch predictor timeout; 0 disables timeout-retry.
  TimestampMs timeout_ms = 0;
  std::uint32_t max_retries = 2;
  ExecutionMode mode = ExecutionMode::Pipelined;
  // Shards a worker holds at once (acquired, not yet committed).
  std::uint32_t max_inflight_shards = 2;

  // Throws ConfigurationError.
  void validate() const;
};

// Validated view of the predictor graph.
class Dag {
 public:
  explicit Dag(const std::vector<PredictorNode>& nodes);

  std::size_t size() const { return successors_.size(); }
  // Topological order; ties keep declaration order.
  const std::vector<std::size_t>& order() const { return order_; }
  const std::vector<std::size_t>& successors(std::size_t node) const { return successors_[node]; }
  const std::vector<std::size_t>& predecessors(std::size_t node) const { return predecessors_[node]; }
  const std::vector<std::size_t>& roots() const { return roots_; }
  std::size_t sink() const { return sink_; }
  bool is_sink(std::size_t node) const { return node == sink_; }

 private:
  std::vector<std::vector<std::size_t>> successors_;
  std::vector<std::vector<std::size_t>> predecessors_;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> roots_;
  std::size_t sink_ = 0;
};

}  // namespace batchinfer
