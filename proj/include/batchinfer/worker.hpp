#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "batchinfer/autoscaler.hpp"
#include "batchinfer/clock.hpp"
#include "batchinfer/dataset.hpp"
#include "batchinfer/metrics.hpp"
#include "batchinfer/pipeline.hpp"
#include "batchinfer/scenario.hpp"
#include "batchinfer/shard_queue.hpp"

namespace batchinfer {

// Everything a worker shares with the rest of the job.
struct WorkerContext {
  ShardQueue* dds = nullptr;
  const DatasetReader* source = nullptr;
  std::filesystem::path sink_dir;
  MetricsCollector* metrics = nullptr;
  const Clock* clock = nullptr;
  std::uint64_t seed = 0;
  FaultPlan faults;
  // The worker hit a fault that takes its node down (e.g. a fetch failure).
  // Called from a worker thread; must not join the worker.
  std::function<void(const WorkerId&, FailureKind)> on_self_crash;
  // The worker stopped on its own (dataset done or drained). Same caveat.
  std::function<void(const WorkerId&)> on_exit;
  // Poll period while waiting for shards or for the pipeline to go idle.
  TimestampMs idle_poll_ms = 20;
};

struct NodeBatchStats {
  std::uint64_t batches = 0;
  std::uint64_t items = 0;
  // Batches holding exactly target_batch_size items.
  std::uint64_t full_batches = 0;
  // Partial batches released because the pipeline went idle.
  std::uint64_t flushed_batches = 0;
};

struct WorkerStats {
  std::uint64_t restarts = 0;
  std::uint64_t degraded_batches = 0;
  std::uint64_t committed_shards = 0;
  std::uint64_t committed_rows = 0;
  std::uint64_t already_committed = 0;
  std::uint64_t stale_reports = 0;
  std::uint64_t load_batches = 0;
  std::map<std::string, NodeBatchStats> node_batches;
  std::map<std::string, std::size_t> queue_high_water;
  std::uint64_t saturated_ticks = 0;
  // (scenario-clock ms, action) for every autoscaler decision.
  std::vector<std::pair<TimestampMs, ScaleAction>> scale_actions;
};

// One worker process: pulls shards from the DDS, runs them through the
// loader -> predictor graph -> writer pipeline and commits one output file
// per shard before reporting it done.
class Worker {
 public:
  Worker(WorkerId id, PipelineSpec spec, double speed_factor, WorkerContext context);
  ~Worker();

  Worker(const Worker&) = delete;
  Worker& operator=(const Worker&) = delete;

  const WorkerId& id() const;
  void start();
  // Stop acquiring; exit once every held shard is committed.
  void drain();
  // Abrupt stop: nothing else is committed or reported.
  void kill();
  void join();
  bool finished() const;

  WorkerStats stats() const;
  // Current executors per stage ("load", node ids, "write").
  std::map<std::string, std::uint32_t> executor_counts() const;

 private:
  class Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace batchinfer
