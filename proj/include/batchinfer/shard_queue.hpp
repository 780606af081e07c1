#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "batchinfer/clock.hpp"
#include "batchinfer/types.hpp"

namespace batchinfer {

// Splits [0, dataset_size) into consecutive shards of `shard_size` records;
// the last shard may be short. Throws ConfigurationError if shard_size == 0.
std::vector<Shard> partition_dataset(std::uint64_t dataset_size, std::uint64_t shard_size);

enum class ShardingMode {
  // Workers pull from one global FIFO; fast workers take more shards.
  Dynamic,
  // Shards are pre-split into contiguous equal groups, one per worker slot.
  EvenPartition,
};

std::string_view to_string(ShardingMode mode);
std::optional<ShardingMode> parse_sharding_mode(std::string_view name);

struct AcquireResult {
  enum class Status { Granted, Exhausted, Rejected };
  Status status = Status::Exhausted;
  std::optional<Shard> shard;

  bool granted() const { return status == Status::Granted; }
};

enum class ReportResult { Accepted, StaleAttempt };

struct ProgressReport {
  std::uint64_t total = 0;
  std::uint64_t todo = 0;
  std::uint64_t doing = 0;
  std::uint64_t done = 0;
  std::map<WorkerId, std::uint64_t> per_worker_done;
};

// One line of the request/response transcript.
using TranscriptSink = std::function<void(const nlohmann::json&)>;

// The stateful data sharding service. Single owner of every shard state
// transition; workers only request, report and get reclaimed.
//
// All public operations are linearizable (one mutex) and never block on
// worker progress. Each call is stamped with a sequence number in the
// transcript, which is the serialization order.
class ShardQueue {
 public:
  struct Options {
    ShardingMode mode = ShardingMode::Dynamic;
    // EvenPartition only: number of static groups.
    std::size_t slots = 1;
  };

  ShardQueue(std::uint64_t dataset_size, std::uint64_t shard_size, const Clock& clock);
  ShardQueue(std::uint64_t dataset_size, std::uint64_t shard_size, const Clock& clock,
             Options options);

  ShardQueue(const ShardQueue&) = delete;
  ShardQueue& operator=(const ShardQueue&) = delete;

  void set_transcript(TranscriptSink sink);

  // Makes `worker` eligible to acquire. In EvenPartition mode the worker is
  // bound to the lowest free slot (a replacement inherits its predecessor's).
  void register_worker(const WorkerId& worker);
  bool is_registered(const WorkerId& worker) const;

  AcquireResult acquire_shard(const WorkerId& worker);

  // Commit-then-report: the caller must have published the shard's output.
  // Throws ProtocolError for an unknown shard id.
  ReportResult report_done(const WorkerId& worker, ShardId shard, std::uint32_t attempt);

  // Returns every DOING shard of `worker` to the tail of the pending queue
  // (ascending id), bumping its attempt. Also deregisters the worker.
  std::vector<ShardId> reclaim_worker(const WorkerId& worker);

  ProgressReport progress() const;
  bool is_complete() const;

  std::size_t shard_count() const { return shards_.size(); }
  Shard shard(ShardId id) const;
  ShardingMode mode() const { return options_.mode; }

 private:
  std::deque<ShardId>& pending_for(const WorkerId& worker);
  std::size_t pending_count() const;
  void transition(Shard& shard, ShardState to);
  void log(std::string_view op, nlohmann::json args, nlohmann::json result);

  const Clock& clock_;
  Options options_;
  mutable std::mutex mu_;
  std::vector<Shard> shards_;
  // Dynamic mode uses pending_[0]; EvenPartition keeps one queue per slot.
  std::vector<std::deque<ShardId>> pending_;
  std::map<WorkerId, std::set<ShardId>> doing_;
  std::set<ShardId> done_;
  std::map<WorkerId, std::uint64_t> done_by_worker_;
  std::set<WorkerId> registered_;
  std::map<WorkerId, std::size_t> slot_of_;
  std::set<std::size_t> free_slots_;
  TranscriptSink transcript_;
  std::uint64_t seq_ = 0;
};

}  // namespace batchinfer
