#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "batchinfer/model.hpp"
#include "batchinfer/sink.hpp"

namespace batchinfer {

// Collects the fan-out tree of every origin record back into one output row.
//
// Each origin keeps a count of (item, node) pairs still in flight. A settled
// item removes itself and adds one pair per output per successor; outputs of
// the sink node become segments instead. A row is final when the count
// drops to zero, and a shard's output is released once every row is final.
//
// When several branches fail, the row keeps the error with the smallest
// (node id, lineage), so the result does not depend on scheduling.
class EnsembleSink {
 public:
  explicit EnsembleSink(WorkerId worker) : worker_(std::move(worker)) {}

  void open_shard(ShardId shard, std::uint32_t attempt, RecordRange range);

  // Starts tracking `origin` with `pending` pairs in flight. A record that
  // failed before reaching the graph passes its error and pending == 0.
  std::optional<ShardOutput> begin(RecordId origin, ShardId shard, std::uint32_t pending,
                                   std::optional<TolerableError> error = std::nullopt);

  // `item` was consumed by `node`.
  std::optional<ShardOutput> settle(const Item& item, const std::string& node, bool is_sink,
                                    const ItemResult& result, std::size_t successor_count);

  // Drops a shard's partial state (the worker is being torn down).
  void abandon(ShardId shard);
  std::size_t open_shards() const;

 private:
  using Key = std::pair<std::string, std::vector<std::uint32_t>>;
  struct Row {
    std::uint64_t pending = 0;
    std::optional<std::pair<Key, TolerableError>> error;
    std::map<Key, std::string> segments;
    bool started = false;
  };
  struct OpenShard {
    std::uint32_t attempt = 0;
    RecordRange range;
    std::map<RecordId, Row> rows;
    std::uint64_t final_rows = 0;
  };

  std::optional<ShardOutput> finish_if_done(ShardId shard, OpenShard& open, Row& row);

  WorkerId worker_;
  mutable std::mutex mu_;
  std::map<ShardId, OpenShard> shards_;
};

}  // namespace batchinfer
