#include "batchinfer/ensemble.hpp"

#include <fmt/format.h>

namespace batchinfer {

void EnsembleSink::open_shard(ShardId shard, std::uint32_t attempt, RecordRange range) {
  std::lock_guard lock(mu_);
  auto& open = shards_[shard];
  open = OpenShard{};
  open.attempt = attempt;
  open.range = range;
}

std::optional<ShardOutput> EnsembleSink::begin(RecordId origin, ShardId shard, std::uint32_t pending,
                                               std::optional<TolerableError> error) {
  std::lock_guard lock(mu_);
  auto it = shards_.find(shard);
  if (it == shards_.end()) throw ProtocolError(fmt::format("ensemble: shard {} is not open", shard));
  OpenShard& open = it->second;
  if (!open.range.contains(origin))
    throw ProtocolError(fmt::format("ensemble: record {} outside shard {}", origin, shard));
  Row& row = open.rows[origin];
  if (row.started) throw ProtocolError(fmt::format("ensemble: record {} started twice", origin));
  row.started = true;
  row.pending += pending;
  if (error) row.error = std::make_pair(Key{}, *error);
  return finish_if_done(shard, open, row);
}

std::optional<ShardOutput> EnsembleSink::settle(const Item& item, const std::string& node, bool is_sink,
                                                const ItemResult& result, std::size_t successor_count) {
  std::lock_guard lock(mu_);
  auto it = shards_.find(item.shard);
  if (it == shards_.end()) return std::nullopt;  // abandoned
  OpenShard& open = it->second;
  auto rit = open.rows.find(item.origin);
  if (rit == open.rows.end() || rit->second.pending == 0)
    throw ProtocolError(fmt::format("ensemble: unexpected item for record {} at {}", item.origin, node));
  Row& row = rit->second;
  row.pending -= 1;
  if (result.error) {
    Key key{node, item.lineage};
    if (!row.error || key < row.error->first) row.error = std::make_pair(std::move(key), *result.error);
  } else if (is_sink) {
    for (const Item& out : result.outputs) row.segments[Key{node, out.lineage}] = out.payload;
  } else {
    row.pending += result.outputs.size() * successor_count;
  }
  return finish_if_done(item.shard, open, row);
}

std::optional<ShardOutput> EnsembleSink::finish_if_done(ShardId shard, OpenShard& open, Row& row) {
  if (row.pending > 0) return std::nullopt;
  ++open.final_rows;
  if (open.final_rows < open.range.size()) return std::nullopt;

  ShardOutput out;
  out.shard_id = shard;
  out.attempt = open.attempt;
  out.range = open.range;
  out.rows.reserve(open.rows.size());
  for (auto& [id, r] : open.rows) {
    ResultRecord rec;
    rec.record_id = id;
    rec.origin_record_id = id;
    rec.shard_id = shard;
    rec.attempt = open.attempt;
    rec.worker_id = worker_;
    if (r.error) {
      rec.error = r.error->second;
    } else {
      for (auto& [key, payload] : r.segments) rec.segments.push_back(std::move(payload));
    }
    out.rows.push_back(std::move(rec));
  }
  shards_.erase(shard);
  return out;
}

void EnsembleSink::abandon(ShardId shard) {
  std::lock_guard lock(mu_);
  shards_.erase(shard);
}

std::size_t EnsembleSink::open_shards() const {
  std::lock_guard lock(mu_);
  return shards_.size();
}

}  // namespace batchinfer
