#include "batchinfer/shard_queue.hpp"

#include <algorithm>
#include <string>

namespace batchinfer {

std::vector<Shard> partition_dataset(std::uint64_t dataset_size, std::uint64_t shard_size) {
  if (shard_size == 0) throw ConfigurationError("shard_size must be >= 1");
  std::vector<Shard> shards;
  shards.reserve(static_cast<std::size_t>((dataset_size + shard_size - 1) / shard_size));
  for (RecordId start = 0; start < dataset_size; start += shard_size) {
    Shard s;
    s.id = static_cast<ShardId>(shards.size());
    s.range = {start, std::min<RecordId>(start + shard_size, dataset_size)};
    shards.push_back(std::move(s));
  }
  return shards;
}

std::string_view to_string(ShardingMode mode) {
  return mode == ShardingMode::Dynamic ? "DDS" : "EvenPartition";
}

std::optional<ShardingMode> parse_sharding_mode(std::string_view name) {
  if (name == "DDS") return ShardingMode::Dynamic;
  if (name == "EvenPartition") return ShardingMode::EvenPartition;
  return std::nullopt;
}

ShardQueue::ShardQueue(std::uint64_t dataset_size, std::uint64_t shard_size, const Clock& clock)
    : ShardQueue(dataset_size, shard_size, clock, Options{}) {}

ShardQueue::ShardQueue(std::uint64_t dataset_size, std::uint64_t shard_size, const Clock& clock,
                       Options options)
    : clock_(clock), options_(options), shards_(partition_dataset(dataset_size, shard_size)) {
  if (options_.mode == ShardingMode::Dynamic) {
    pending_.resize(1);
    for (const auto& s : shards_) pending_[0].push_back(s.id);
    return;
  }
  if (options_.slots == 0) throw ConfigurationError("EvenPartition needs at least one slot");
  pending_.resize(options_.slots);
  const std::size_t n = shards_.size();
  for (std::size_t slot = 0; slot < options_.slots; ++slot) {
    const std::size_t begin = slot * n / options_.slots;
    const std::size_t end = (slot + 1) * n / options_.slots;
    for (std::size_t i = begin; i < end; ++i) pending_[slot].push_back(static_cast<ShardId>(i));
    free_slots_.insert(slot);
  }
}

void ShardQueue::set_transcript(TranscriptSink sink) {
  std::lock_guard lock(mu_);
  transcript_ = std::move(sink);
}

void ShardQueue::log(std::string_view op, nlohmann::json args, nlohmann::json result) {
  const std::uint64_t seq = seq_++;
  if (!transcript_) return;
  transcript_(nlohmann::json{{"seq", seq},
                             {"ts", clock_.now_ms()},
                             {"op", op},
                             {"args", std::move(args)},
                             {"result", std::move(result)}});
}

void ShardQueue::transition(Shard& shard, ShardState to) {
  if (!is_legal_transition(shard.state, to)) {
    throw ProtocolError("illegal shard transition " + std::string(to_string(shard.state)) +
                        " -> " + std::string(to_string(to)) + " for shard " +
                        std::to_string(shard.id));
  }
  shard.state = to;
}

void ShardQueue::register_worker(const WorkerId& worker) {
  std::lock_guard lock(mu_);
  nlohmann::json result = {{"status", "registered"}};
  if (registered_.insert(worker).second && options_.mode == ShardingMode::EvenPartition &&
      !free_slots_.empty()) {
    const std::size_t slot = *free_slots_.begin();
    free_slots_.erase(free_slots_.begin());
    slot_of_[worker] = slot;
    result["slot"] = slot;
  }
  log("register", {{"worker", worker}}, std::move(result));
}

bool ShardQueue::is_registered(const WorkerId& worker) const {
  std::lock_guard lock(mu_);
  return registered_.contains(worker);
}

std::deque<ShardId>& ShardQueue::pending_for(const WorkerId& worker) {
  if (options_.mode == ShardingMode::Dynamic) return pending_[0];
  return pending_[slot_of_.at(worker)];
}

AcquireResult ShardQueue::acquire_shard(const WorkerId& worker) {
  std::lock_guard lock(mu_);
  if (!registered_.contains(worker)) {
    log("acquire", {{"worker", worker}}, {{"status", "rejected"}});
    return {AcquireResult::Status::Rejected, std::nullopt};
  }
  const bool has_queue =
      options_.mode == ShardingMode::Dynamic || slot_of_.contains(worker);
  if (!has_queue || pending_for(worker).empty()) {
    log("acquire", {{"worker", worker}}, {{"status", "exhausted"}});
    return {AcquireResult::Status::Exhausted, std::nullopt};
  }
  auto& queue = pending_for(worker);
  Shard& shard = shards_[queue.front()];
  queue.pop_front();
  transition(shard, ShardState::Doing);
  shard.assigned_worker = worker;
  shard.assigned_at = clock_.now_ms();
  doing_[worker].insert(shard.id);
  log("acquire", {{"worker", worker}},
      {{"status", "granted"}, {"shard", shard.id}, {"attempt", shard.attempt}});
  return {AcquireResult::Status::Granted, shard};
}

ReportResult ShardQueue::report_done(const WorkerId& worker, ShardId id, std::uint32_t attempt) {
  std::lock_guard lock(mu_);
  nlohmann::json args = {{"worker", worker}, {"shard", id}, {"attempt", attempt}};
  if (id >= shards_.size()) {
    log("report_done", std::move(args), {{"status", "unknown_shard"}});
    throw ProtocolError("report_done for unknown shard " + std::to_string(id));
  }
  Shard& shard = shards_[id];
  if (shard.state != ShardState::Doing || shard.assigned_worker != worker ||
      shard.attempt != attempt) {
    log("report_done", std::move(args), {{"status", "stale"}});
    return ReportResult::StaleAttempt;
  }
  transition(shard, ShardState::Done);
  shard.assigned_worker.reset();
  doing_[worker].erase(id);
  if (doing_[worker].empty()) doing_.erase(worker);
  done_.insert(id);
  ++done_by_worker_[worker];
  log("report_done", std::move(args), {{"status", "accepted"}});
  return ReportResult::Accepted;
}

std::vector<ShardId> ShardQueue::reclaim_worker(const WorkerId& worker) {
  std::lock_guard lock(mu_);
  std::vector<ShardId> reclaimed;
  if (auto it = doing_.find(worker); it != doing_.end()) {
    reclaimed.assign(it->second.begin(), it->second.end());  // std::set: ascending
    auto& queue = pending_for(worker);
    for (ShardId id : reclaimed) {
      Shard& shard = shards_[id];
      transition(shard, ShardState::Todo);
      shard.assigned_worker.reset();
      ++shard.attempt;
      queue.push_back(id);
    }
    doing_.erase(it);
  }
  registered_.erase(worker);
  if (auto it = slot_of_.find(worker); it != slot_of_.end()) {
    free_slots_.insert(it->second);
    slot_of_.erase(it);
  }
  log("reclaim", {{"worker", worker}}, {{"shards", reclaimed}});
  return reclaimed;
}

std::size_t ShardQueue::pending_count() const {
  std::size_t n = 0;
  for (const auto& q : pending_) n += q.size();
  return n;
}

ProgressReport ShardQueue::progress() const {
  std::lock_guard lock(mu_);
  ProgressReport report;
  report.total = shards_.size();
  report.todo = pending_count();
  for (const auto& [_, ids] : doing_) report.doing += ids.size();
  report.done = done_.size();
  report.per_worker_done = done_by_worker_;
  return report;
}

bool ShardQueue::is_complete() const {
  std::lock_guard lock(mu_);
  return done_.size() == shards_.size();
}

Shard ShardQueue::shard(ShardId id) const {
  std::lock_guard lock(mu_);
  if (id >= shards_.size()) throw ProtocolError("unknown shard " + std::to_string(id));
  return shards_[id];
}

}  // namespace batchinfer
