#include "batchinfer/worker.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "batchinfer/bounded_queue.hpp"
#include "batchinfer/ensemble.hpp"
#include "batchinfer/model.hpp"
#include "batchinfer/sink.hpp"
#include "batchinfer/timeout_retry.hpp"

namespace batchinfer {

namespace {

using SteadyTime = std::chrono::steady_clock;

constexpr auto kPopWait = std::chrono::milliseconds(50);
constexpr int kCommitAttempts = 3;

struct LoadTask {
  ShardId shard = 0;
  RecordId start = 0;
  RecordId end = 0;
};

struct NodeBatch {
  std::vector<Item> items;
  bool flushed = false;
};

// Executor threads of one stage. Shrinking retires the newest executor
// after its current batch; the worker-wide stop ends all of them.
class StagePool {
 public:
  using Body = std::function<void(std::stop_token worker, std::stop_token retire)>;

  StagePool(Body body, std::stop_token worker_stop) : body_(std::move(body)), worker_stop_(worker_stop) {}
  ~StagePool() { stop_and_join(); }

  void resize(std::uint32_t n) {
    std::lock_guard lock(mu_);
    while (active_.size() < n) {
      active_.emplace_back([this](std::stop_token retire) { body_(worker_stop_, retire); });
    }
    while (active_.size() > n) {
      active_.back().request_stop();
      retired_.push_back(std::move(active_.back()));
      active_.pop_back();
    }
  }

  std::uint32_t size() const {
    std::lock_guard lock(mu_);
    return static_cast<std::uint32_t>(active_.size());
  }

  void stop_and_join() {
    std::vector<std::jthread> threads;
    {
      std::lock_guard lock(mu_);
      for (auto& t : active_) threads.push_back(std::move(t));
      for (auto& t : retired_) threads.push_back(std::move(t));
      active_.clear();
      retired_.clear();
    }
    for (auto& t : threads) t.request_stop();
    for (auto& t : threads) {
      if (t.joinable()) t.join();
    }
  }

 private:
  Body body_;
  std::stop_token worker_stop_;
  mutable std::mutex mu_;
  std::vector<std::jthread> active_;
  std::vector<std::jthread> retired_;
};

}  // namespace

class Worker::Impl {
 public:
  Impl(WorkerId id, PipelineSpec spec, double speed, WorkerContext ctx)
      : id_(std::move(id)),
        spec_(std::move(spec)),
        dag_(spec_.nodes),
        speed_(speed > 0.0 ? speed : 1.0),
        ctx_(std::move(ctx)),
        ensemble_(id_),
        load_q_(spec_.queue_capacity),
        write_q_(spec_.max_inflight_shards),
        buffers_(spec_.nodes.size()),
        node_batch_count_(spec_.nodes.size()) {
    spec_.validate();
    for (std::size_t i = 0; i < spec_.nodes.size(); ++i) {
      node_q_.push_back(std::make_unique<BoundedQueue<NodeBatch>>(spec_.queue_capacity));
    }
    for (auto& c : node_batch_count_) c.store(0);
    node_stats_.resize(spec_.nodes.size());
  }

  ~Impl() {
    kill();
    join();
  }

  const WorkerId& id() const { return id_; }

  void start() {
    auto stop = stop_.get_token();
    if (spec_.mode == ExecutionMode::Pipelined) {
      load_pool_ = std::make_unique<StagePool>(
          [this](std::stop_token w, std::stop_token r) { loader_body(w, r); }, stop);
      for (std::size_t i = 0; i < spec_.nodes.size(); ++i) {
        node_pools_.push_back(std::make_unique<StagePool>(
            [this, i](std::stop_token w, std::stop_token r) { predictor_body(i, w, r); }, stop));
      }
      write_pool_ = std::make_unique<StagePool>(
          [this](std::stop_token w, std::stop_token r) { writer_body(w, r); }, stop);
      load_pool_->resize(spec_.loader.initial_executors);
      for (std::size_t i = 0; i < spec_.nodes.size(); ++i) node_pools_[i]->resize(spec_.nodes[i].executors);
      write_pool_->resize(spec_.writer.initial_executors);
      if (spec_.autoscale.enabled) {
        std::vector<PredictorCount> predictors;
        for (const auto& n : spec_.nodes) {
          predictors.push_back({n.id, n.executors, n.max_executors, n.device_demand});
        }
        autoscaler_ = std::make_unique<Autoscaler>(
            spec_.autoscale, StageCount{spec_.loader.initial_executors, spec_.loader.max_executors},
            std::move(predictors), StageCount{spec_.writer.initial_executors, spec_.writer.max_executors},
            spec_.device_units);
      }
      tick_thread_ = std::jthread([this, stop] { tick_loop(stop); });
      main_ = std::jthread([this, stop] { pipelined_loop(stop); });
    } else {
      main_ = std::jthread([this, stop] { sequential_loop(stop); });
    }
  }

  void drain() {
    draining_ = true;
    cv_.notify_all();
  }

  void kill() {
    killed_ = true;
    stop_.request_stop();
    cv_.notify_all();
  }

  void join() {
    std::lock_guard lock(join_mu_);
    if (main_.joinable()) main_.join();
  }

  bool finished() const { return finished_.load(); }

  WorkerStats stats() const {
    WorkerStats s;
    {
      std::lock_guard lock(stats_mu_);
      s = stats_;
      for (std::size_t i = 0; i < spec_.nodes.size(); ++i) s.node_batches[spec_.nodes[i].id] = node_stats_[i];
    }
    s.queue_high_water[kLoadStage] = load_q_.high_water();
    s.queue_high_water[kWriteStage] = write_q_.high_water();
    for (std::size_t i = 0; i < spec_.nodes.size(); ++i) {
      s.queue_high_water[spec_.nodes[i].id] = node_q_[i]->high_water();
    }
    return s;
  }

  std::map<std::string, std::uint32_t> executor_counts() const {
    std::map<std::string, std::uint32_t> out;
    if (spec_.mode == ExecutionMode::Sequential) {
      out[kLoadStage] = 1;
      for (const auto& n : spec_.nodes) out[n.id] = 1;
      out[kWriteStage] = 1;
      return out;
    }
    std::lock_guard lock(pools_mu_);
    if (!load_pool_) return out;
    out[kLoadStage] = load_pool_->size();
    for (std::size_t i = 0; i < spec_.nodes.size(); ++i) out[spec_.nodes[i].id] = node_pools_[i]->size();
    out[kWriteStage] = write_pool_->size();
    return out;
  }

 private:
  TimestampMs now() const { return ctx_.clock->now_ms(); }

  void metric(const std::string& series, double value) {
    if (ctx_.metrics) ctx_.metrics->record(now(), id_, series, value);
  }

  void crash_self(FailureKind kind, const std::string& why) {
    if (crashed_.exchange(true)) return;
    spdlog::warn("worker {}: {} ({})", id_, why, to_string(kind));
    killed_ = true;
    stop_.request_stop();
    cv_.notify_all();
    if (ctx_.on_self_crash) ctx_.on_self_crash(id_, kind);
  }

  // Loader half shared by both modes: read, pay the cost, open the rows.
  // Returns the items entering the graph, or nullopt when the worker stops.
  std::optional<std::vector<Item>> load(const LoadTask& task, std::stop_token stop,
                                        std::vector<ShardOutput>& finished) {
    std::vector<LoadedRecord> records;
    try {
      records = ctx_.source->read_range(task.start, task.end);
    } catch (const FetchFailure& e) {
      crash_self(FailureKind::NetworkError, e.what());
      return std::nullopt;
    }
    const double cost = spec_.loader.cost_per_record_ms * static_cast<double>(records.size()) / speed_;
    if (!simulate_work(cost, stop)) return std::nullopt;
    {
      std::lock_guard lock(stats_mu_);
      ++stats_.load_batches;
    }
    const auto roots = static_cast<std::uint32_t>(dag_.roots().size());
    std::vector<Item> items;
    items.reserve(records.size());
    for (auto& rec : records) {
      std::optional<TolerableError> error = rec.error;
      if (!error) {
        if (auto kind = ctx_.faults.record_error(rec.id)) {
          error = TolerableError{*kind, fmt::format("injected {} for record {}", to_string(*kind), rec.id)};
        }
      }
      if (error) {
        if (auto out = ensemble_.begin(rec.id, task.shard, 0, std::move(error))) finished.push_back(std::move(*out));
        continue;
      }
      if (auto out = ensemble_.begin(rec.id, task.shard, roots)) finished.push_back(std::move(*out));
      items.push_back(Item{rec.id, task.shard, {}, std::move(rec.payload)});
    }
    return items;
  }

  // Runs one predictor batch under timeout-retry. Nullopt when cancelled.
  std::optional<std::vector<ItemResult>> predict(std::size_t node_index, const std::vector<Item>& items,
                                                 bool flushed, std::stop_token stop) {
    const PredictorNode& node = spec_.nodes[node_index];
    const std::uint64_t ordinal = node_batch_count_[node_index].fetch_add(1);
    const auto begin = SteadyTime::now();
    auto outcome = run_with_timeout_retry(
        [&](std::uint32_t attempt, std::stop_token st) {
          const bool hang = ctx_.faults.hangs_on(id_, node.id, ordinal, attempt);
          return execute_batch(ctx_.seed, node, items, speed_, st, hang);
        },
        std::chrono::milliseconds(spec_.timeout_ms), spec_.max_retries, stop);
    const auto elapsed = std::chrono::duration_cast<std::chrono::nanoseconds>(SteadyTime::now() - begin);
    busy_ns_ += static_cast<std::uint64_t>(elapsed.count()) * node.device_demand;
    if (outcome.restarts > 0) {
      {
        std::lock_guard lock(stats_mu_);
        stats_.restarts += outcome.restarts;
      }
      metric(series::kRestarts, outcome.restarts);
      spdlog::info("worker {}: {} batch {} restarted {} time(s){}", id_, node.id, ordinal, outcome.restarts,
                   outcome.degraded ? ", giving up" : "");
    }
    if (outcome.cancelled) return std::nullopt;
    {
      std::lock_guard lock(stats_mu_);
      auto& ns = node_stats_[node_index];
      ++ns.batches;
      ns.items += items.size();
      if (items.size() == node.target_batch_size) ++ns.full_batches;
      if (flushed) ++ns.flushed_batches;
      if (outcome.degraded) ++stats_.degraded_batches;
    }
    if (!outcome.degraded) return std::move(*outcome.value);
    std::vector<ItemResult> results(items.size());
    for (auto& r : results) {
      r.error = TolerableError{TolerableErrorKind::Timeout,
                               fmt::format("{}: batch timed out after {} attempts", node.id, spec_.max_retries + 1)};
    }
    return results;
  }

  // Settles a predicted batch and returns the children for each successor.
  std::vector<std::vector<Item>> settle(std::size_t node_index, std::vector<Item>& items,
                                        std::vector<ItemResult>& results, std::vector<ShardOutput>& finished) {
    const auto& succ = dag_.successors(node_index);
    const bool is_sink = dag_.is_sink(node_index);
    const std::string& node_id = spec_.nodes[node_index].id;
    std::vector<std::vector<Item>> children(succ.size());
    for (std::size_t k = 0; k < items.size(); ++k) {
      // Settle first so the row counts the children before they can finish.
      if (auto out = ensemble_.settle(items[k], node_id, is_sink, results[k], succ.size())) {
        finished.push_back(std::move(*out));
      }
      if (is_sink || results[k].error) continue;
      for (std::size_t s = 0; s < succ.size(); ++s) {
        if (s + 1 == succ.size()) {
          for (auto& child : results[k].outputs) children[s].push_back(std::move(child));
        } else {
          children[s].insert(children[s].end(), results[k].outputs.begin(), results[k].outputs.end());
        }
      }
    }
    return children;
  }

  // Publishes and reports one shard. Returns false if the worker stopped.
  bool write_shard(const ShardOutput& out, std::stop_token stop) {
    const double cost = spec_.writer.cost_per_record_ms * static_cast<double>(out.rows.size()) / speed_;
    if (!simulate_work(cost, stop)) return false;
    std::optional<CommitResult> result;
    for (int attempt = 0; attempt < kCommitAttempts && !result; ++attempt) {
      if (stop.stop_requested()) return false;
      try {
        result = commit_shard(out, ctx_.sink_dir);
      } catch (const IoError& e) {
        spdlog::warn("worker {}: commit of shard {} failed: {}", id_, out.shard_id, e.what());
      }
    }
    if (!result) {
      crash_self(FailureKind::HardwareFailure, fmt::format("cannot commit shard {}", out.shard_id));
      return false;
    }
    if (*result == CommitResult::Committed) {
      {
        std::lock_guard lock(stats_mu_);
        ++stats_.committed_shards;
        stats_.committed_rows += out.rows.size();
      }
      metric(series::kCompletedRecords, static_cast<double>(out.rows.size()));
      metric(series::kCompletedShards, 1.0);
    } else {
      std::lock_guard lock(stats_mu_);
      ++stats_.already_committed;
    }
    if (stop.stop_requested()) return false;
    if (ctx_.dds->report_done(id_, out.shard_id, out.attempt) == ReportResult::StaleAttempt) {
      std::lock_guard lock(stats_mu_);
      ++stats_.stale_reports;
    }
    return true;
  }

  // ---- pipelined mode ----

  void task_done() {
    std::lock_guard lock(buf_mu_);
    if (--outstanding_ == 0) cv_.notify_all();
  }

  // Adds items to a node's rebatch buffer and queues every full batch.
  void enqueue(std::size_t node_index, std::vector<Item> items, std::stop_token stop) {
    if (items.empty()) return;
    const std::size_t target = spec_.nodes[node_index].target_batch_size;
    std::vector<NodeBatch> ready;
    {
      std::lock_guard lock(buf_mu_);
      auto& buf = buffers_[node_index];
      for (auto& item : items) {
        buf.push_back(std::move(item));
        if (buf.size() == target) {
          ready.push_back(NodeBatch{std::move(buf), false});
          buf.clear();
        }
      }
      outstanding_ += ready.size();
    }
    for (auto& b : ready) {
      if (!node_q_[node_index]->push(std::move(b), stop)) return;
    }
  }

  // When nothing is queued or running, releases the first partial buffer
  // in topological order so a short tail cannot wait forever.
  void flush_if_idle(std::stop_token stop) {
    std::optional<std::pair<std::size_t, NodeBatch>> flush;
    {
      std::lock_guard lock(buf_mu_);
      if (outstanding_ != 0) return;
      for (std::size_t i : dag_.order()) {
        if (buffers_[i].empty()) continue;
        flush.emplace(i, NodeBatch{std::move(buffers_[i]), true});
        buffers_[i].clear();
        ++outstanding_;
        break;
      }
    }
    if (flush) node_q_[flush->first]->push(std::move(flush->second), stop);
  }

  void emit(std::vector<ShardOutput>& finished, std::stop_token stop) {
    for (auto& out : finished) write_q_.push(std::move(out), stop);
    finished.clear();
  }

  void loader_body(std::stop_token stop, std::stop_token retire) {
    while (!stop.stop_requested() && !retire.stop_requested()) {
      auto task = load_q_.pop_for(kPopWait, stop);
      if (!task) continue;
      std::vector<ShardOutput> finished;
      auto items = load(*task, stop, finished);
      if (!items) return;
      emit(finished, stop);
      for (std::size_t r : dag_.roots()) enqueue(r, *items, stop);
      task_done();
    }
  }

  void predictor_body(std::size_t node_index, std::stop_token stop, std::stop_token retire) {
    while (!stop.stop_requested() && !retire.stop_requested()) {
      auto batch = node_q_[node_index]->pop_for(kPopWait, stop);
      if (!batch) continue;
      auto results = predict(node_index, batch->items, batch->flushed, stop);
      if (!results) return;
      std::vector<ShardOutput> finished;
      auto children = settle(node_index, batch->items, *results, finished);
      emit(finished, stop);
      const auto& succ = dag_.successors(node_index);
      for (std::size_t s = 0; s < succ.size(); ++s) enqueue(succ[s], std::move(children[s]), stop);
      task_done();
    }
  }

  void writer_body(std::stop_token stop, std::stop_token retire) {
    while (!stop.stop_requested() && !retire.stop_requested()) {
      auto out = write_q_.pop_for(kPopWait, stop);
      if (!out) continue;
      if (!write_shard(*out, stop)) return;
      {
        std::lock_guard lock(buf_mu_);
        --inflight_;
      }
      cv_.notify_all();
    }
  }

  void start_shard(const Shard& shard, std::stop_token stop) {
    ensemble_.open_shard(shard.id, shard.attempt, shard.range);
    {
      std::lock_guard lock(buf_mu_);
      ++inflight_;
    }
    for (RecordId s = shard.range.start; s < shard.range.end; s += spec_.batch_size) {
      const RecordId e = std::min<RecordId>(s + spec_.batch_size, shard.range.end);
      {
        std::lock_guard lock(buf_mu_);
        ++outstanding_;
      }
      if (!load_q_.push(LoadTask{shard.id, s, e}, stop)) return;
    }
  }

  void pipelined_loop(std::stop_token stop) {
    bool natural = false;
    while (!stop.stop_requested()) {
      const bool was_draining = draining_;
      std::uint64_t inflight;
      {
        std::lock_guard lock(buf_mu_);
        inflight = inflight_;
      }
      if (draining_ && inflight == 0) {
        natural = true;
        break;
      }
      bool exhausted = false;
      if (!draining_ && inflight < spec_.max_inflight_shards) {
        auto r = ctx_.dds->acquire_shard(id_);
        if (r.granted()) {
          start_shard(*r.shard, stop);
          continue;
        }
        if (r.status == AcquireResult::Status::Rejected) break;
        exhausted = true;
      }
      if (exhausted && inflight == 0 && ctx_.dds->is_complete()) {
        natural = true;
        break;
      }
      flush_if_idle(stop);
      std::unique_lock lock(buf_mu_);
      cv_.wait_for(lock, stop, std::chrono::milliseconds(ctx_.idle_poll_ms), [&] {
        return inflight_ < inflight || (outstanding_ == 0 && !buffers_empty_locked()) ||
               draining_.load() != was_draining;
      });
    }
    shutdown(natural);
  }

  bool buffers_empty_locked() const {
    return std::all_of(buffers_.begin(), buffers_.end(), [](const auto& b) { return b.empty(); });
  }

  Observation observe(double window_ns) {
    Observation obs;
    obs.predict_input_occupancy = node_q_[dag_.roots().front()]->occupancy();
    for (const auto& q : node_q_) obs.node_occupancy.push_back(q->occupancy());
    obs.write_occupancy = write_q_.occupancy();
    double capacity = spec_.device_units;
    if (capacity == 0) {
      for (std::size_t i = 0; i < spec_.nodes.size(); ++i) {
        capacity += static_cast<double>(node_pools_[i]->size()) * spec_.nodes[i].device_demand;
      }
    }
    const std::uint64_t busy = busy_ns_.load();
    const double delta = static_cast<double>(busy - last_busy_ns_);
    last_busy_ns_ = busy;
    obs.utilization = capacity > 0 && window_ns > 0 ? std::min(1.0, delta / (window_ns * capacity)) : 0.0;
    return obs;
  }

  void tick_loop(std::stop_token stop) {
    const auto interval = std::chrono::milliseconds(spec_.autoscale.tick_interval_ms);
    auto last = SteadyTime::now();
    std::mutex mu;
    std::condition_variable_any cv;
    while (!stop.stop_requested()) {
      {
        std::unique_lock lock(mu);
        if (cv.wait_for(lock, stop, interval, [] { return false; })) break;
      }
      if (stop.stop_requested()) break;
      const auto t = SteadyTime::now();
      const double window_ns = static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(t - last).count());
      last = t;
      const Observation obs = observe(window_ns);
      if (autoscaler_) {
        for (const auto& action : autoscaler_->tick(obs)) apply(action);
      }
      metric(std::string(series::kQueuePrefix) + kLoadStage, load_q_.occupancy());
      for (std::size_t i = 0; i < spec_.nodes.size(); ++i) {
        metric(series::kQueuePrefix + spec_.nodes[i].id, obs.node_occupancy[i]);
      }
      metric(std::string(series::kQueuePrefix) + kWriteStage, obs.write_occupancy);
      metric(series::kUtilization, obs.utilization);
      for (const auto& [stage, n] : executor_counts()) metric(series::kExecutorsPrefix + stage, n);
    }
  }

  void apply(const ScaleAction& action) {
    {
      std::lock_guard lock(stats_mu_);
      stats_.scale_actions.emplace_back(now(), action);
      stats_.saturated_ticks = autoscaler_->saturated_ticks();
    }
    std::lock_guard lock(pools_mu_);
    switch (action.stage) {
      case ScaleAction::Stage::Loader:
        load_pool_->resize(autoscaler_->loaders());
        break;
      case ScaleAction::Stage::Writer:
        write_pool_->resize(autoscaler_->writers());
        break;
      case ScaleAction::Stage::Predictor:
        for (std::size_t i = 0; i < spec_.nodes.size(); ++i) {
          if (spec_.nodes[i].id == action.node) node_pools_[i]->resize(autoscaler_->predictors(i));
        }
        break;
    }
    const std::string stage = action.stage == ScaleAction::Stage::Loader   ? kLoadStage
                              : action.stage == ScaleAction::Stage::Writer ? kWriteStage
                                                                           : action.node;
    spdlog::debug("worker {}: {} executors {:+d}", id_, stage, action.delta);
  }

  // ---- sequential mode ----

  bool run_shard_sequential(const Shard& shard, std::stop_token stop) {
    ensemble_.open_shard(shard.id, shard.attempt, shard.range);
    std::vector<ShardOutput> finished;
    for (RecordId s = shard.range.start; s < shard.range.end; s += spec_.batch_size) {
      const RecordId e = std::min<RecordId>(s + spec_.batch_size, shard.range.end);
      auto items = load(LoadTask{shard.id, s, e}, stop, finished);
      if (!items) return false;
      std::vector<std::vector<Item>> inputs(spec_.nodes.size());
      for (std::size_t r : dag_.roots()) inputs[r] = *items;
      for (std::size_t i : dag_.order()) {
        const std::size_t target = spec_.nodes[i].target_batch_size;
        auto& in = inputs[i];
        for (std::size_t off = 0; off < in.size(); off += target) {
          const std::size_t end = std::min(in.size(), off + target);
          std::vector<Item> chunk(std::make_move_iterator(in.begin() + off), std::make_move_iterator(in.begin() + end));
          auto results = predict(i, chunk, false, stop);
          if (!results) return false;
          auto children = settle(i, chunk, *results, finished);
          const auto& succ = dag_.successors(i);
          for (std::size_t k = 0; k < succ.size(); ++k) {
            auto& dst = inputs[succ[k]];
            dst.insert(dst.end(), std::make_move_iterator(children[k].begin()),
                       std::make_move_iterator(children[k].end()));
          }
        }
        in.clear();
      }
    }
    for (const auto& out : finished) {
      if (!write_shard(out, stop)) return false;
    }
    return true;
  }

  void sequential_loop(std::stop_token stop) {
    bool natural = false;
    while (!stop.stop_requested()) {
      if (draining_) {
        natural = true;
        break;
      }
      auto r = ctx_.dds->acquire_shard(id_);
      if (r.granted()) {
        if (!run_shard_sequential(*r.shard, stop)) break;
        continue;
      }
      if (r.status == AcquireResult::Status::Rejected) break;
      if (ctx_.dds->is_complete()) {
        natural = true;
        break;
      }
      std::unique_lock lock(buf_mu_);
      cv_.wait_for(lock, stop, std::chrono::milliseconds(ctx_.idle_poll_ms), [&] { return draining_.load(); });
    }
    shutdown(natural);
  }

  void shutdown(bool natural) {
    stop_.request_stop();
    tick_thread_ = {};
    {
      std::lock_guard lock(pools_mu_);
      if (load_pool_) load_pool_->stop_and_join();
      for (auto& p : node_pools_) p->stop_and_join();
      if (write_pool_) write_pool_->stop_and_join();
    }
    finished_ = true;
    if (natural && !killed_ && ctx_.on_exit) ctx_.on_exit(id_);
  }

  const WorkerId id_;
  PipelineSpec spec_;
  const Dag dag_;
  const double speed_;
  WorkerContext ctx_;
  EnsembleSink ensemble_;

  std::stop_source stop_;
  std::atomic<bool> draining_{false};
  std::atomic<bool> killed_{false};
  std::atomic<bool> crashed_{false};
  std::atomic<bool> finished_{false};

  BoundedQueue<LoadTask> load_q_;
  std::vector<std::unique_ptr<BoundedQueue<NodeBatch>>> node_q_;
  BoundedQueue<ShardOutput> write_q_;

  // Guards the rebatch buffers and the two counters; cv_ wakes the shard loop.
  std::mutex buf_mu_;
  std::condition_variable_any cv_;
  std::vector<std::vector<Item>> buffers_;
  std::uint64_t outstanding_ = 0;  // batches queued or executing
  std::uint64_t inflight_ = 0;     // shards acquired and not yet reported

  std::vector<std::atomic<std::uint64_t>> node_batch_count_;
  std::atomic<std::uint64_t> busy_ns_{0};
  std::uint64_t last_busy_ns_ = 0;

  mutable std::mutex stats_mu_;
  WorkerStats stats_;
  std::vector<NodeBatchStats> node_stats_;

  mutable std::mutex pools_mu_;
  std::unique_ptr<StagePool> load_pool_;
  std::vector<std::unique_ptr<StagePool>> node_pools_;
  std::unique_ptr<StagePool> write_pool_;
  std::unique_ptr<Autoscaler> autoscaler_;

  std::jthread tick_thread_;
  std::mutex join_mu_;
  std::jthread main_;
};

Worker::Worker(WorkerId id, PipelineSpec spec, double speed_factor, WorkerContext context)
    : impl_(std::make_unique<Impl>(std::move(id), std::move(spec), speed_factor, std::move(context))) {}

Worker::~Worker() = default;

const WorkerId& Worker::id() const { return impl_->id(); }
void Worker::start() { impl_->start(); }
void Worker::drain() { impl_->drain(); }
void Worker::kill() { impl_->kill(); }
void Worker::join() { impl_->join(); }
bool Worker::finished() const { return impl_->finished(); }
WorkerStats Worker::stats() const { return impl_->stats(); }
std::map<std::string, std::uint32_t> Worker::executor_counts() const { return impl_->executor_counts(); }

}  // namespace batchinfer
