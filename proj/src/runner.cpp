#include "batchinfer/runner.hpp"

#include <chrono>
#include <deque>
#include <fstream>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

#include "batchinfer/cluster.hpp"
#include "batchinfer/dataset.hpp"
#include "batchinfer/shard_queue.hpp"

namespace batchinfer {

namespace {

namespace fs = std::filesystem;

constexpr TimestampMs kSummaryWindowMs = 1000;

class JsonlWriter {
 public:
  explicit JsonlWriter(const fs::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw IoError("cannot write " + path.string());
  }
  void write(const nlohmann::json& j) {
    std::lock_guard lock(mu_);
    out_ << j.dump() << '\n';
  }
  void flush() {
    std::lock_guard lock(mu_);
    out_.flush();
  }

 private:
  std::mutex mu_;
  std::ofstream out_;
};

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Runs the per-node Worker objects for the controller. Workers report
// exits through a queue that the controller thread drains.
class Fleet final : public WorkerFleet {
 public:
  Fleet(PipelineSpec spec, WorkerContext base, SimCluster& cluster) : spec_(std::move(spec)), base_(std::move(base)) {
    base_.on_exit = [this](const WorkerId& id) {
      std::lock_guard lock(exits_mu_);
      exits_.push_back(id);
    };
    base_.on_self_crash = [&cluster](const WorkerId& id, FailureKind kind) { cluster.inject_crash(id, kind); };
  }

  ~Fleet() override { finish_all(); }

  void start(const NodeSpec& node) override {
    auto worker = std::make_unique<Worker>(node.id, spec_, node.speed_factor, base_);
    worker->start();
    workers_[node.id] = std::move(worker);
    spdlog::info("fleet: started worker on {} (speed {:.2f}, {})", node.id, node.speed_factor,
                 to_string(node.node_class));
  }

  void terminate(const NodeId& node) override {
    auto it = workers_.find(node);
    if (it == workers_.end()) return;
    it->second->kill();
    retire(it);
  }

  void drain(const NodeId& node) override {
    auto it = workers_.find(node);
    if (it != workers_.end()) it->second->drain();
  }

  std::vector<WorkerId> take_exits() {
    std::lock_guard lock(exits_mu_);
    std::vector<WorkerId> out(exits_.begin(), exits_.end());
    exits_.clear();
    return out;
  }

  // Joins a worker that already exited on its own.
  void reap(const NodeId& node) {
    auto it = workers_.find(node);
    if (it != workers_.end()) retire(it);
  }

  void finish_all() {
    for (auto& [_, w] : workers_) w->kill();
    while (!workers_.empty()) retire(workers_.begin());
  }

  const std::map<WorkerId, WorkerStats>& stats() const { return stats_; }

 private:
  void retire(std::map<NodeId, std::unique_ptr<Worker>>::iterator it) {
    it->second->join();
    stats_[it->first] = it->second->stats();
    workers_.erase(it);
  }

  PipelineSpec spec_;
  WorkerContext base_;
  std::map<NodeId, std::unique_ptr<Worker>> workers_;
  std::map<WorkerId, WorkerStats> stats_;
  std::mutex exits_mu_;
  std::deque<WorkerId> exits_;
};

bool holds_output(const fs::path& dir) {
  if (!fs::exists(dir)) return false;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".jsonl") return true;
  }
  return false;
}

}  // namespace

RunResult run_job(const RunOptions& options) {
  RunResult result;
  const JobSpec& job = options.job;
  Scenario scenario = options.scenario;
  result.seed = options.seed.value_or(scenario.seed);
  scenario.seed = result.seed;
  result.time_scale = options.time_scale.value_or(job.runner.time_scale.value_or(1.0));
  if (!(result.time_scale > 0.0)) throw ConfigurationError("time scale must be > 0");

  const PipelineSpec pipeline = job.pipeline();
  pipeline.validate();
  const ScalePolicy policy = job.scale_policy();
  policy.validate();

  fs::create_directories(options.out_dir);
  result.sink_dir = options.out_dir / job.writer.output_path;
  if (holds_output(result.sink_dir)) {
    throw ConfigurationError(result.sink_dir.string() + " already holds output; use a fresh run directory");
  }
  fs::create_directories(result.sink_dir);

  const DatasetManifest manifest = load_manifest(job.data.source_path);
  const DatasetReader reader(manifest);

  write_json(options.out_dir / "job.json", job.to_json());
  write_json(options.out_dir / "scenario.json", to_json(scenario));
  write_json(options.out_dir / "run.json", {{"seed", result.seed},
                                            {"time_scale", result.time_scale},
                                            {"dataset_size", manifest.dataset_size},
                                            {"source_path", fs::absolute(job.data.source_path).string()}});

  JsonlWriter transcript_log(options.out_dir / "dds_transcript.jsonl");
  JsonlWriter cluster_log(options.out_dir / "cluster_events.jsonl");
  JsonlWriter action_log(options.out_dir / "controller_actions.jsonl");

  SteadyClock clock;
  ShardQueue::Options dds_options;
  dds_options.mode = job.sharding_mode;
  dds_options.slots = job.engine.worker_num;
  ShardQueue dds(manifest.dataset_size, job.data.shard_size, clock, dds_options);
  dds.set_transcript([&](const nlohmann::json& j) { transcript_log.write(j); });

  SimCluster cluster(scenario, clock, result.time_scale);
  cluster.set_event_sink([&](const ClusterEvent& e) { cluster_log.write(to_json(e)); });

  MetricsCollector metrics;
  WorkerContext ctx;
  ctx.dds = &dds;
  ctx.source = &reader;
  ctx.sink_dir = result.sink_dir;
  ctx.metrics = &metrics;
  ctx.clock = &clock;
  ctx.seed = result.seed;
  ctx.faults = scenario.faults;

  std::vector<Action> actions;
  {
    Fleet fleet(pipeline, ctx, cluster);
    Controller controller(policy, cluster, dds, fleet, clock);
    controller.set_action_log([&](const nlohmann::json& j) { action_log.write(j); });
    auto keep = [&](std::vector<Action> more) {
      for (auto& a : more) actions.push_back(std::move(a));
    };

    keep(controller.reconcile());
    std::size_t cursor = 0;
    TimestampMs next_check = clock.now_ms() + policy.scale_check_interval_ms;
    while (true) {
      for (const auto& event : cluster.poll_new(cursor)) keep(controller.handle_event(event));
      for (const auto& node : fleet.take_exits()) {
        const bool known = controller.has_worker(node);
        keep(controller.on_worker_exited(node));
        if (known && !controller.has_worker(node)) fleet.reap(node);
      }
      if (controller.verdict().state != Verdict::Running) break;
      if (dds.is_complete()) {
        controller.mark_completed();
        break;
      }
      const TimestampMs now = clock.now_ms();
      if (now >= next_check) {
        keep(controller.reconcile());
        metrics.record(now, "controller", "workers.active", controller.active_workers());
        next_check = now + policy.scale_check_interval_ms;
      }
      if (now >= options.deadline_ms) {
        spdlog::error("run: deadline of {} ms passed with {} of {} shards done", options.deadline_ms,
                      dds.progress().done, dds.shard_count());
        result.timed_out = true;
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(options.controller_poll_ms));
    }
    result.verdict = controller.verdict();
    fleet.finish_all();
    result.workers = fleet.stats();
    result.summary.failovers = controller.failovers();
  }
  transcript_log.flush();
  cluster_log.flush();
  action_log.flush();

  const auto samples = metrics.snapshot();
  write_csv(samples, options.out_dir / "metrics.csv");
  const std::uint64_t failovers = result.summary.failovers;
  result.summary = summarize(samples, kSummaryWindowMs);
  result.summary.failovers = failovers;
  result.completed_by_worker = metrics.total_by_worker(series::kCompletedRecords);

  result.integrity = verify_output(manifest.dataset_size, result.sink_dir);
  result.summary.error_rows = result.integrity.error_rows();
  write_json(options.out_dir / "summary.json", result.summary.to_json());
  write_json(options.out_dir / "integrity.json", result.integrity.to_json());

  result.cluster_events = cluster.transcript();
  result.actions = std::move(actions);

  if (result.verdict.state == Verdict::FailedUnretryable) {
    result.exit_code = kExitUnretryable;
  } else if (result.verdict.state == Verdict::Completed && result.integrity.passed()) {
    result.exit_code = kExitOk;
  } else {
    result.exit_code = kExitIntegrity;
  }
  return result;
}

}  // namespace batchinfer
