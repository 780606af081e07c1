#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "batchinfer/cluster.hpp"
#include "batchinfer/shard_queue.hpp"

namespace batchinfer {

struct ScalePolicy {
  std::uint32_t target_workers = 1;
  // Fraction of workers placed on on-demand capacity.
  double priority = 1.0;
  std::uint32_t min_workers = 1;
  TimestampMs scale_check_interval_ms = 100;

  void validate() const;
};

struct ClassSplit {
  std::uint32_t on_demand = 0;
  std::uint32_t spot = 0;
  friend bool operator==(const ClassSplit&, const ClassSplit&) = default;
};

// on_demand = ceil(target * priority), the rest spot.
ClassSplit split_by_priority(std::uint32_t target, double priority);

enum class Verdict { Running, Completed, FailedUnretryable };

struct JobVerdict {
  Verdict state = Verdict::Running;
  std::optional<FailureKind> failure;
  NodeId node;
};

struct Action {
  enum class Kind { Reclaim, Request, Denied, StartWorker, Drain, Release, Fail, Ignore };
  Kind kind = Kind::Ignore;
  NodeId node;
  ClassSplit counts;             // Request / Denied (shortfall)
  std::vector<ShardId> shards;   // Reclaim
  std::optional<FailureKind> failure;

  friend bool operator==(const Action&, const Action&) = default;
};

std::string_view to_string(Action::Kind kind);
nlohmann::json to_json(const Action& action);

// Runs the per-node worker runtimes on behalf of the controller.
class WorkerFleet {
 public:
  virtual ~WorkerFleet() = default;
  virtual void start(const NodeSpec& node) = 0;
  // Node is gone; stop everything immediately.
  virtual void terminate(const NodeId& node) = 0;
  // Stop acquiring, finish and commit in-flight shards, then exit.
  virtual void drain(const NodeId& node) = 0;
};

// The elastic controller: a single-threaded event handler. Each entry point
// decides on actions, applies them to the cluster / shard queue / fleet, and
// returns them in application order (also appended to the action log).
class Controller {
 public:
  Controller(ScalePolicy policy, SimCluster& cluster, ShardQueue& dds, WorkerFleet& fleet,
             const Clock& clock);

  void set_action_log(std::function<void(const nlohmann::json&)> sink);

  std::vector<Action> handle_event(const ClusterEvent& event);
  std::vector<Action> reconcile();
  // A drained worker finished its in-flight work.
  std::vector<Action> on_worker_exited(const NodeId& node);

  void set_target(std::uint32_t target);
  void mark_completed();

  const JobVerdict& verdict() const { return verdict_; }
  const ScalePolicy& policy() const { return policy_; }
  std::uint32_t active_workers() const;
  std::uint32_t draining_workers() const;
  std::uint32_t failovers() const { return failovers_; }
  bool has_worker(const NodeId& node) const { return workers_.contains(node); }

 private:
  struct WorkerState {
    NodeSpec spec;
    bool draining = false;
  };

  void emit(std::vector<Action>& out, Action action);
  void start_granted(std::vector<Action>& out, const GrantResult& grant, ClassSplit requested);
  ClassSplit active_split() const;

  ScalePolicy policy_;
  SimCluster& cluster_;
  ShardQueue& dds_;
  WorkerFleet& fleet_;
  const Clock& clock_;
  std::map<NodeId, WorkerState> workers_;
  JobVerdict verdict_;
  std::uint32_t failovers_ = 0;
  std::function<void(const nlohmann::json&)> log_;
};

}  // namespace batchinfer
