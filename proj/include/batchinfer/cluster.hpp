#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <vector>

#include "batchinfer/clock.hpp"
#include "batchinfer/rng.hpp"
#include "batchinfer/scenario.hpp"

namespace batchinfer {

struct GrantResult {
  std::vector<NodeSpec> granted;
  // Requested minus granted, per class.
  Capacity shortfall;

  bool denied() const { return shortfall.total() > 0; }
};

// Deterministic stand-in for the container orchestrator's control plane.
//
// Scripted event times are scaled by `time_scale` into the clock's domain.
// Events become visible once the clock passes them; crash templates are
// resolved against the set of running nodes at that moment and dropped if
// no node qualifies. All mutations are serialized by one mutex.
class SimCluster {
 public:
  SimCluster(Scenario scenario, const Clock& clock, double time_scale = 1.0);

  SimCluster(const SimCluster&) = delete;
  SimCluster& operator=(const SimCluster&) = delete;

  GrantResult request_nodes(std::uint32_t on_demand, std::uint32_t spot);

  // Throws ProtocolError for unknown or already-stopped nodes.
  void release_node(const NodeId& node);

  // Events with since < at <= now, in delivery order.
  std::vector<ClusterEvent> poll_events(TimestampMs since);

  // Cursor-based polling: returns every event appended after `cursor` and
  // advances it, so nothing is skipped when events share a timestamp.
  std::vector<ClusterEvent> poll_new(std::size_t& cursor);

  // Records a crash reported by the node itself (e.g. unreadable input).
  void inject_crash(const NodeId& node, FailureKind failure);

  Capacity available() const;
  std::vector<NodeSpec> running_nodes() const;
  bool is_running(const NodeId& node) const;

  // Every delivered event so far (the transcript).
  std::vector<ClusterEvent> transcript() const;
  void set_event_sink(std::function<void(const ClusterEvent&)> sink);

 private:
  void advance_locked();
  void append_locked(ClusterEvent event);
  void crash_locked(TimestampMs at, const NodeId& node, FailureKind failure);

  const Clock& clock_;
  Scenario scenario_;
  double time_scale_;
  RngStream rng_;
  mutable std::mutex mu_;
  Capacity available_;
  std::map<NodeId, NodeSpec> running_;
  std::uint32_t next_ordinal_ = 0;
  std::size_t next_script_ = 0;
  std::vector<ClusterEvent> log_;
  std::function<void(const ClusterEvent&)> sink_;
};

}  // namespace batchinfer
