#include "batchinfer/cluster.hpp"

#include <cmath>

#include <spdlog/spdlog.h>

namespace batchinfer {

SimCluster::SimCluster(Scenario scenario, const Clock& clock, double time_scale)
    : clock_(clock),
      scenario_(std::move(scenario)),
      time_scale_(time_scale),
      rng_(RngStream::for_component(scenario_.seed, "cluster")),
      available_(scenario_.initial_capacity) {
  if (!(time_scale_ > 0.0)) throw ConfigurationError("time_scale must be > 0");
}

void SimCluster::append_locked(ClusterEvent event) {
  if (sink_) sink_(event);
  log_.push_back(std::move(event));
}

void SimCluster::crash_locked(TimestampMs at, const NodeId& node, FailureKind failure) {
  auto it = running_.find(node);
  available_.of(it->second.node_class) += 1;
  running_.erase(it);
  append_locked({at, NodeCrashed{node, failure}});
}

void SimCluster::advance_locked() {
  const TimestampMs now = clock_.now_ms();
  while (next_script_ < scenario_.events.size()) {
    const ScriptedEvent& script = scenario_.events[next_script_];
    const auto at = static_cast<TimestampMs>(std::llround(script.at_ms * time_scale_));
    if (at > now) break;
    ++next_script_;
    if (const auto* crash = std::get_if<CrashTemplate>(&script.kind)) {
      const bool spot_only = crash->failure == FailureKind::Preemption;
      auto eligible = [&](const NodeSpec& n) {
        return !spot_only || n.node_class == NodeClass::Spot;
      };
      if (crash->node) {
        auto it = running_.find(*crash->node);
        if (it == running_.end() || !eligible(it->second)) {
          spdlog::debug("cluster: dropping crash of {} (not running or not eligible)", *crash->node);
          continue;
        }
        crash_locked(at, *crash->node, crash->failure);
      } else {
        std::vector<NodeId> candidates;
        for (const auto& [id, spec] : running_) {
          if (eligible(spec)) candidates.push_back(id);
        }
        if (candidates.empty()) {
          spdlog::debug("cluster: dropping {} crash, no eligible node", to_string(crash->failure));
          continue;
        }
        const auto pick = rng_.uniform_int(0, candidates.size() - 1);
        crash_locked(at, candidates[pick], crash->failure);
      }
    } else if (const auto* cap = std::get_if<CapacityChanged>(&script.kind)) {
      available_ = cap->available;
      append_locked({at, *cap});
    } else {
      append_locked({at, std::get<TargetChanged>(script.kind)});
    }
  }
}

GrantResult SimCluster::request_nodes(std::uint32_t on_demand, std::uint32_t spot) {
  std::lock_guard lock(mu_);
  advance_locked();
  GrantResult result;
  const TimestampMs now = clock_.now_ms();
  auto grant = [&](NodeClass cls, std::uint32_t wanted) {
    const std::uint32_t n = std::min(wanted, available_.of(cls));
    available_.of(cls) -= n;
    result.shortfall.of(cls) = wanted - n;
    for (std::uint32_t i = 0; i < n; ++i) {
      NodeSpec spec;
      spec.ordinal = next_ordinal_++;
      spec.id = node_id_for(spec.ordinal);
      spec.node_class = cls;
      spec.cores = scenario_.cores_per_node;
      if (auto it = scenario_.straggler_profile.find(spec.ordinal);
          it != scenario_.straggler_profile.end()) {
        spec.speed_factor = it->second;
      }
      running_.emplace(spec.id, spec);
      append_locked({now, NodeStarted{spec.id, cls}});
      result.granted.push_back(std::move(spec));
    }
  };
  grant(NodeClass::OnDemand, on_demand);
  grant(NodeClass::Spot, spot);
  return result;
}

void SimCluster::release_node(const NodeId& node) {
  std::lock_guard lock(mu_);
  advance_locked();
  auto it = running_.find(node);
  if (it == running_.end()) throw ProtocolError("release of unknown or stopped node " + node);
  available_.of(it->second.node_class) += 1;
  running_.erase(it);
}

std::vector<ClusterEvent> SimCluster::poll_events(TimestampMs since) {
  std::lock_guard lock(mu_);
  advance_locked();
  const TimestampMs now = clock_.now_ms();
  std::vector<ClusterEvent> out;
  for (const auto& ev : log_) {
    if (ev.at > since && ev.at <= now) out.push_back(ev);
  }
  return out;
}

std::vector<ClusterEvent> SimCluster::poll_new(std::size_t& cursor) {
  std::lock_guard lock(mu_);
  advance_locked();
  std::vector<ClusterEvent> out(log_.begin() + static_cast<std::ptrdiff_t>(std::min(cursor, log_.size())),
                                log_.end());
  cursor = log_.size();
  return out;
}

void SimCluster::inject_crash(const NodeId& node, FailureKind failure) {
  std::lock_guard lock(mu_);
  advance_locked();
  if (!running_.contains(node)) return;
  crash_locked(clock_.now_ms(), node, failure);
}

Capacity SimCluster::available() const {
  std::lock_guard lock(mu_);
  return available_;
}

std::vector<NodeSpec> SimCluster::running_nodes() const {
  std::lock_guard lock(mu_);
  std::vector<NodeSpec> out;
  for (const auto& [_, spec] : running_) out.push_back(spec);
  return out;
}

bool SimCluster::is_running(const NodeId& node) const {
  std::lock_guard lock(mu_);
  return running_.contains(node);
}

std::vector<ClusterEvent> SimCluster::transcript() const {
  std::lock_guard lock(mu_);
  return log_;
}

void SimCluster::set_event_sink(std::function<void(const ClusterEvent&)> sink) {
  std::lock_guard lock(mu_);
  sink_ = std::move(sink);
}

}  // namespace batchinfer
