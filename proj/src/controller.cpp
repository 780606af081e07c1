#include "batchinfer/controller.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

namespace batchinfer {

void ScalePolicy::validate() const {
  if (!(priority >= 0.0 && priority <= 1.0)) throw ConfigurationError("priority must be in [0, 1]");
  if (min_workers > target_workers) throw ConfigurationError("min_workers must be <= target_workers");
  if (scale_check_interval_ms == 0) throw ConfigurationError("scale_check_interval must be > 0");
}

ClassSplit split_by_priority(std::uint32_t target, double priority) {
  // Round the product before ceiling so 10 * 0.6 = 6.000000000000001 stays 6.
  const double raw = static_cast<double>(target) * priority;
  const double snapped = std::round(raw * 1e9) / 1e9;
  auto on_demand = static_cast<std::uint32_t>(std::ceil(snapped));
  on_demand = std::min(on_demand, target);
  return {on_demand, target - on_demand};
}

std::string_view to_string(Action::Kind kind) {
  switch (kind) {
    case Action::Kind::Reclaim: return "reclaim";
    case Action::Kind::Request: return "request";
    case Action::Kind::Denied: return "denied";
    case Action::Kind::StartWorker: return "start_worker";
    case Action::Kind::Drain: return "drain";
    case Action::Kind::Release: return "release";
    case Action::Kind::Fail: return "fail";
    case Action::Kind::Ignore: return "ignore";
  }
  return "?";
}

nlohmann::json to_json(const Action& a) {
  nlohmann::json args = nlohmann::json::object();
  if (!a.node.empty()) args["node"] = a.node;
  switch (a.kind) {
    case Action::Kind::Request:
    case Action::Kind::Denied:
      args["on_demand"] = a.counts.on_demand;
      args["spot"] = a.counts.spot;
      break;
    case Action::Kind::Reclaim:
      args["shards"] = a.shards;
      break;
    default:
      break;
  }
  if (a.failure) args["failure_kind"] = to_string(*a.failure);
  return {{"action", to_string(a.kind)}, {"args", std::move(args)}};
}

Controller::Controller(ScalePolicy policy, SimCluster& cluster, ShardQueue& dds, WorkerFleet& fleet,
                       const Clock& clock)
    : policy_(policy), cluster_(cluster), dds_(dds), fleet_(fleet), clock_(clock) {
  policy_.validate();
}

void Controller::set_action_log(std::function<void(const nlohmann::json&)> sink) {
  log_ = std::move(sink);
}

void Controller::emit(std::vector<Action>& out, Action action) {
  if (log_) {
    nlohmann::json j = to_json(action);
    j["ts"] = clock_.now_ms();
    log_(j);
  }
  out.push_back(std::move(action));
}

ClassSplit Controller::active_split() const {
  ClassSplit split;
  for (const auto& [_, w] : workers_) {
    if (w.draining) continue;
    if (w.spec.node_class == NodeClass::OnDemand) ++split.on_demand;
    else ++split.spot;
  }
  return split;
}

std::uint32_t Controller::active_workers() const {
  const auto s = active_split();
  return s.on_demand + s.spot;
}

std::uint32_t Controller::draining_workers() const {
  return static_cast<std::uint32_t>(
      std::count_if(workers_.begin(), workers_.end(), [](const auto& kv) { return kv.second.draining; }));
}

void Controller::start_granted(std::vector<Action>& out, const GrantResult& grant,
                               ClassSplit requested) {
  emit(out, {.kind = Action::Kind::Request, .counts = requested});
  for (const auto& spec : grant.granted) {
    dds_.register_worker(spec.id);
    workers_[spec.id] = WorkerState{spec, false};
    fleet_.start(spec);
    emit(out, {.kind = Action::Kind::StartWorker, .node = spec.id});
  }
  if (grant.denied()) {
    emit(out, {.kind = Action::Kind::Denied,
               .counts = {grant.shortfall.on_demand, grant.shortfall.spot}});
  }
}

std::vector<Action> Controller::handle_event(const ClusterEvent& event) {
  std::vector<Action> out;
  if (verdict_.state != Verdict::Running) return out;

  if (const auto* crash = std::get_if<NodeCrashed>(&event.kind)) {
    auto it = workers_.find(crash->node);
    if (it == workers_.end()) {
      spdlog::info("controller: ignoring crash of unknown node {}", crash->node);
      return out;
    }
    const WorkerState state = it->second;
    workers_.erase(it);
    fleet_.terminate(crash->node);
    emit(out, {.kind = Action::Kind::Reclaim,
               .node = crash->node,
               .shards = dds_.reclaim_worker(crash->node)});
    if (!is_retryable(crash->failure)) {
      verdict_ = {Verdict::FailedUnretryable, crash->failure, crash->node};
      emit(out, {.kind = Action::Kind::Fail, .node = crash->node, .failure = crash->failure});
      return out;
    }
    ++failovers_;
    if (state.draining) return out;  // was retiring anyway
    ClassSplit want;
    if (state.spec.node_class == NodeClass::OnDemand) want.on_demand = 1;
    else want.spot = 1;
    start_granted(out, cluster_.request_nodes(want.on_demand, want.spot), want);
    return out;
  }
  if (const auto* target = std::get_if<TargetChanged>(&event.kind)) {
    set_target(target->target);
    return reconcile();
  }
  if (std::holds_alternative<CapacityChanged>(event.kind)) return reconcile();
  return out;  // NodeStarted: we started it ourselves
}

std::vector<Action> Controller::reconcile() {
  std::vector<Action> out;
  if (verdict_.state != Verdict::Running) return out;

  const ClassSplit current = active_split();
  const std::uint32_t active = current.on_demand + current.spot;
  const std::uint32_t target = policy_.target_workers;

  if (active > target) {
    // Spot first (eviction-prone), newest first within a class.
    std::vector<const WorkerState*> order;
    for (const auto& [_, w] : workers_) {
      if (!w.draining) order.push_back(&w);
    }
    std::sort(order.begin(), order.end(), [](const WorkerState* a, const WorkerState* b) {
      if (a->spec.node_class != b->spec.node_class) return a->spec.node_class == NodeClass::Spot;
      return a->spec.ordinal > b->spec.ordinal;
    });
    std::vector<NodeId> to_drain;
    for (std::uint32_t i = 0; i < active - target; ++i) to_drain.push_back(order[i]->spec.id);
    for (const auto& id : to_drain) {
      workers_[id].draining = true;
      fleet_.drain(id);
      emit(out, {.kind = Action::Kind::Drain, .node = id});
    }
    return out;
  }
  if (active == target) return out;

  const ClassSplit desired = split_by_priority(target, policy_.priority);
  const Capacity avail = cluster_.available();
  const std::uint32_t room = target - active;
  ClassSplit want;
  want.on_demand = std::min({desired.on_demand > current.on_demand ? desired.on_demand - current.on_demand : 0u,
                             avail.on_demand, room});
  want.spot = std::min({desired.spot > current.spot ? desired.spot - current.spot : 0u, avail.spot,
                        room - want.on_demand});
  if (want.on_demand + want.spot == 0) return out;
  start_granted(out, cluster_.request_nodes(want.on_demand, want.spot), want);
  return out;
}

std::vector<Action> Controller::on_worker_exited(const NodeId& node) {
  std::vector<Action> out;
  auto it = workers_.find(node);
  if (it == workers_.end() || !it->second.draining) return out;
  workers_.erase(it);
  emit(out, {.kind = Action::Kind::Reclaim, .node = node, .shards = dds_.reclaim_worker(node)});
  if (cluster_.is_running(node)) {
    cluster_.release_node(node);
    emit(out, {.kind = Action::Kind::Release, .node = node});
  }
  return out;
}

void Controller::set_target(std::uint32_t target) {
  policy_.target_workers = std::max(target, policy_.min_workers);
}

void Controller::mark_completed() {
  if (verdict_.state == Verdict::Running) verdict_.state = Verdict::Completed;
}

}  // namespace batchinfer
