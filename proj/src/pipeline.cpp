#include "batchinfer/pipeline.hpp"

#include <map>
#include <set>

namespace batchinfer {

std::uint32_t FanoutSpec::draw(RngStream& rng) const {
  switch (kind) {
    case Kind::Constant: return value;
    case Kind::Uniform: return static_cast<std::uint32_t>(rng.uniform_int(min, max));
    case Kind::Poisson: return rng.poisson(mean_value);
  }
  return value;
}

double FanoutSpec::mean() const {
  switch (kind) {
    case Kind::Constant: return value;
    case Kind::Uniform: return (static_cast<double>(min) + max) / 2.0;
    case Kind::Poisson: return mean_value;
  }
  return value;
}

void AutoscaleConfig::validate() const {
  if (!(low_watermark >= 0.0 && low_watermark < high_watermark && high_watermark <= 1.0)) {
    throw ConfigurationError("autoscale watermarks must satisfy 0 <= low < high <= 1");
  }
  if (!(util_threshold >= 0.0 && util_threshold <= 1.0)) {
    throw ConfigurationError("autoscale util_threshold must be in [0, 1]");
  }
  if (consecutive_ticks == 0) throw ConfigurationError("autoscale consecutive_ticks must be >= 1");
  if (tick_interval_ms == 0) throw ConfigurationError("autoscale tick_interval must be > 0");
}

void PipelineSpec::validate() const {
  if (nodes.empty()) throw ConfigurationError("pipeline needs at least one predictor");
  if (queue_capacity == 0) throw ConfigurationError("queue_capacity must be >= 1");
  if (batch_size == 0) throw ConfigurationError("batch_size must be >= 1");
  if (max_inflight_shards == 0) throw ConfigurationError("max_inflight_shards must be >= 1");
  auto check_stage = [](const StageSpec& s, const char* name) {
    if (s.initial_executors == 0 || s.initial_executors > s.max_executors) {
      throw ConfigurationError(std::string(name) + ": need 1 <= executors <= max_executors");
    }
    if (s.cost_per_record_ms < 0.0) throw ConfigurationError(std::string(name) + ": negative cost");
  };
  check_stage(loader, kLoadStage);
  check_stage(writer, kWriteStage);
  std::uint32_t demand = 0;
  for (const auto& n : nodes) {
    if (n.id.empty()) throw ConfigurationError("predictor id must not be empty");
    if (n.id == kLoadStage || n.id == kWriteStage) {
      throw ConfigurationError("predictor id '" + n.id + "' is reserved");
    }
    if (n.target_batch_size == 0) throw ConfigurationError(n.id + ": target_batch_size must be >= 1");
    if (n.executors == 0 || n.executors > n.max_executors) {
      throw ConfigurationError(n.id + ": need 1 <= executors <= max_executors");
    }
    if (!(n.model.failure_rate >= 0.0 && n.model.failure_rate <= 1.0)) {
      throw ConfigurationError(n.id + ": failure_rate must be in [0, 1]");
    }
    if (n.model.cost_per_record_ms < 0.0) throw ConfigurationError(n.id + ": negative cost");
    if (n.model.fanout.kind == FanoutSpec::Kind::Uniform && n.model.fanout.min > n.model.fanout.max) {
      throw ConfigurationError(n.id + ": fanout min > max");
    }
    if (n.model.fanout.kind == FanoutSpec::Kind::Poisson && n.model.fanout.mean_value < 0.0) {
      throw ConfigurationError(n.id + ": fanout mean must be >= 0");
    }
    demand += n.executors * n.device_demand;
  }
  if (device_units > 0 && demand > device_units) {
    throw ConfigurationError("initial predictor executors need " + std::to_string(demand) +
                             " device units, only " + std::to_string(device_units) + " available");
  }
  if (autoscale.enabled) autoscale.validate();
  Dag{nodes};
}

Dag::Dag(const std::vector<PredictorNode>& nodes) {
  const std::size_t n = nodes.size();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) {
    if (!index.emplace(nodes[i].id, i).second) {
      throw ConfigurationError("duplicate predictor id '" + nodes[i].id + "'");
    }
  }
  successors_.resize(n);
  predecessors_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::set<std::size_t> seen;
    for (const auto& in : nodes[i].inputs) {
      auto it = index.find(in);
      if (it == index.end()) throw ConfigurationError(nodes[i].id + ": unknown input '" + in + "'");
      if (!seen.insert(it->second).second) continue;
      predecessors_[i].push_back(it->second);
      successors_[it->second].push_back(i);
    }
    if (predecessors_[i].empty()) roots_.push_back(i);
  }

  std::vector<std::size_t> indegree(n);
  for (std::size_t i = 0; i < n; ++i) indegree[i] = predecessors_[i].size();
  std::set<std::size_t> ready(roots_.begin(), roots_.end());
  while (!ready.empty()) {
    const std::size_t next = *ready.begin();
    ready.erase(ready.begin());
    order_.push_back(next);
    for (std::size_t s : successors_[next]) {
      if (--indegree[s] == 0) ready.insert(s);
    }
  }
  if (order_.size() != n) throw ConfigurationError("predictor graph has a cycle");

  std::vector<std::size_t> sinks;
  for (std::size_t i = 0; i < n; ++i) {
    if (successors_[i].empty()) sinks.push_back(i);
  }
  if (sinks.size() != 1) {
    throw ConfigurationError("predictor graph must have exactly one sink, found " +
                             std::to_string(sinks.size()));
  }
  sink_ = sinks.front();
}

}  // namespace batchinfer
