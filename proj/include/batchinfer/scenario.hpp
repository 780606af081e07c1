#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "batchinfer/types.hpp"

namespace batchinfer {

enum class NodeClass { OnDemand, Spot };

std::string_view to_string(NodeClass c);

struct Capacity {
  std::uint32_t on_demand = 0;
  std::uint32_t spot = 0;

  std::uint32_t& of(NodeClass c) { return c == NodeClass::OnDemand ? on_demand : spot; }
  std::uint32_t of(NodeClass c) const { return c == NodeClass::OnDemand ? on_demand : spot; }
  std::uint32_t total() const { return on_demand + spot; }
  friend bool operator==(const Capacity&, const Capacity&) = default;
};

struct NodeSpec {
  NodeId id;
  // Grant order, starting at 0; also indexes the straggler profile.
  std::uint32_t ordinal = 0;
  double speed_factor = 1.0;
  std::uint32_t cores = 1;
  NodeClass node_class = NodeClass::OnDemand;
};

NodeId node_id_for(std::uint32_t ordinal);

// Delivered control-plane events.
struct NodeStarted {
  NodeId node;
  NodeClass node_class = NodeClass::OnDemand;
};
struct NodeCrashed {
  NodeId node;
  FailureKind failure = FailureKind::HardwareFailure;
};
struct CapacityChanged {
  Capacity available;
};
// Scripted change of the controller's target worker count.
struct TargetChanged {
  std::uint32_t target = 0;
};

using ClusterEventKind = std::variant<NodeStarted, NodeCrashed, CapacityChanged, TargetChanged>;

struct ClusterEvent {
  TimestampMs at = 0;
  ClusterEventKind kind;
};

nlohmann::json to_json(const ClusterEvent& event);

// Scripted crash; without a node the target is drawn from the running nodes
// eligible for `failure` when the event fires.
struct CrashTemplate {
  std::optional<NodeId> node;
  FailureKind failure = FailureKind::HardwareFailure;
};

struct ScriptedEvent {
  TimestampMs at_ms = 0;
  std::variant<CrashTemplate, CapacityChanged, TargetChanged> kind;
};

// Worker-side fault hooks.
struct RecordFault {
  RecordId record = 0;
  TolerableErrorKind error = TolerableErrorKind::ParseError;
};

struct HangFault {
  // Worker id, or "*" for every worker.
  std::string worker = "*";
  std::string stage;
  // 0-based ordinal of the batch executed by that stage on that worker.
  std::uint64_t batch = 0;
  // Number of attempts that hang; 0 means every attempt.
  std::uint32_t attempts = 1;
};

struct FaultPlan {
  std::vector<RecordFault> record_errors;
  std::vector<HangFault> hangs;

  std::optional<TolerableErrorKind> record_error(RecordId id) const;
  bool hangs_on(const WorkerId& worker, const std::string& stage, std::uint64_t batch,
                std::uint32_t attempt) const;
};

struct Scenario {
  std::uint64_t seed = 0;
  Capacity initial_capacity{16, 16};
  std::uint32_t cores_per_node = 1;
  std::vector<ScriptedEvent> events;
  std::map<std::uint32_t, double> straggler_profile;
  FaultPlan faults;
};

// Throws ConfigurationError on schema violations.
Scenario parse_scenario(const nlohmann::json& doc);
Scenario load_scenario(const std::filesystem::path& path);
nlohmann::json to_json(const Scenario& scenario);

}  // namespace batchinfer
