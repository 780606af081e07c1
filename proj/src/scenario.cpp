#include "batchinfer/scenario.hpp"

#include "batchinfer/json_schema.hpp"

namespace batchinfer {

std::string_view to_string(NodeClass c) { return c == NodeClass::OnDemand ? "on_demand" : "spot"; }

NodeId node_id_for(std::uint32_t ordinal) { return "n" + std::to_string(ordinal); }

nlohmann::json to_json(const ClusterEvent& event) {
  nlohmann::json j{{"at", event.at}};
  std::visit(
      [&j](const auto& e) {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, NodeStarted>) {
          j["kind"] = "node_started";
          j["node"] = e.node;
          j["class"] = to_string(e.node_class);
        } else if constexpr (std::is_same_v<T, NodeCrashed>) {
          j["kind"] = "node_crashed";
          j["node"] = e.node;
          j["failure_kind"] = to_string(e.failure);
        } else if constexpr (std::is_same_v<T, CapacityChanged>) {
          j["kind"] = "capacity_changed";
          j["on_demand"] = e.available.on_demand;
          j["spot"] = e.available.spot;
        } else {
          j["kind"] = "target_changed";
          j["target"] = e.target;
        }
      },
      event.kind);
  return j;
}

std::optional<TolerableErrorKind> FaultPlan::record_error(RecordId id) const {
  for (const auto& f : record_errors) {
    if (f.record == id) return f.error;
  }
  return std::nullopt;
}

bool FaultPlan::hangs_on(const WorkerId& worker, const std::string& stage, std::uint64_t batch,
                         std::uint32_t attempt) const {
  for (const auto& h : hangs) {
    if ((h.worker == "*" || h.worker == worker) && h.stage == stage && h.batch == batch &&
        (h.attempts == 0 || attempt < h.attempts)) {
      return true;
    }
  }
  return false;
}

namespace {

Capacity parse_capacity(const FieldReader& r) {
  return Capacity{static_cast<std::uint32_t>(r.uint("on_demand")),
                  static_cast<std::uint32_t>(r.uint("spot"))};
}

FailureKind parse_failure(const FieldReader& r, std::string_view key) {
  const std::string name = r.string(key);
  auto kind = parse_failure_kind(name);
  if (!kind) r.fail(key, "unknown failure kind '" + name + "'");
  return *kind;
}

ScriptedEvent parse_event(const FieldReader& r) {
  ScriptedEvent ev;
  ev.at_ms = r.uint("at_ms");
  const std::string kind = r.string("kind");
  if (kind == "node_crashed") {
    CrashTemplate crash;
    crash.failure = parse_failure(r, "failure_kind");
    if (r.has("node")) {
      const auto& node = r.raw("node");
      if (node.is_string()) crash.node = node.get<std::string>();
      else if (node.is_number_unsigned()) crash.node = node_id_for(node.get<std::uint32_t>());
      else r.fail("node", "expected a node id string or ordinal");
    }
    ev.kind = crash;
  } else if (kind == "capacity_changed") {
    ev.kind = CapacityChanged{parse_capacity(r)};
  } else if (kind == "target_changed") {
    ev.kind = TargetChanged{static_cast<std::uint32_t>(r.uint("target"))};
  } else {
    r.fail("kind", "unknown event kind '" + kind + "'");
  }
  return ev;
}

}  // namespace

Scenario parse_scenario(const nlohmann::json& doc) {
  const FieldReader root(doc, "");
  Scenario s;
  s.seed = root.uint_or("seed", 0);
  if (root.has("initial_capacity")) s.initial_capacity = parse_capacity(root.child("initial_capacity"));
  s.cores_per_node = static_cast<std::uint32_t>(root.uint_or("cores_per_node", 1));

  if (root.has("events")) {
    const auto& events = root.raw("events");
    if (!events.is_array()) root.fail("events", "expected an array");
    for (std::size_t i = 0; i < events.size(); ++i) {
      const std::string ptr = root.pointer_to("events") + "/" + std::to_string(i);
      ScriptedEvent ev = parse_event(FieldReader(events[i], ptr));
      if (!s.events.empty() && ev.at_ms < s.events.back().at_ms) {
        throw SchemaError(ptr + "/at_ms", "events must be sorted by at_ms");
      }
      s.events.push_back(std::move(ev));
    }
  }

  if (root.has("straggler_profile")) {
    const FieldReader profile = root.child("straggler_profile");
    for (const auto& [key, value] : profile.json().items()) {
      std::uint32_t ordinal = 0;
      try {
        std::size_t used = 0;
        ordinal = static_cast<std::uint32_t>(std::stoul(key, &used));
        if (used != key.size()) throw std::invalid_argument(key);
      } catch (const std::exception&) {
        profile.fail(key, "straggler_profile keys must be node ordinals");
      }
      const double speed = profile.number(key);
      if (!(speed > 0.0)) profile.fail(key, "speed_factor must be > 0");
      s.straggler_profile[ordinal] = speed;
    }
  }

  if (root.has("faults")) {
    const FieldReader faults = root.child("faults");
    if (faults.has("record_errors")) {
      const auto& arr = faults.raw("record_errors");
      if (!arr.is_array()) faults.fail("record_errors", "expected an array");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const FieldReader r(arr[i], faults.pointer_to("record_errors") + "/" + std::to_string(i));
        const std::string name = r.string("error");
        auto kind = parse_tolerable_error(name);
        if (!kind) r.fail("error", "unknown tolerable error '" + name + "'");
        s.faults.record_errors.push_back({r.uint("record"), *kind});
      }
    }
    if (faults.has("hangs")) {
      const auto& arr = faults.raw("hangs");
      if (!arr.is_array()) faults.fail("hangs", "expected an array");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const FieldReader r(arr[i], faults.pointer_to("hangs") + "/" + std::to_string(i));
        HangFault h;
        h.worker = r.string_or("worker", "*");
        h.stage = r.string("stage");
        h.batch = r.uint("batch");
        h.attempts = static_cast<std::uint32_t>(r.uint_or("attempts", 1));
        s.faults.hangs.push_back(std::move(h));
      }
    }
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  return parse_json_file(path, [](const nlohmann::json& doc) { return parse_scenario(doc); });
}

nlohmann::json to_json(const Scenario& s) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& ev : s.events) {
    nlohmann::json j{{"at_ms", ev.at_ms}};
    std::visit(
        [&j](const auto& e) {
          using T = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<T, CrashTemplate>) {
            j["kind"] = "node_crashed";
            j["failure_kind"] = to_string(e.failure);
            if (e.node) j["node"] = *e.node;
          } else if constexpr (std::is_same_v<T, CapacityChanged>) {
            j["kind"] = "capacity_changed";
            j["on_demand"] = e.available.on_demand;
            j["spot"] = e.available.spot;
          } else {
            j["kind"] = "target_changed";
            j["target"] = e.target;
          }
        },
        ev.kind);
    events.push_back(std::move(j));
  }
  nlohmann::json profile = nlohmann::json::object();
  for (const auto& [ordinal, speed] : s.straggler_profile) profile[std::to_string(ordinal)] = speed;
  nlohmann::json record_errors = nlohmann::json::array();
  for (const auto& f : s.faults.record_errors)
    record_errors.push_back({{"record", f.record}, {"error", to_string(f.error)}});
  nlohmann::json hangs = nlohmann::json::array();
  for (const auto& h : s.faults.hangs)
    hangs.push_back({{"worker", h.worker}, {"stage", h.stage}, {"batch", h.batch}, {"attempts", h.attempts}});
  return {{"seed", s.seed},
          {"initial_capacity", {{"on_demand", s.initial_capacity.on_demand}, {"spot", s.initial_capacity.spot}}},
          {"cores_per_node", s.cores_per_node},
          {"events", std::move(events)},
          {"straggler_profile", std::move(profile)},
          {"faults", {{"record_errors", std::move(record_errors)}, {"hangs", std::move(hangs)}}}};
}

}  // namespace batchinfer
