#include "batchinfer/job_spec.hpp"

#include <set>

#include "batchinfer/json_schema.hpp"

namespace batchinfer {

namespace {

void check_keys(const FieldReader& r, std::initializer_list<std::string_view> allowed) {
  const std::set<std::string_view> ok(allowed);
  for (const auto& [key, _] : r.json().items()) {
    if (!ok.contains(key)) r.fail(key, "unknown field '" + key + "'");
  }
}

std::uint32_t u32(const FieldReader& r, std::string_view key, std::uint32_t fallback, std::uint32_t min = 0) {
  const std::uint64_t v = r.uint_or(key, fallback);
  if (v > UINT32_MAX) r.fail(key, "value too large");
  if (v < min) r.fail(key, "must be >= " + std::to_string(min));
  return static_cast<std::uint32_t>(v);
}

double non_negative(const FieldReader& r, std::string_view key, double fallback) {
  const double v = r.number_or(key, fallback);
  if (v < 0.0) r.fail(key, "must be >= 0");
  return v;
}

double fraction(const FieldReader& r, std::string_view key, double fallback) {
  const double v = r.number_or(key, fallback);
  if (!(v >= 0.0 && v <= 1.0)) r.fail(key, "must be in [0, 1]");
  return v;
}

FanoutSpec parse_fanout(const FieldReader& parent) {
  FanoutSpec f;
  if (!parent.has("fanout")) return f;
  const auto& raw = parent.raw("fanout");
  if (raw.is_number_integer()) {
    f.value = u32(parent, "fanout", 1);
    return f;
  }
  const FieldReader r = parent.child("fanout");
  const std::string kind = r.string("kind");
  if (kind == "constant") {
    check_keys(r, {"kind", "value"});
    f.kind = FanoutSpec::Kind::Constant;
    f.value = u32(r, "value", 1);
  } else if (kind == "uniform") {
    check_keys(r, {"kind", "min", "max"});
    f.kind = FanoutSpec::Kind::Uniform;
    f.min = u32(r, "min", 0);
    f.max = static_cast<std::uint32_t>(r.uint("max"));
    if (f.min > f.max) r.fail("max", "must be >= min");
  } else if (kind == "poisson") {
    check_keys(r, {"kind", "mean"});
    f.kind = FanoutSpec::Kind::Poisson;
    f.mean_value = r.number("mean");
    if (f.mean_value < 0.0) r.fail("mean", "must be >= 0");
  } else {
    r.fail("kind", "expected \"constant\", \"uniform\" or \"poisson\"");
  }
  return f;
}

nlohmann::json fanout_json(const FanoutSpec& f) {
  switch (f.kind) {
    case FanoutSpec::Kind::Constant: return {{"kind", "constant"}, {"value", f.value}};
    case FanoutSpec::Kind::Uniform: return {{"kind", "uniform"}, {"min", f.min}, {"max", f.max}};
    case FanoutSpec::Kind::Poisson: return {{"kind", "poisson"}, {"mean", f.mean_value}};
  }
  return nullptr;
}

AutoscaleConfig parse_autoscale(const FieldReader& r, std::optional<double>& time_scale) {
  check_keys(r, {"enabled", "low_watermark", "high_watermark", "util_threshold", "consecutive_ticks",
                 "tick_interval_ms", "cooldown_ticks", "time_scale"});
  AutoscaleConfig a;
  a.enabled = r.boolean_or("enabled", a.enabled);
  a.low_watermark = fraction(r, "low_watermark", a.low_watermark);
  a.high_watermark = fraction(r, "high_watermark", a.high_watermark);
  if (a.low_watermark >= a.high_watermark) r.fail("high_watermark", "must be greater than low_watermark");
  a.util_threshold = fraction(r, "util_threshold", a.util_threshold);
  a.consecutive_ticks = u32(r, "consecutive_ticks", a.consecutive_ticks, 1);
  a.tick_interval_ms = r.uint_or("tick_interval_ms", a.tick_interval_ms);
  if (a.tick_interval_ms == 0) r.fail("tick_interval_ms", "must be > 0");
  a.cooldown_ticks = u32(r, "cooldown_ticks", a.cooldown_ticks);
  if (r.has("time_scale")) {
    const double ts = r.number("time_scale");
    if (!(ts > 0.0)) r.fail("time_scale", "must be > 0");
    time_scale = ts;
  }
  return a;
}

PredictorNode parse_node(const FieldReader& r, const DataConfig& data, const RunnerConfig& runner) {
  check_keys(r, {"id", "inputs", "cost_ms", "failure_rate", "fanout", "target_batch_size", "executors",
                 "max_executors", "device_demand"});
  PredictorNode n;
  n.id = r.string("id");
  if (n.id.empty()) r.fail("id", "must not be empty");
  if (n.id == kLoadStage || n.id == kWriteStage) r.fail("id", "'" + n.id + "' is reserved");
  if (r.has("inputs")) {
    const auto& inputs = r.raw("inputs");
    if (!inputs.is_array()) r.fail("inputs", "expected an array of node ids");
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!inputs[i].is_string()) {
        throw SchemaError(r.pointer_to("inputs") + "/" + std::to_string(i), "expected a node id string");
      }
      n.inputs.push_back(inputs[i].get<std::string>());
    }
  }
  n.model.cost_per_record_ms = non_negative(r, "cost_ms", 0.0);
  n.model.failure_rate = fraction(r, "failure_rate", 0.0);
  n.model.fanout = parse_fanout(r);
  n.target_batch_size = u32(r, "target_batch_size", data.batch_size, 1);
  n.executors = u32(r, "executors", runner.predictor_num, 1);
  n.max_executors = u32(r, "max_executors", std::max(n.executors, runner.max_predictor_num), 1);
  if (n.max_executors < n.executors) r.fail("max_executors", "must be >= executors");
  n.device_demand = u32(r, "device_demand", 1, 1);
  return n;
}

}  // namespace

PipelineSpec JobSpec::pipeline() const {
  PipelineSpec p;
  p.nodes = runner.pipeline;
  p.loader = {data.preprocess_cost_ms, data.num_workers, data.max_num_workers};
  p.writer = {writer.write_cost_ms, writer.writer_num, writer.max_writer_num};
  p.queue_capacity = runner.queue_capacity;
  p.batch_size = data.batch_size;
  p.autoscale = runner.autoscale;
  p.device_units = engine.devices;
  p.timeout_ms = runner.timeout_ms;
  p.max_retries = runner.max_retries;
  p.mode = runner.execution;
  p.max_inflight_shards = runner.max_inflight_shards;
  return p;
}

ScalePolicy JobSpec::scale_policy() const {
  ScalePolicy s;
  s.target_workers = engine.worker_num;
  s.priority = engine.priority;
  s.min_workers = engine.min_workers;
  s.scale_check_interval_ms = engine.scale_check_interval_ms;
  return s;
}

nlohmann::json JobSpec::to_json() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : runner.pipeline) {
    nodes.push_back({{"id", n.id},
                     {"inputs", n.inputs},
                     {"cost_ms", n.model.cost_per_record_ms},
                     {"failure_rate", n.model.failure_rate},
                     {"fanout", fanout_json(n.model.fanout)},
                     {"target_batch_size", n.target_batch_size},
                     {"executors", n.executors},
                     {"max_executors", n.max_executors},
                     {"device_demand", n.device_demand}});
  }
  nlohmann::json autoscale = {{"enabled", runner.autoscale.enabled},
                              {"low_watermark", runner.autoscale.low_watermark},
                              {"high_watermark", runner.autoscale.high_watermark},
                              {"util_threshold", runner.autoscale.util_threshold},
                              {"consecutive_ticks", runner.autoscale.consecutive_ticks},
                              {"tick_interval_ms", runner.autoscale.tick_interval_ms},
                              {"cooldown_ticks", runner.autoscale.cooldown_ticks}};
  if (runner.time_scale) autoscale["time_scale"] = *runner.time_scale;
  return {
      {"engine",
       {{"worker_num", engine.worker_num},
        {"priority", engine.priority},
        {"cpu", engine.cpu},
        {"memory", engine.memory},
        {"devices", engine.devices},
        {"min_workers", engine.min_workers},
        {"scale_check_interval_ms", engine.scale_check_interval_ms}}},
      {"data",
       {{"source_path", data.source_path.string()},
        {"num_workers", data.num_workers},
        {"max_num_workers", data.max_num_workers},
        {"shard_size", data.shard_size},
        {"batch_size", data.batch_size},
        {"preprocess_cost_ms", data.preprocess_cost_ms}}},
      {"writer",
       {{"output_path", writer.output_path.string()},
        {"writer_num", writer.writer_num},
        {"max_writer_num", writer.max_writer_num},
        {"write_cost_ms", writer.write_cost_ms}}},
      {"runner",
       {{"pipeline", std::move(nodes)},
        {"predictor_num", runner.predictor_num},
        {"max_predictor_num", runner.max_predictor_num},
        {"autoscale", std::move(autoscale)},
        {"timeout_ms", runner.timeout_ms},
        {"max_retries", runner.max_retries},
        {"queue_capacity", runner.queue_capacity},
        {"execution", runner.execution == ExecutionMode::Pipelined ? "pipelined" : "sequential"},
        {"max_inflight_shards", runner.max_inflight_shards}}},
      {"sharding_mode", std::string(to_string(sharding_mode))},
  };
}

JobSpec parse_job_spec(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  const FieldReader root(doc, "");
  check_keys(root, {"engine", "data", "writer", "runner", "sharding_mode"});
  JobSpec job;

  const FieldReader engine = root.child("engine");
  check_keys(engine, {"worker_num", "priority", "cpu", "memory", "devices", "min_workers",
                      "scale_check_interval_ms"});
  job.engine.worker_num = u32(engine, "worker_num", 1, 1);
  job.engine.priority = fraction(engine, "priority", 1.0);
  job.engine.cpu = engine.number_or("cpu", 1.0);
  if (!(job.engine.cpu > 0.0)) engine.fail("cpu", "must be > 0");
  if (engine.has("memory")) {
    const auto& m = engine.raw("memory");
    if (m.is_string()) job.engine.memory = m.get<std::string>();
    else if (m.is_number() && m.get<double>() > 0) job.engine.memory = m.dump();
    else engine.fail("memory", "expected a size such as \"2Gi\" or a positive number");
  }
  job.engine.devices = u32(engine, "devices", 0);
  job.engine.min_workers = u32(engine, "min_workers", 1, 1);
  if (job.engine.min_workers > job.engine.worker_num) engine.fail("min_workers", "must be <= worker_num");
  job.engine.scale_check_interval_ms = engine.uint_or("scale_check_interval_ms", 100);
  if (job.engine.scale_check_interval_ms == 0) engine.fail("scale_check_interval_ms", "must be > 0");

  const FieldReader data = root.child("data");
  check_keys(data, {"source_path", "num_workers", "max_num_workers", "shard_size", "batch_size",
                    "preprocess_cost_ms"});
  job.data.source_path = data.string("source_path");
  if (job.data.source_path.empty()) data.fail("source_path", "must not be empty");
  if (job.data.source_path.is_relative() && !base_dir.empty()) {
    job.data.source_path = (base_dir / job.data.source_path).lexically_normal();
  }
  job.data.num_workers = u32(data, "num_workers", 1, 1);
  job.data.max_num_workers = u32(data, "max_num_workers", job.data.num_workers, 1);
  if (job.data.max_num_workers < job.data.num_workers) data.fail("max_num_workers", "must be >= num_workers");
  job.data.shard_size = data.uint("shard_size");
  if (job.data.shard_size == 0) data.fail("shard_size", "must be >= 1");
  job.data.batch_size = u32(data, "batch_size", 16, 1);
  job.data.preprocess_cost_ms = non_negative(data, "preprocess_cost_ms", 0.0);

  if (root.has("writer")) {
    const FieldReader writer = root.child("writer");
    check_keys(writer, {"output_path", "writer_num", "max_writer_num", "write_cost_ms"});
    job.writer.output_path = writer.string_or("output_path", "output");
    if (job.writer.output_path.empty() || job.writer.output_path.is_absolute()) {
      writer.fail("output_path", "must be a relative path inside the run directory");
    }
    job.writer.writer_num = u32(writer, "writer_num", 1, 1);
    job.writer.max_writer_num = u32(writer, "max_writer_num", job.writer.writer_num, 1);
    if (job.writer.max_writer_num < job.writer.writer_num) writer.fail("max_writer_num", "must be >= writer_num");
    job.writer.write_cost_ms = non_negative(writer, "write_cost_ms", 0.0);
  }

  const FieldReader runner = root.child("runner");
  check_keys(runner, {"pipeline", "predictor_num", "max_predictor_num", "autoscale", "timeout_ms",
                      "max_retries", "queue_capacity", "execution", "max_inflight_shards"});
  job.runner.predictor_num = u32(runner, "predictor_num", 1, 1);
  job.runner.max_predictor_num = u32(runner, "max_predictor_num", job.runner.predictor_num, 1);
  if (job.runner.max_predictor_num < job.runner.predictor_num) {
    runner.fail("max_predictor_num", "must be >= predictor_num");
  }
  if (runner.has("autoscale")) job.runner.autoscale = parse_autoscale(runner.child("autoscale"), job.runner.time_scale);
  job.runner.timeout_ms = runner.uint_or("timeout_ms", 0);
  job.runner.max_retries = u32(runner, "max_retries", 2);
  job.runner.queue_capacity = u32(runner, "queue_capacity", 4, 1);
  const std::string execution = runner.string_or("execution", "pipelined");
  if (execution == "pipelined") job.runner.execution = ExecutionMode::Pipelined;
  else if (execution == "sequential") job.runner.execution = ExecutionMode::Sequential;
  else runner.fail("execution", "expected \"pipelined\" or \"sequential\"");
  job.runner.max_inflight_shards = u32(runner, "max_inflight_shards", 2, 1);

  const auto& nodes = runner.raw("pipeline");
  if (!nodes.is_array() || nodes.empty()) runner.fail("pipeline", "expected a non-empty array of predictors");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const FieldReader node(nodes[i], runner.pointer_to("pipeline") + "/" + std::to_string(i));
    job.runner.pipeline.push_back(parse_node(node, job.data, job.runner));
    if (!ids.insert(job.runner.pipeline.back().id).second) node.fail("id", "duplicate predictor id");
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t k = 0; k < job.runner.pipeline[i].inputs.size(); ++k) {
      if (!ids.contains(job.runner.pipeline[i].inputs[k])) {
        throw SchemaError(runner.pointer_to("pipeline") + "/" + std::to_string(i) + "/inputs/" + std::to_string(k),
                          "unknown predictor '" + job.runner.pipeline[i].inputs[k] + "'");
      }
    }
  }

  if (root.has("sharding_mode")) {
    const std::string mode = root.string("sharding_mode");
    auto parsed = parse_sharding_mode(mode);
    if (!parsed) root.fail("sharding_mode", "expected \"DDS\" or \"EvenPartition\"");
    job.sharding_mode = *parsed;
  }

  // Cross-field checks (cycles, sink count, device budget).
  try {
    job.pipeline().validate();
  } catch (const SchemaError&) {
    throw;
  } catch (const ConfigurationError& e) {
    throw SchemaError(runner.pointer_to("pipeline"), e.what());
  }
  return job;
}

JobSpec load_job_spec(const std::filesystem::path& path) {
  const auto base = std::filesystem::absolute(path).parent_path();
  return parse_json_file(path, [&](const nlohmann::json& doc) { return parse_job_spec(doc, base); });
}

}  // namespace batchinfer
