#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "batchinfer/controller.hpp"
#include "batchinfer/pipeline.hpp"
#include "batchinfer/shard_queue.hpp"

namespace batchinfer {

struct EngineConfig {
  std::uint32_t worker_num = 1;
  // Fraction of workers on on-demand capacity.
  double priority = 1.0;
  double cpu = 1.0;
  std::string memory = "1Gi";
  // Device units per node shared by predictor executors; 0 = unlimited.
  std::uint32_t devices = 0;
  std::uint32_t min_workers = 1;
  TimestampMs scale_check_interval_ms = 100;
};

struct DataConfig {
  std::filesystem::path source_path;
  // Loader concurrency.
  std::uint32_t num_workers = 1;
  std::uint32_t max_num_workers = 1;
  std::uint64_t shard_size = 1000;
  std::uint32_t batch_size = 16;
  double preprocess_cost_ms = 0.0;
};

struct WriterConfig {
  // Relative to the run directory.
  std::filesystem::path output_path = "output";
  std::uint32_t writer_num = 1;
  std::uint32_t max_writer_num = 1;
  double write_cost_ms = 0.0;
};

struct RunnerConfig {
  std::vector<PredictorNode> pipeline;
  std::uint32_t predictor_num = 1;
  std::uint32_t max_predictor_num = 1;
  AutoscaleConfig autoscale;
  // Used when the command line does not set one.
  std::optional<double> time_scale;
  TimestampMs timeout_ms = 0;
  std::uint32_t max_retries = 2;
  std::uint32_t queue_capacity = 4;
  ExecutionMode execution = ExecutionMode::Pipelined;
  std::uint32_t max_inflight_shards = 2;
};

struct JobSpec {
  EngineConfig engine;
  DataConfig data;
  WriterConfig writer;
  RunnerConfig runner;
  ShardingMode sharding_mode = ShardingMode::Dynamic;

  PipelineSpec pipeline() const;
  ScalePolicy scale_policy() const;
  // Round-trips through parse_job_spec.
  nlohmann::json to_json() const;
};

// Throws SchemaError (with the JSON pointer of the offending value).
// Relative source paths are resolved against `base_dir`.
JobSpec parse_job_spec(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});

// Throws ConfigurationError with "file:line: pointer: message".
JobSpec load_job_spec(const std::filesystem::path& path);

}  // namespace batchinfer
