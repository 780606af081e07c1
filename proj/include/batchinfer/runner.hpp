#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include "batchinfer/controller.hpp"
#include "batchinfer/job_spec.hpp"
#include "batchinfer/metrics.hpp"
#include "batchinfer/scenario.hpp"
#include "batchinfer/sink.hpp"
#include "batchinfer/worker.hpp"

namespace batchinfer {

enum ExitCode : int {
  kExitOk = 0,
  kExitIntegrity = 1,
  kExitSchema = 2,
  kExitUnretryable = 3,
};

struct RunOptions {
  JobSpec job;
  Scenario scenario;
  std::filesystem::path out_dir;
  // Overrides the scenario seed.
  std::optional<std::uint64_t> seed;
  // Overrides the job's time scale (default 1).
  std::optional<double> time_scale;
  // Give up (exit 1) if the job has not finished after this much wall time.
  TimestampMs deadline_ms = 30 * 60 * 1000;
  TimestampMs controller_poll_ms = 2;
};

struct RunResult {
  int exit_code = kExitOk;
  JobVerdict verdict;
  IntegrityReport integrity;
  RunSummary summary;
  bool timed_out = false;
  std::uint64_t seed = 0;
  double time_scale = 1.0;
  std::filesystem::path sink_dir;
  // Final stats of every worker ever started, keyed by node id.
  std::map<WorkerId, WorkerStats> workers;
  std::map<WorkerId, double> completed_by_worker;
  std::vector<ClusterEvent> cluster_events;
  std::vector<Action> actions;
};

// Runs one job end to end and writes the run directory:
//   job.json, scenario.json, run.json       inputs (the run is reproducible from these)
//   dds_transcript.jsonl                    every shard-queue call
//   cluster_events.jsonl                    delivered cluster events
//   controller_actions.jsonl                controller decisions
//   metrics.csv, summary.json, integrity.json
//   <writer.output_path>/shard-*.jsonl      committed output
// The run directory must not already hold output.
RunResult run_job(const RunOptions& options);

}  // namespace batchinfer
