#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "batchinfer/types.hpp"

namespace batchinfer {

// Series names shared by producers and the report command.
namespace series {
inline constexpr const char* kCompletedRecords = "completed_records";  // per commit, origin rows
inline constexpr const char* kCompletedShards = "completed_shards";
inline constexpr const char* kRestarts = "restarts";
inline constexpr const char* kUtilization = "utilization";
inline constexpr const char* kQueuePrefix = "queue.";         // + stage name, occupancy in [0,1]
inline constexpr const char* kExecutorsPrefix = "executors.";  // + stage name
}  // namespace series

struct MetricSample {
  TimestampMs at = 0;
  WorkerId worker_id;
  std::string series;
  double value = 0.0;
};

struct WindowAggregate {
  TimestampMs start = 0;
  TimestampMs end = 0;
  double completed_records = 0.0;
  double qps = 0.0;
  double cumulative_shards = 0.0;
  // Mean of occupancy / utilization samples inside the window.
  std::map<std::string, double> mean;
  // Last executor count per "worker/stage" inside the window.
  std::map<std::string, double> executors;
};

struct RunSummary {
  double qps_mean = 0.0;
  double qps_peak = 0.0;
  TimestampMs jct_ms = 0;
  std::uint64_t restarts = 0;
  std::uint64_t failovers = 0;
  std::uint64_t error_rows = 0;
  std::uint64_t completed_records = 0;

  nlohmann::json to_json() const;
  static RunSummary from_json(const nlohmann::json& j);
};

// Lossless multi-producer sample store.
class MetricsCollector {
 public:
  void record(MetricSample sample);
  void record(TimestampMs at, const WorkerId& worker, std::string series, double value);

  std::vector<MetricSample> snapshot() const;
  double total(const std::string& series) const;
  std::map<WorkerId, double> total_by_worker(const std::string& series) const;

 private:
  mutable std::mutex mu_;
  std::vector<MetricSample> samples_;
};

// Fixed windows [k*window, (k+1)*window) from 0 up to the last sample
// (or `until`, when larger). QPS counts origin records, per second.
std::vector<WindowAggregate> aggregate(const std::vector<MetricSample>& samples, TimestampMs window_ms,
                                       TimestampMs until = 0);

// JCT is the timestamp of the last commit (the clock starts with the job).
RunSummary summarize(const std::vector<MetricSample>& samples, TimestampMs window_ms);

// CSV columns: at_ms,worker_id,series,value
void write_csv(const std::vector<MetricSample>& samples, const std::filesystem::path& path);
std::vector<MetricSample> read_csv(const std::filesystem::path& path);

}  // namespace batchinfer
