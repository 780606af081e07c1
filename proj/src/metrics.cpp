#include "batchinfer/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace batchinfer {

void MetricsCollector::record(MetricSample sample) {
  std::lock_guard lock(mu_);
  samples_.push_back(std::move(sample));
}

void MetricsCollector::record(TimestampMs at, const WorkerId& worker, std::string name, double value) {
  record(MetricSample{at, worker, std::move(name), value});
}

std::vector<MetricSample> MetricsCollector::snapshot() const {
  std::lock_guard lock(mu_);
  return samples_;
}

double MetricsCollector::total(const std::string& name) const {
  std::lock_guard lock(mu_);
  double sum = 0.0;
  for (const auto& s : samples_) {
    if (s.series == name) sum += s.value;
  }
  return sum;
}

std::map<WorkerId, double> MetricsCollector::total_by_worker(const std::string& name) const {
  std::lock_guard lock(mu_);
  std::map<WorkerId, double> out;
  for (const auto& s : samples_) {
    if (s.series == name) out[s.worker_id] += s.value;
  }
  return out;
}

std::vector<WindowAggregate> aggregate(const std::vector<MetricSample>& samples, TimestampMs window_ms,
                                       TimestampMs until) {
  if (window_ms == 0) throw ConfigurationError("aggregation window must be > 0");
  TimestampMs last = until;
  for (const auto& s : samples) last = std::max(last, s.at);
  const std::size_t count = samples.empty() && until == 0 ? 0 : static_cast<std::size_t>(last / window_ms) + 1;
  std::vector<WindowAggregate> windows(count);
  std::vector<std::map<std::string, std::pair<double, std::size_t>>> sums(count);
  for (std::size_t i = 0; i < count; ++i) {
    windows[i].start = i * window_ms;
    windows[i].end = (i + 1) * window_ms;
  }

  std::vector<const MetricSample*> ordered;
  for (const auto& s : samples) ordered.push_back(&s);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const MetricSample* a, const MetricSample* b) { return a->at < b->at; });
  for (const MetricSample* s : ordered) {
    auto& w = windows[static_cast<std::size_t>(s->at / window_ms)];
    if (s->series == series::kCompletedRecords) {
      w.completed_records += s->value;
    } else if (s->series == series::kCompletedShards) {
      w.cumulative_shards += s->value;
    } else if (s->series.starts_with(series::kExecutorsPrefix)) {
      w.executors[s->worker_id + "/" + s->series.substr(std::string_view(series::kExecutorsPrefix).size())] =
          s->value;
    } else if (s->series.starts_with(series::kQueuePrefix) || s->series == series::kUtilization) {
      auto& [sum, n] = sums[static_cast<std::size_t>(s->at / window_ms)][s->series];
      sum += s->value;
      ++n;
    }
  }
  double cumulative = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    auto& w = windows[i];
    w.qps = w.completed_records * 1000.0 / static_cast<double>(window_ms);
    cumulative += w.cumulative_shards;
    w.cumulative_shards = cumulative;
    for (const auto& [name, acc] : sums[i]) w.mean[name] = acc.first / static_cast<double>(acc.second);
  }
  return windows;
}

RunSummary summarize(const std::vector<MetricSample>& samples, TimestampMs window_ms) {
  RunSummary summary;
  double records = 0.0;
  for (const auto& s : samples) {
    if (s.series == series::kCompletedRecords) {
      records += s.value;
      summary.jct_ms = std::max(summary.jct_ms, s.at);
    } else if (s.series == series::kRestarts) {
      summary.restarts += static_cast<std::uint64_t>(s.value);
    }
  }
  summary.completed_records = static_cast<std::uint64_t>(records);
  if (summary.jct_ms > 0) summary.qps_mean = records * 1000.0 / static_cast<double>(summary.jct_ms);
  for (const auto& w : aggregate(samples, window_ms)) summary.qps_peak = std::max(summary.qps_peak, w.qps);
  return summary;
}

nlohmann::json RunSummary::to_json() const {
  return {{"qps_mean", qps_mean},   {"qps_peak", qps_peak},   {"jct_ms", jct_ms},
          {"restarts", restarts},   {"failovers", failovers}, {"error_rows", error_rows},
          {"completed_records", completed_records}};
}

RunSummary RunSummary::from_json(const nlohmann::json& j) {
  RunSummary s;
  s.qps_mean = j.at("qps_mean").get<double>();
  s.qps_peak = j.at("qps_peak").get<double>();
  s.jct_ms = j.at("jct_ms").get<TimestampMs>();
  s.restarts = j.at("restarts").get<std::uint64_t>();
  s.failovers = j.at("failovers").get<std::uint64_t>();
  s.error_rows = j.at("error_rows").get<std::uint64_t>();
  s.completed_records = j.value("completed_records", std::uint64_t{0});
  return s;
}

void write_csv(const std::vector<MetricSample>& samples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "at_ms,worker_id,series,value\n";
  for (const auto& s : samples) out << fmt::format("{},{},{},{}\n", s.at, s.worker_id, s.series, s.value);
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<MetricSample> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<MetricSample> out;
  std::string line;
  std::getline(in, line);
  if (line != "at_ms,worker_id,series,value") throw IoError(path.string() + ": unexpected CSV header");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string at, worker, name, value;
    if (!std::getline(ss, at, ',') || !std::getline(ss, worker, ',') || !std::getline(ss, name, ',') ||
        !std::getline(ss, value)) {
      throw IoError(fmt::format("{}:{}: expected 4 columns", path.string(), lineno));
    }
    try {
      out.push_back({std::stoull(at), worker, name, std::stod(value)});
    } catch (const std::exception&) {
      throw IoError(fmt::format("{}:{}: bad number", path.string(), lineno));
    }
  }
  return out;
}

}  // namespace batchinfer
