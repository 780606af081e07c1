#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "batchinfer/metrics.hpp"

namespace batchinfer {

// What `report` prints for one run directory.
struct RunReport {
  std::filesystem::path run_dir;
  RunSummary summary;
  std::vector<WindowAggregate> windows;
};

RunReport load_run_report(const std::filesystem::path& run_dir, TimestampMs window_ms);

// JCT(baseline) / JCT(run); 0 when either JCT is unknown.
double speedup(const RunSummary& run, const RunSummary& baseline);

// Static SVG: QPS per window on top, mean queue occupancy per stage below.
// A baseline run, if given, is drawn as a second QPS line.
std::string render_svg(const RunReport& run, const RunReport* baseline = nullptr);

// Hex SHA-256 of the manifest and every data file it lists, in order.
std::string dataset_fingerprint(const std::filesystem::path& dataset_dir);

}  // namespace batchinfer
