#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "batchinfer/pipeline.hpp"

namespace batchinfer {

struct StageCount {
  std::uint32_t count = 1;
  std::uint32_t max = 1;
};

struct PredictorCount {
  std::string node;
  std::uint32_t count = 1;
  std::uint32_t max = 1;
  std::uint32_t device_demand = 1;
};

// One tick's view of the pipeline. Occupancies are queue size / capacity.
struct Observation {
  // Queue feeding the first predictor (the loader's output).
  double predict_input_occupancy = 0.0;
  // Input queue occupancy per predictor node, in PipelineSpec order.
  std::vector<double> node_occupancy;
  // Busy fraction of the device units over the last tick.
  double utilization = 0.0;
  double write_occupancy = 0.0;
};

struct ScaleAction {
  enum class Stage { Loader, Predictor, Writer };
  Stage stage = Stage::Loader;
  std::string node;  // Predictor only
  int delta = 0;
  friend bool operator==(const ScaleAction&, const ScaleAction&) = default;
};

// Watermark heuristic for intra-node stage concurrency.
//
//   loaders    +1 when the predictor input stays below low_watermark,
//              -1 when it stays above high_watermark;
//   predictors +1 (most backlogged node) when some node input stays above
//              high_watermark while utilization < util_threshold,
//              -1 (least backlogged node) when all stay below low_watermark;
//   writers    +1 / -1 on the write queue above high / below low.
//
// "Stays" means for consecutive_ticks ticks in a row. Counts are clamped to
// [1, max] and predictor growth to free device units. After acting, a stage
// ignores cooldown_ticks ticks; its streaks restart from zero.
class Autoscaler {
 public:
  Autoscaler(AutoscaleConfig config, StageCount loader, std::vector<PredictorCount> predictors,
             StageCount writer, std::uint32_t device_units = 0);

  std::vector<ScaleAction> tick(const Observation& obs);

  std::uint32_t loaders() const { return loader_.count; }
  std::uint32_t writers() const { return writer_.count; }
  std::uint32_t predictors(std::size_t node) const { return predictors_[node].count; }
  std::uint32_t predictor_total() const;
  const std::vector<PredictorCount>& predictor_counts() const { return predictors_; }
  // Ticks where some node was full but utilization was already high.
  std::uint64_t saturated_ticks() const { return saturated_ticks_; }

 private:
  struct Control {
    std::uint32_t up_streak = 0;
    std::uint32_t down_streak = 0;
    std::uint32_t cooldown = 0;
  };

  // Updates streaks; returns +1, -1 or 0 for the rule decision.
  int decide(Control& c, bool up, bool down, bool can_up, bool can_down) const;
  std::uint32_t free_device_units() const;

  AutoscaleConfig config_;
  StageCount loader_;
  std::vector<PredictorCount> predictors_;
  StageCount writer_;
  std::uint32_t device_units_;
  Control loader_ctl_;
  Control predictor_ctl_;
  Control writer_ctl_;
  std::uint64_t saturated_ticks_ = 0;
};

}  // namespace batchinfer
