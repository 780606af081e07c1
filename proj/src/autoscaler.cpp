#include "batchinfer/autoscaler.hpp"

#include <algorithm>
#include <limits>

#include <spdlog/spdlog.h>

namespace batchinfer {

Autoscaler::Autoscaler(AutoscaleConfig config, StageCount loader, std::vector<PredictorCount> predictors,
                       StageCount writer, std::uint32_t device_units)
    : config_(config),
      loader_(loader),
      predictors_(std::move(predictors)),
      writer_(writer),
      device_units_(device_units) {
  config_.validate();
}

std::uint32_t Autoscaler::predictor_total() const {
  std::uint32_t n = 0;
  for (const auto& p : predictors_) n += p.count;
  return n;
}

std::uint32_t Autoscaler::free_device_units() const {
  if (device_units_ == 0) return std::numeric_limits<std::uint32_t>::max();
  std::uint32_t used = 0;
  for (const auto& p : predictors_) used += p.count * p.device_demand;
  return used >= device_units_ ? 0 : device_units_ - used;
}

int Autoscaler::decide(Control& c, bool up, bool down, bool can_up, bool can_down) const {
  c.up_streak = up ? c.up_streak + 1 : 0;
  c.down_streak = down ? c.down_streak + 1 : 0;
  if (c.cooldown > 0) {
    --c.cooldown;
    return 0;
  }
  int delta = 0;
  if (c.up_streak >= config_.consecutive_ticks && can_up) delta = 1;
  else if (c.down_streak >= config_.consecutive_ticks && can_down) delta = -1;
  if (delta != 0) {
    c.cooldown = config_.cooldown_ticks;
    c.up_streak = 0;
    c.down_streak = 0;
  }
  return delta;
}

std::vector<ScaleAction> Autoscaler::tick(const Observation& obs) {
  std::vector<ScaleAction> actions;
  if (!config_.enabled) return actions;
  const double low = config_.low_watermark;
  const double high = config_.high_watermark;

  const int loader_delta =
      decide(loader_ctl_, obs.predict_input_occupancy < low, obs.predict_input_occupancy > high,
             loader_.count < loader_.max, loader_.count > 1);
  if (loader_delta != 0) {
    loader_.count += loader_delta;
    actions.push_back({ScaleAction::Stage::Loader, "", loader_delta});
  }

  if (!predictors_.empty()) {
    const std::size_t n = std::min(predictors_.size(), obs.node_occupancy.size());
    double max_occ = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_occ = std::max(max_occ, obs.node_occupancy[i]);
    const bool full = max_occ > high;
    const bool underutilized = obs.utilization < config_.util_threshold;
    if (full && !underutilized) {
      ++saturated_ticks_;
      spdlog::debug("autoscaler: predictors saturated (occupancy {:.2f}, utilization {:.2f})", max_occ,
                    obs.utilization);
    }

    // Most backlogged node that can still grow.
    std::size_t grow = n;
    const std::uint32_t free_units = free_device_units();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = predictors_[i];
      if (p.count >= p.max || p.device_demand > free_units) continue;
      if (grow == n || obs.node_occupancy[i] > obs.node_occupancy[grow]) grow = i;
    }
    // Least backlogged node that can shrink.
    std::size_t shrink = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (predictors_[i].count <= 1) continue;
      if (shrink == n || obs.node_occupancy[i] <= obs.node_occupancy[shrink]) shrink = i;
    }
    const int delta = decide(predictor_ctl_, full && underutilized, max_occ < low, grow < n, shrink < n);
    if (delta > 0) {
      predictors_[grow].count += 1;
      actions.push_back({ScaleAction::Stage::Predictor, predictors_[grow].node, 1});
    } else if (delta < 0) {
      predictors_[shrink].count -= 1;
      actions.push_back({ScaleAction::Stage::Predictor, predictors_[shrink].node, -1});
    }
  }

  const int writer_delta = decide(writer_ctl_, obs.write_occupancy > high, obs.write_occupancy < low,
                                  writer_.count < writer_.max, writer_.count > 1);
  if (writer_delta != 0) {
    writer_.count += writer_delta;
    actions.push_back({ScaleAction::Stage::Writer, "", writer_delta});
  }
  return actions;
}

}  // namespace batchinfer
