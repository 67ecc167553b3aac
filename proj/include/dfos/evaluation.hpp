#ifndef DFOS_EVALUATION_HPP_
#define DFOS_EVALUATION_HPP_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dfos/abnormality.hpp"
#include "dfos/lane_analysis.hpp"
#include "dfos/simulator.hpp"
#include "dfos/tracker.hpp"

namespace dfos {

struct ClassCount {
  int detected = 0;
  int total = 0;
  std::optional<double> accuracy() const {
    if (total == 0) return std::nullopt;
    return static_cast<double>(detected) / total;
  }
};

struct TrackingMetrics {
  ClassCount overall;
  std::map<std::string, ClassCount> by_class;
};

struct DirectionRates {
  int true_total = 0;
  int detected_total = 0;
  int matched = 0;
  // matched / true_total; N/A when no true events exist.
  std::optional<double> true_positive_rate() const {
    if (true_total == 0) return std::nullopt;
    return static_cast<double>(matched) / true_total;
  }
  // unmatched detections / detections; N/A when nothing was detected.
  std::optional<double> false_positive_rate() const {
    if (detected_total == 0) return std::nullopt;
    return static_cast<double>(detected_total - matched) / detected_total;
  }
};

struct LaneChangeMetrics {
  DirectionRates near_to_far;
  DirectionRates far_to_near;
  DirectionRates pooled;
};

struct MetricsReport {
  TrackingMetrics tracking;
  LaneChangeMetrics lane_change;

  std::string to_table() const;
  std::string to_json() const;
};

// A vehicle counts as detected when its track crosses the vehicle's
// destination checkpoint (the truth record with the latest arrival) within
// tol_s of the true arrival time.
TrackingMetrics tracking_accuracy(const std::vector<VehicleTrack>& tracks,
                                  const std::vector<CheckpointArrival>& truth,
                                  double tol_s = 3.0);

// Greedy one-to-one matching in detection time order: same direction, within
// match_window_s in time and match_kp_km in position.
LaneChangeMetrics lane_change_metrics(const std::vector<LaneChangeEvent>& detected,
                                      const std::vector<TrueLaneChange>& truth,
                                      double match_window_s = 10.0,
                                      double match_kp_km = 0.2);

}  // namespace dfos

#endif  // DFOS_EVALUATION_HPP_
