#ifndef DFOS_LANE_ANALYSIS_HPP_
#define DFOS_LANE_ANALYSIS_HPP_

#include <string>
#include <vector>

#include "dfos/simulator.hpp"
#include "dfos/tracker.hpp"
#include "dfos/waterfall.hpp"

namespace dfos {

// Mean-removed intensity samples read along a track's fitted path.
struct VibrationSeries {
  std::vector<double> values;
  double sample_rate_hz = 0.0;
};

struct CentroidThreshold {
  double value_hz = 0.0;
  int near_sample_count = 0;
  int far_sample_count = 0;
  double misclassification_rate = 0.0;
};

struct LaneChangeEvent {
  double time_s = 0.0;
  double kp = 0.0;
  Lane from_lane = Lane::Near;
  Lane to_lane = Lane::Far;
  double centroid_before_hz = 0.0;
  double centroid_after_hz = 0.0;
  int track_id = 0;
};

struct LaneDetectConfig {
  double window_s = 5.0;
  double hop_s = 1.0;
  int debounce = 3;  // consecutive windows before a flip is believed
};

// Intensity at the track's nearest path channel for each sample in [t0, t1),
// mean removed over the extraction window.
VibrationSeries extract_vibration_series(const Waterfall& w, const VehicleTrack& track,
                                         double t0_s, double t1_s);

// Amplitude-weighted mean frequency of the Hann-tapered magnitude spectrum,
// zero-frequency bin excluded. Throws on an all-zero series.
double spectral_centroid(const VibrationSeries& s);

// Threshold minimizing training misclassification over midpoints of the
// sorted sample union; near samples classify as >= threshold.
CentroidThreshold calibrate_threshold(const std::vector<double>& near_hz,
                                      const std::vector<double>& far_hz);

// Far strictly below threshold; a centroid exactly on it reads Near.
Lane classify_lane(double centroid_hz, const CentroidThreshold& th);

// Sliding-window centroid classification with debounce; emits one event per
// persistent flip. Tracks shorter than one window yield an empty list (a
// note lands in diagnostics when given).
std::vector<LaneChangeEvent> detect_lane_changes(const Waterfall& w,
                                                 const VehicleTrack& track,
                                                 const CentroidThreshold& th,
                                                 const LaneDetectConfig& cfg = {},
                                                 std::vector<std::string>* diagnostics = nullptr);

}  // namespace dfos

#endif  // DFOS_LANE_ANALYSIS_HPP_
