#ifndef DFOS_TRACKER_HPP_
#define DFOS_TRACKER_HPP_

#include <cstdint>
#include <optional>
#include <vector>

#include "dfos/waterfall.hpp"

namespace dfos {

// One per-time-instant vibration peak: the estimated vehicle position.
struct HitPoint {
  std::size_t time_index = 0;
  std::size_t channel = 0;
  float intensity = 0.0f;
};

struct TrackerConfig {
  double window_length_s = 10.0;
  double update_interval_s = 1.0;
  double v_min_kmh = 0.0;
  double v_max_kmh = 160.0;
  double gate_tolerance = 0.5;   // fractional speed slack of the dynamic gate
  double max_coast_s = 5.0;      // dead-reckoning budget through data gaps
  int k_vehicles = 1;            // clusters fitted per window
  double noise_floor_mads = 3.0; // per-row peak threshold, in MADs above median
  int min_fit_hits = 3;          // fresh gated hits required to count as a measurement

  void validate() const;
};

// Continuous position in a window's index space.
struct GridPoint {
  double time_index = 0.0;
  double channel = 0.0;
};

struct Point2 {
  double x = 0.0;  // time index
  double y = 0.0;  // channel index
};

struct Cluster {
  std::vector<std::size_t> members;  // indices into the input point list
  Point2 centroid;
};

struct KMeansResult {
  std::vector<Cluster> clusters;
  std::vector<int> assignment;  // point index -> cluster index
  double objective = 0.0;       // sum of squared distances to assigned centroids
  int iterations = 0;
  std::vector<double> objective_history;  // J after each assignment pass
};

struct SpeedEstimate {
  double speed_kmh = 0.0;
  double slope_channels_per_sample = 0.0;
  int direction = 0;  // sign of the slope; 0 for a stopped vehicle
};

// Per time sample, the argmax-intensity channel within [band_c0, band_c1),
// kept only when it clears median + noise_floor_mads * MAD of that row's
// band. Ties break toward the lower channel.
std::vector<HitPoint> extract_hit_points(const Waterfall& w, std::size_t band_c0,
                                         std::size_t band_c1,
                                         double noise_floor_mads = 3.0);

// Row-range variant used by the window pipeline; rows in [row0, row1).
// The noise floor may be estimated over a wider band [floor_c0, floor_c1)
// than the peak search, so a tight search corridor still sees background
// statistics; by default both bands coincide.
std::vector<HitPoint> extract_hit_points_rows(const Waterfall& w, std::size_t band_c0,
                                              std::size_t band_c1, std::size_t row0,
                                              std::size_t row1,
                                              double noise_floor_mads = 3.0,
                                              std::size_t floor_c0 = 0,
                                              std::size_t floor_c1 = 0);

// Dynamic space-time gate: a hit is kept when its displacement from the last
// accepted position, over the elapsed gap, overlaps the speed band
// [max(v_min, (1-tol)*prev), min(v_max, (1+tol)*prev)] and agrees with the
// travel direction. Unknown prev speed widens the gate to [v_min, v_max];
// direction 0 accepts either sign. Hits must be time-sorted.
std::vector<HitPoint> gate_hit_points(const std::vector<HitPoint>& hits,
                                      GridPoint predicted,
                                      std::optional<double> prev_speed_kmh,
                                      int travel_direction, const TrackerConfig& cfg,
                                      const SensorGeometry& geometry);

// Per time index, keeps the hit nearest the running reference (starting at
// `reference`, advancing along accepted hits). time_scale converts one time
// sample into equivalent channels so the distance is kinematically scaled.
std::vector<HitPoint> select_nearest(const std::vector<HitPoint>& hits,
                                     GridPoint reference, double time_scale = 1.0);

// Lloyd iteration with deterministic farthest-point seeding; extra
// deterministic restarts keep the best objective. Throws when points is
// empty or k exceeds the number of distinct points.
KMeansResult kmeans_fit(const std::vector<Point2>& points, int k, std::uint64_t seed);

// Least-squares slope of channel vs time index, converted to km/h.
// Requires at least two distinct time indices.
SpeedEstimate estimate_speed(const std::vector<Point2>& cluster_points,
                             const SensorGeometry& geometry);

enum class TrackStatus { Active, Coasting, Lost, Completed, Failed };
const char* to_string(TrackStatus status);
TrackStatus track_status_from_string(const std::string& s);

struct TrackPoint {
  double time_s = 0.0;
  double channel = 0.0;  // absolute (full-grid) channel coordinate
};

struct TrackSegment {
  double t0_s = 0.0;
  double slope_channels_per_sample = 0.0;
  double channel_at_t0 = 0.0;  // absolute channel coordinate
  double speed_kmh = 0.0;
};

// A single vehicle's evolving track: denoised hits, per-window fits, speed
// history, and the prediction that seeds the next window.
class VehicleTrack {
 public:
  VehicleTrack(int track_id, const SensorGeometry& geometry, double seed_time_s,
               double seed_kp);

  // Rebuild a track from externally stored path samples (time, channel).
  static VehicleTrack from_path(int track_id, const SensorGeometry& geometry,
                                std::vector<TrackPoint> path,
                                TrackStatus status = TrackStatus::Completed);

  // One pipeline pass over a window that covers the predicted position:
  // extract -> select nearest -> gate -> cluster -> fit -> re-predict.
  void step(const Waterfall& window, const TrackerConfig& cfg);

  int track_id() const { return track_id_; }
  TrackStatus status() const { return status_; }
  const SensorGeometry& geometry() const { return geometry_; }
  const std::vector<TrackPoint>& hits() const { return hits_; }
  const std::vector<TrackSegment>& segments() const { return segments_; }
  const std::vector<double>& speed_history() const { return speed_history_; }
  const std::vector<TrackPoint>& path() const { return path_; }
  TrackPoint predicted() const { return predicted_; }
  std::optional<double> last_speed_kmh() const { return prev_speed_kmh_; }
  int direction() const { return direction_; }
  double coast_s() const { return coast_s_; }

  bool has_path() const { return !path_.empty(); }
  double start_time_s() const;
  double end_time_s() const;
  double channel_at(double time_s) const;  // fitted path, clamped to the ends
  double kp_at(double time_s) const;
  std::optional<double> time_at_kp(double kp) const;

  void set_status(TrackStatus status) { status_ = status; }
  void append_path_point(TrackPoint p) { path_.push_back(p); }

 private:
  void coast(const TrackerConfig& cfg);
  void complete_if_out_of_range();

  int track_id_ = 0;
  SensorGeometry geometry_;
  TrackStatus status_ = TrackStatus::Active;
  std::vector<TrackPoint> hits_;
  std::vector<TrackSegment> segments_;
  std::vector<double> speed_history_;
  std::vector<TrackPoint> path_;
  TrackPoint predicted_{};
  std::optional<double> prev_speed_kmh_;
  double velocity_cps_ = 0.0;  // signed channels per second, 0 until first fit
  int direction_ = 0;
  double coast_s_ = 0.0;
};

// Seed a track at (start time, start kp) and run sliding windows until the
// track completes or is lost.
VehicleTrack track_vehicle(const Waterfall& w, double start_time_s, double start_kp,
                           const TrackerConfig& cfg, int track_id = 0);

}  // namespace dfos

#endif  // DFOS_TRACKER_HPP_
