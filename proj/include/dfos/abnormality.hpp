#ifndef DFOS_ABNORMALITY_HPP_
#define DFOS_ABNORMALITY_HPP_

#include <cstddef>
#include <vector>

#include "dfos/lane_analysis.hpp"

namespace dfos {

enum class ChangeDirection { NearToFar, FarToNear };
const char* to_string(ChangeDirection d);
ChangeDirection direction_of(const LaneChangeEvent& e);

struct HistogramConfig {
  double kp_start = 0.0;
  double kp_end = 0.0;
  double t_start = 0.0;
  double t_end = 0.0;
  double kp_bin_km = 0.1;
  double time_bin_s = 300.0;

  void validate() const;
};

// Lane-change counts on a (kp bin, time bin, direction) grid. Bins tile the
// configured range; a value exactly on an interior boundary joins the lower
// bin.
class EventHistogram {
 public:
  explicit EventHistogram(const HistogramConfig& cfg);

  std::size_t kp_bins() const { return kp_bins_; }
  std::size_t time_bins() const { return time_bins_; }
  const HistogramConfig& config() const { return cfg_; }

  int count(std::size_t time_bin, std::size_t kp_bin, ChangeDirection d) const;
  int total(std::size_t time_bin, std::size_t kp_bin) const;
  const std::vector<int>& tracks_in(std::size_t time_bin, std::size_t kp_bin) const;
  int skipped() const { return skipped_; }
  long total_count() const;

  double kp_bin_start(std::size_t kp_bin) const;
  double kp_bin_end(std::size_t kp_bin) const;
  double time_bin_start(std::size_t time_bin) const;
  double time_bin_end(std::size_t time_bin) const;

  void add(const LaneChangeEvent& e);  // out-of-range events count as skipped

 private:
  HistogramConfig cfg_;
  std::size_t kp_bins_ = 0;
  std::size_t time_bins_ = 0;
  std::vector<int> counts_;  // [time][kp][direction]
  std::vector<std::vector<int>> cell_tracks_;
  int skipped_ = 0;
};

EventHistogram aggregate(const std::vector<LaneChangeEvent>& events,
                         const HistogramConfig& cfg);

struct AbnormalityAlert {
  double kp_start = 0.0;
  double kp_end = 0.0;
  double t_start = 0.0;
  double t_end = 0.0;
  int event_count = 0;
  ChangeDirection dominant_direction = ChangeDirection::NearToFar;
  std::vector<int> track_ids;
};

struct HotspotConfig {
  int min_count = 5;
  bool adjacent_merge = true;
  // When set, only regions whose majority direction is Near->Far alert
  // (vehicles fleeing an obstructed near lane).
  bool require_near_to_far = false;
};

std::vector<AbnormalityAlert> detect_hotspots(const EventHistogram& h,
                                              const HotspotConfig& cfg = {});

}  // namespace dfos

#endif  // DFOS_ABNORMALITY_HPP_
