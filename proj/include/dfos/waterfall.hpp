#ifndef DFOS_WATERFALL_HPP_
#define DFOS_WATERFALL_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace dfos {

// Fiber layout: channel index <-> kilometer-post mapping plus sampling rates.
struct SensorGeometry {
  double spatial_resolution_m = 5.0;   // meters of road per channel
  double temporal_resolution_s = 0.1;  // seconds per time sample
  double origin_kp = 0.0;              // kilometer-post of channel 0
  std::size_t channel_count = 0;
  int kp_direction = 1;                // +1 if kp grows with channel index

  void validate() const;

  double channel_to_kp(std::size_t channel) const;
  // Rounds to the nearest channel; throws if the result is out of range.
  std::size_t kp_to_channel(double kp) const;
  // Continuous channel coordinate, unchecked.
  double channel_coordinate(double kp) const;

  double kp_at_channel_unchecked(double channel) const;
  double kp_min() const;
  double kp_max() const;
  bool kp_in_range(double kp) const;

  bool operator==(const SensorGeometry&) const = default;
};

// Half-open window into a waterfall. Times are seconds relative to the
// waterfall start; channels are column indices. Time bounds snap to the
// nearest sample.
struct WindowSelector {
  double t0_s = 0.0;
  double t1_s = 0.0;
  std::size_t c0 = 0;
  std::size_t c1 = 0;
};

// 2-D grid of non-negative vibration intensities. Rows are time samples,
// columns are fiber channels. Treated as immutable once filled; safe to
// share read-only across threads.
class Waterfall {
 public:
  Waterfall() = default;
  Waterfall(SensorGeometry geometry, double start_time_s, std::size_t rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return geometry_.channel_count; }
  const SensorGeometry& geometry() const { return geometry_; }
  double start_time_s() const { return start_time_s_; }

  float at(std::size_t row, std::size_t col) const {
    return samples_[row * geometry_.channel_count + col];
  }
  float& at(std::size_t row, std::size_t col) {
    return samples_[row * geometry_.channel_count + col];
  }

  const std::vector<float>& samples() const { return samples_; }
  std::vector<float>& samples() { return samples_; }

  double row_time_s(std::size_t row) const {
    return start_time_s_ + static_cast<double>(row) * geometry_.temporal_resolution_s;
  }
  double end_time_s() const { return row_time_s(rows_); }
  double duration_s() const {
    return static_cast<double>(rows_) * geometry_.temporal_resolution_s;
  }

  // Throws if any sample is negative or non-finite, naming the cell.
  void validate() const;

 private:
  SensorGeometry geometry_;
  double start_time_s_ = 0.0;
  std::size_t rows_ = 0;
  std::vector<float> samples_;
};

// Sub-grid copy; origin_kp and start_time shift with the selector.
Waterfall slice(const Waterfall& w, const WindowSelector& sel);

// Binary "DFWF" format, or CSV with a "<path>.meta" sidecar of key=value
// lines. load sniffs the magic bytes; save picks CSV for paths ending in
// ".csv" and binary otherwise.
Waterfall load_waterfall(const std::string& path);
void save_waterfall(const Waterfall& w, const std::string& path);

}  // namespace dfos

#endif  // DFOS_WATERFALL_HPP_
