#ifndef DFOS_IO_HPP_
#define DFOS_IO_HPP_

#include <string>
#include <vector>

#include "dfos/abnormality.hpp"
#include "dfos/lane_analysis.hpp"
#include "dfos/tracker.hpp"

namespace dfos {

// Camera-surrogate track seeds: "track_id,time_s,kp" rows (the id column is
// optional; rows without it are numbered in order).
struct TrackSeed {
  int track_id = 0;
  double time_s = 0.0;
  double kp = 0.0;
};

std::vector<TrackSeed> read_starts_csv(const std::string& path);

// Per-track path CSV: time_s,kp,channel,speed_kmh,status — one row per
// window plus a closing row at the track end.
void write_track_csv(const VehicleTrack& track, const std::string& path);
VehicleTrack read_track_csv(const std::string& path, int track_id,
                            const SensorGeometry& geometry);

struct TrackSummaryRow {
  int track_id = 0;
  double start_time_s = 0.0;
  double start_kp = 0.0;
  double end_time_s = 0.0;
  double end_kp = 0.0;
  double mean_speed_kmh = 0.0;
  TrackStatus status = TrackStatus::Completed;
};

void write_track_summary(const std::vector<TrackSummaryRow>& rows, const std::string& path);
std::vector<TrackSummaryRow> read_track_summary(const std::string& path);
TrackSummaryRow summarize(const VehicleTrack& track);

void write_events_jsonl(const std::vector<LaneChangeEvent>& events, const std::string& path);
std::vector<LaneChangeEvent> read_events_jsonl(const std::string& path);
void write_events_csv(const std::vector<LaneChangeEvent>& events, const std::string& path);

void write_threshold_file(const CentroidThreshold& th, const std::string& path);
CentroidThreshold read_threshold_file(const std::string& path);

void write_alerts_jsonl(const std::vector<AbnormalityAlert>& alerts, const std::string& path);
std::string alerts_summary_table(const std::vector<AbnormalityAlert>& alerts);

}  // namespace dfos

#endif  // DFOS_IO_HPP_
