#ifndef DFOS_SIMULATOR_HPP_
#define DFOS_SIMULATOR_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dfos/waterfall.hpp"

namespace dfos {

enum class Lane { Near, Far };
enum class VehicleClass { Large, Small };

const char* to_string(Lane lane);
const char* to_string(VehicleClass cls);
Lane lane_from_string(const std::string& s);
VehicleClass vehicle_class_from_string(const std::string& s);

// Per-lane vibration signature. Vehicles on the lane closer to the fiber
// produce stronger and higher-frequency vibrations.
struct LaneModel {
  Lane lane_id = Lane::Near;
  double amplitude_gain = 1.0;
  double carrier_frequency_hz = 3.2;
};

struct LaneModels {
  LaneModel near;
  LaneModel far;
  const LaneModel& for_lane(Lane lane) const { return lane == Lane::Near ? near : far; }
  void validate() const;
};

// Near 3.2 Hz / Far 2.2 Hz: the midpoint lands on the 2.7 Hz lane threshold.
LaneModels default_lane_models();

struct SpeedSegment {
  double since_s = 0.0;   // speed applies from this time onward
  double speed_kmh = 0.0;
};

struct LaneTransition {
  double time_s = 0.0;
  Lane lane = Lane::Near;
};

struct VehicleSpec {
  int id = 0;
  double entry_time_s = 0.0;
  double entry_kp = 0.0;
  int heading = 1;  // +1: travels toward increasing kp
  VehicleClass vehicle_class = VehicleClass::Small;
  // Piecewise-constant speed; first segment must start at or before entry.
  std::vector<SpeedSegment> speed_profile;
  // lane_timeline[0] is the lane at entry; later entries are transitions.
  std::vector<LaneTransition> lane_timeline;

  double speed_kmh_at(double t_s) const;
  Lane lane_at(double t_s) const;
  // Signed kp offset from entry_kp after travelling until t_s.
  double kp_at(double t_s) const;
};

struct LowSnrSection {
  double kp_start = 0.0;
  double kp_end = 0.0;
  double attenuation = 1.0;  // multiplies vehicle signal, in (0, 1]
};

struct SceneSpec {
  SensorGeometry geometry;
  double start_time_s = 0.0;
  double duration_s = 0.0;
  std::vector<VehicleSpec> vehicles;
  double noise_sigma = 0.0;
  std::vector<LowSnrSection> low_snr_sections;
  std::vector<double> checkpoints_kp;
  std::uint64_t rng_seed = 0;
  LaneModels lanes = default_lane_models();

  // Rendering parameters.
  double base_amplitude = 10.0;        // intensity units for a Small near-lane vehicle at gain 1
  double kernel_sigma_channels = 3.0;  // spatial spread of one vehicle
  double modulation_depth = 0.5;       // depth of the carrier-frequency AM line
  double v_max_kmh = 160.0;            // validation bound for speed profiles

  void validate() const;  // throws naming the offending field
};

struct TracePoint {
  double time_s = 0.0;
  double kp = 0.0;
  double channel = 0.0;  // continuous channel coordinate; valid when in_range
  Lane lane = Lane::Near;
  bool in_range = true;
};

struct TrueLaneChange {
  int vehicle_id = 0;
  double time_s = 0.0;
  double kp = 0.0;
  Lane from_lane = Lane::Near;
  Lane to_lane = Lane::Far;
};

struct CheckpointArrival {
  int vehicle_id = 0;
  double checkpoint_kp = 0.0;
  double arrival_time_s = 0.0;
  VehicleClass vehicle_class = VehicleClass::Small;
};

struct GroundTruth {
  std::vector<std::vector<TracePoint>> traces;  // one per vehicle, one point per sample
  std::vector<std::vector<LaneTransition>> lane_timelines;
  std::vector<TrueLaneChange> lane_changes;     // in-range transitions only
  std::vector<CheckpointArrival> checkpoints;   // analytic crossing times
  std::vector<bool> truncated;                  // vehicle left the sensed kp range
};

// Deterministic: identical spec (seed included) gives bit-identical output.
std::pair<Waterfall, GroundTruth> render_scene(const SceneSpec& spec);

// The additive noise realization used by render_scene for this seed and grid
// shape, before rectification. Exposed so superposition can be tested exactly.
std::vector<float> simulate_noise_field(std::uint64_t seed, std::size_t rows,
                                        std::size_t cols, double sigma);

// Plain-text scene description, key=value lines grouped in [sections].
// Errors carry the file name and line number.
SceneSpec load_scene_spec(const std::string& path);
SceneSpec parse_scene_spec(std::istream& is, const std::string& name);

// trace.csv, lane_changes.csv, checkpoints.csv under dir.
void write_ground_truth(const GroundTruth& gt, const std::string& dir);
std::vector<TrueLaneChange> read_lane_changes_csv(const std::string& path);
std::vector<CheckpointArrival> read_checkpoints_csv(const std::string& path);

}  // namespace dfos

#endif  // DFOS_SIMULATOR_HPP_
