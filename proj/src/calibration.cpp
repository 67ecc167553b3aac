#include "dfos/calibration.hpp"

#include <cmath>
#include <stdexcept>

namespace dfos {

namespace {

double centroid_for(Lane lane, int index, const CentroidSampleConfig& cfg) {
  SceneSpec spec;
  spec.geometry.spatial_resolution_m = 5.0;
  spec.geometry.temporal_resolution_s = 0.1;
  spec.geometry.origin_kp = 0.0;
  spec.geometry.channel_count = 200;
  spec.duration_s = cfg.window_s + 4.0;
  spec.noise_sigma = cfg.noise_sigma;
  spec.lanes = cfg.lanes;
  spec.rng_seed = cfg.seed + static_cast<std::uint64_t>(index) * 2 +
                  (lane == Lane::Far ? 1 : 0);

  VehicleSpec v;
  v.id = 0;
  v.entry_time_s = 0.0;
  v.entry_kp = 0.05;
  v.speed_profile = {{0.0, 80.0 + 5.0 * (index % 9)}};
  v.lane_timeline = {{0.0, lane}};
  spec.vehicles.push_back(v);

  auto [w, gt] = render_scene(spec);

  std::vector<TrackPoint> path;
  path.reserve(gt.traces[0].size());
  for (const auto& pt : gt.traces[0])
    if (pt.in_range) path.push_back({pt.time_s, pt.channel});
  if (path.size() < 2) throw std::runtime_error("calibration scene left the sensed range");

  const auto track = VehicleTrack::from_path(0, spec.geometry, std::move(path));
  const double t0 = 1.0;  // skip the entry edge
  const auto series = extract_vibration_series(w, track, t0, t0 + cfg.window_s);
  return spectral_centroid(series);
}

}  // namespace

std::pair<std::vector<double>, std::vector<double>> simulate_centroid_samples(
    const CentroidSampleConfig& cfg) {
  if (cfg.samples_per_lane < 1)
    throw std::invalid_argument("simulate_centroid_samples: samples_per_lane must be >= 1");
  std::vector<double> near, far;
  near.reserve(cfg.samples_per_lane);
  far.reserve(cfg.samples_per_lane);
  for (int i = 0; i < cfg.samples_per_lane; ++i) {
    near.push_back(centroid_for(Lane::Near, i, cfg));
    far.push_back(centroid_for(Lane::Far, i, cfg));
  }
  return {std::move(near), std::move(far)};
}

}  // namespace dfos
