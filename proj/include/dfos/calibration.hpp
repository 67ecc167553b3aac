#ifndef DFOS_CALIBRATION_HPP_
#define DFOS_CALIBRATION_HPP_

#include <cstdint>
#include <utility>
#include <vector>

#include "dfos/lane_analysis.hpp"
#include "dfos/simulator.hpp"

namespace dfos {

struct CentroidSampleConfig {
  int samples_per_lane = 30;
  std::uint64_t seed = 1;
  double noise_sigma = 1.0;
  double window_s = 5.0;
  LaneModels lanes = default_lane_models();
};

// Renders short single-vehicle scenes on each lane (varying speed and noise
// seed) and reads the spectral centroid along the true path. Returns
// (near samples, far samples) for threshold calibration.
std::pair<std::vector<double>, std::vector<double>> simulate_centroid_samples(
    const CentroidSampleConfig& cfg = {});

}  // namespace dfos

#endif  // DFOS_CALIBRATION_HPP_
