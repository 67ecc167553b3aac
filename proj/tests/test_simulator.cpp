#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "dfos/lane_analysis.hpp"
#include "dfos/simulator.hpp"
#include "test_support.hpp"

using namespace dfos;
using dfos_test::single_vehicle_scene;
using dfos_test::TempDir;

namespace {

// Mean-removed intensity along the true trace, for spectral checks.
std::vector<double> series_along_truth(const Waterfall& w, const GroundTruth& gt,
                                       std::size_t vehicle, double t0, double t1) {
  std::vector<double> out;
  const double dt = w.geometry().temporal_resolution_s;
  for (const auto& pt : gt.traces[vehicle]) {
    if (pt.time_s < t0 || pt.time_s >= t1 || !pt.in_range) continue;
    const auto r = static_cast<std::size_t>(std::llround((pt.time_s - w.start_time_s()) / dt));
    const auto c = static_cast<std::size_t>(std::llround(pt.channel));
    out.push_back(w.at(r, c));
  }
  double mean = 0.0;
  for (double v : out) mean += v;
  if (!out.empty()) mean /= static_cast<double>(out.size());
  for (double& v : out) v -= mean;
  return out;
}

}  // namespace

TEST_CASE("default lane models straddle the 2.7 Hz threshold") {
  const LaneModels m = default_lane_models();
  CHECK(0.5 * (m.near.carrier_frequency_hz + m.far.carrier_frequency_hz) ==
        doctest::Approx(2.7));
  CHECK(m.near.carrier_frequency_hz > m.far.carrier_frequency_hz);
  CHECK(m.near.amplitude_gain > m.far.amplitude_gain);
  CHECK(m.far.amplitude_gain > 0.0);
  m.validate();
}

TEST_CASE("noiseless constant-speed vehicle draws a straight ridge") {
  const SceneSpec spec = single_vehicle_scene(100.0);
  const auto [w, gt] = render_scene(spec);

  // Peak channel per row must advance at 27.78 m/s.
  const double dt = w.geometry().temporal_resolution_s;
  const double expected_cps = (100.0 / 3.6) / w.geometry().spatial_resolution_m;
  std::vector<std::pair<double, double>> ridge;  // (time, argmax channel)
  for (std::size_t r = 0; r < w.rows(); ++r) {
    float best = 0.0f;
    std::size_t best_c = 0;
    for (std::size_t c = 0; c < w.cols(); ++c)
      if (w.at(r, c) > best) {
        best = w.at(r, c);
        best_c = c;
      }
    if (best > 0.0f) ridge.emplace_back(w.row_time_s(r), static_cast<double>(best_c));
  }
  REQUIRE(ridge.size() > 100);
  // Fit the slope over the in-range part and compare with the kinematics.
  double mx = 0.0, my = 0.0;
  for (auto& [t, c] : ridge) {
    mx += t;
    my += c;
  }
  mx /= ridge.size();
  my /= ridge.size();
  double sxx = 0.0, sxy = 0.0;
  for (auto& [t, c] : ridge) {
    sxx += (t - mx) * (t - mx);
    sxy += (t - mx) * (c - my);
  }
  const double slope_cps = sxy / sxx;
  CHECK(slope_cps == doctest::Approx(expected_cps).epsilon(0.01));
  CHECK(slope_cps * w.geometry().spatial_resolution_m ==
        doctest::Approx(27.78).epsilon(0.01));  // m/s
  (void)dt;

  // Ground truth matches the argmax ridge to within kernel rounding.
  for (const auto& pt : gt.traces[0]) {
    if (!pt.in_range) continue;
    const auto r = static_cast<std::size_t>(
        std::llround((pt.time_s - w.start_time_s()) / w.geometry().temporal_resolution_s));
    if (r >= w.rows()) continue;
    float best = 0.0f;
    std::size_t best_c = 0;
    for (std::size_t c = 0; c < w.cols(); ++c)
      if (w.at(r, c) > best) {
        best = w.at(r, c);
        best_c = c;
      }
    CHECK(std::fabs(static_cast<double>(best_c) - pt.channel) <= 1.0);
  }
}

TEST_CASE("far lane renders strictly weaker than near lane") {
  const SceneSpec near_spec = single_vehicle_scene(100.0, Lane::Near);
  SceneSpec far_spec = near_spec;
  far_spec.vehicles[0].lane_timeline = {{0.0, Lane::Far}};
  const auto [wn, gn] = render_scene(near_spec);
  const auto [wf, gf] = render_scene(far_spec);
  REQUIRE(wn.rows() == wf.rows());
  bool any_signal = false;
  for (std::size_t r = 0; r < wn.rows(); ++r) {
    float pn = 0.0f, pf = 0.0f;
    for (std::size_t c = 0; c < wn.cols(); ++c) {
      pn = std::max(pn, wn.at(r, c));
      pf = std::max(pf, wf.at(r, c));
    }
    if (pn > 0.0f || pf > 0.0f) {
      any_signal = true;
      CHECK(pf < pn);
    }
  }
  CHECK(any_signal);
}

TEST_CASE("lane change drops the spectral centroid") {
  SceneSpec spec = single_vehicle_scene(100.0, Lane::Near, 0.0, 60.0, 500);
  spec.vehicles[0].lane_timeline.push_back({30.0, Lane::Far});
  const auto [w, gt] = render_scene(spec);

  const auto before = series_along_truth(w, gt, 0, 5.0, 25.0);
  const auto after = series_along_truth(w, gt, 0, 35.0, 55.0);
  REQUIRE(before.size() > 64);
  REQUIRE(after.size() > 64);
  const double fs = 1.0 / w.geometry().temporal_resolution_s;
  const double c_before = spectral_centroid({before, fs});
  const double c_after = spectral_centroid({after, fs});
  CHECK(c_after < c_before);
  // The modulation lines sit at the configured carriers.
  CHECK(dfos_test::dft_peak_hz(before, fs) == doctest::Approx(3.2).epsilon(0.05));
  CHECK(dfos_test::dft_peak_hz(after, fs) == doctest::Approx(2.2).epsilon(0.05));
}

TEST_CASE("noiseless near-lane centroid sits within one DFT bin of the carrier") {
  const SceneSpec spec = single_vehicle_scene(100.0, Lane::Near, 0.0, 30.0, 400);
  const auto [w, gt] = render_scene(spec);
  const auto x = series_along_truth(w, gt, 0, 2.0, 22.0);
  REQUIRE(x.size() == 200);
  const double fs = 1.0 / w.geometry().temporal_resolution_s;
  const double bin = fs / static_cast<double>(x.size());
  CHECK(spectral_centroid({x, fs}) == doctest::Approx(3.2).epsilon(0.0).scale(0.0).epsilon(bin));
  CHECK(std::fabs(spectral_centroid({x, fs}) - 3.2) <= bin);
}

TEST_CASE("determinism: same spec renders bit-identical output") {
  const SceneSpec spec = single_vehicle_scene(90.0, Lane::Near, 1.5);
  const auto [w1, g1] = render_scene(spec);
  const auto [w2, g2] = render_scene(spec);
  CHECK(w1.samples() == w2.samples());
  REQUIRE(g1.checkpoints.size() == g2.checkpoints.size());
  for (std::size_t i = 0; i < g1.checkpoints.size(); ++i)
    CHECK(g1.checkpoints[i].arrival_time_s == g2.checkpoints[i].arrival_time_s);
}

TEST_CASE("superposition: two vehicles equal the sum of their renders plus noise") {
  SceneSpec two = single_vehicle_scene(100.0, Lane::Near, 0.0);
  VehicleSpec second = two.vehicles[0];
  second.id = 1;
  second.entry_time_s = 5.0;
  second.speed_profile = {{0.0, 80.0}};
  second.lane_timeline = {{0.0, Lane::Far}};
  two.vehicles.push_back(second);

  SceneSpec only_a = two;
  only_a.vehicles = {two.vehicles[0]};
  SceneSpec only_b = two;
  only_b.vehicles = {two.vehicles[1]};

  SUBCASE("noiseless: exact elementwise sum") {
    const auto [wab, g] = render_scene(two);
    const auto [wa, ga] = render_scene(only_a);
    const auto [wb, gb] = render_scene(only_b);
    for (std::size_t i = 0; i < wab.samples().size(); ++i)
      CHECK(wab.samples()[i] ==
            doctest::Approx(wa.samples()[i] + wb.samples()[i]).epsilon(1e-6));
  }
  SUBCASE("noisy: one shared noise realization, then rectification") {
    SceneSpec noisy = two;
    noisy.noise_sigma = 2.0;
    const auto [wab, g] = render_scene(noisy);
    const auto [wa, ga] = render_scene(only_a);
    const auto [wb, gb] = render_scene(only_b);
    const auto noise =
        simulate_noise_field(noisy.rng_seed, wab.rows(), wab.cols(), noisy.noise_sigma);
    for (std::size_t i = 0; i < wab.samples().size(); ++i) {
      const double want = std::fabs(static_cast<double>(wa.samples()[i]) +
                                    static_cast<double>(wb.samples()[i]) +
                                    static_cast<double>(noise[i]));
      CHECK(static_cast<double>(wab.samples()[i]) == doctest::Approx(want).epsilon(1e-5));
    }
  }
}

TEST_CASE("checkpoint arrivals match the analytic crossing times") {
  SceneSpec spec = single_vehicle_scene(90.0, Lane::Near, 0.0, 80.0, 500);
  spec.checkpoints_kp = {8.5, 9.0};
  spec.vehicles[0].speed_profile = {{0.0, 90.0}, {20.0, 45.0}};
  const auto [w, gt] = render_scene(spec);
  REQUIRE(gt.checkpoints.size() == 2);

  // By hand: entry at 8.35 kp, 90 km/h for 20 s, then 45 km/h.
  // 8.5 kp: 150 m at 25 m/s -> 6 s.
  // 9.0 kp: 20 s covers 500 m (to 8.85); remaining 150 m at 12.5 m/s -> 32 s.
  CHECK(gt.checkpoints[0].checkpoint_kp == doctest::Approx(8.5));
  CHECK(gt.checkpoints[0].arrival_time_s == doctest::Approx(6.0).epsilon(1e-9));
  CHECK(gt.checkpoints[1].arrival_time_s == doctest::Approx(32.0).epsilon(1e-9));
}

TEST_CASE("vehicle leaving the range is truncated and flagged") {
  SceneSpec spec = single_vehicle_scene(120.0, Lane::Near, 0.0, 120.0, 200);  // 1 km grid
  const auto [w, gt] = render_scene(spec);
  CHECK(gt.truncated[0]);
  bool saw_out = false;
  for (const auto& pt : gt.traces[0]) saw_out |= !pt.in_range;
  CHECK(saw_out);
}

TEST_CASE("low-SNR section attenuates the signal, not the noise") {
  SceneSpec spec = single_vehicle_scene(100.0, Lane::Near, 0.0, 40.0, 400);
  spec.low_snr_sections = {{8.6, 8.8, 0.25}};
  const auto [w, gt] = render_scene(spec);
  const auto [w0, gt0] = render_scene(single_vehicle_scene(100.0, Lane::Near, 0.0, 40.0, 400));
  for (const auto& pt : gt.traces[0]) {
    if (!pt.in_range) continue;
    const auto r = static_cast<std::size_t>(
        std::llround((pt.time_s - w.start_time_s()) / w.geometry().temporal_resolution_s));
    if (r >= w.rows()) continue;
    const auto c = static_cast<std::size_t>(std::llround(pt.channel));
    if (pt.kp > 8.62 && pt.kp < 8.78)
      CHECK(w.at(r, c) == doctest::Approx(0.25 * w0.at(r, c)).epsilon(1e-4));
    else if (pt.kp < 8.58 || pt.kp > 8.82)
      CHECK(w.at(r, c) == doctest::Approx(w0.at(r, c)).epsilon(1e-6));
  }
}

TEST_CASE("spec validation names the offending field") {
  SceneSpec spec = single_vehicle_scene();
  spec.vehicles[0].speed_profile = {{0.0, -5.0}};
  CHECK_THROWS_WITH_AS(render_scene(spec), doctest::Contains("speed"), std::invalid_argument);

  spec = single_vehicle_scene();
  spec.duration_s = 0.0;
  CHECK_THROWS_WITH_AS(render_scene(spec), doctest::Contains("duration"), std::invalid_argument);

  spec = single_vehicle_scene();
  spec.low_snr_sections = {{8.4, 8.6, 1.5}};
  CHECK_THROWS_WITH_AS(render_scene(spec), doctest::Contains("attenuation"),
                       std::invalid_argument);

  spec = single_vehicle_scene();
  spec.vehicles[0].lane_timeline.push_back({10.0, Lane::Near});  // repeat of the same lane
  CHECK_THROWS_AS(render_scene(spec), std::invalid_argument);
}

TEST_CASE("scene file parsing") {
  TempDir tmp("scene");

  SUBCASE("a full scene file round-trips through the renderer") {
    const char* text = R"([geometry]
spatial_resolution_m = 5
temporal_resolution_s = 0.1
origin_kp = 8.3
channel_count = 400
kp_direction = 1

[scene]
duration_s = 30
noise_sigma = 0.5
rng_seed = 42

[checkpoints]
kp = 8.5
kp = 9.0

[vehicle]
entry_time_s = 0
entry_kp = 8.35
class = Small
lane = Near
speed = 0 100

[vehicle]
entry_time_s = 5
entry_kp = 8.35
class = Large
lane = Far
speed = 0 90
lane_change = 20 Near
)";
    std::ofstream(tmp.path("scene.cfg")) << text;
    const SceneSpec spec = load_scene_spec(tmp.path("scene.cfg"));
    CHECK(spec.vehicles.size() == 2);
    CHECK(spec.duration_s == 30.0);
    CHECK(spec.rng_seed == 42);
    CHECK(spec.checkpoints_kp.size() == 2);
    CHECK(spec.vehicles[1].vehicle_class == VehicleClass::Large);
    CHECK(spec.vehicles[1].lane_timeline.size() == 2);
    CHECK(spec.vehicles[1].lane_timeline[0].lane == Lane::Far);
    const auto [w, gt] = render_scene(spec);
    CHECK(w.rows() == 300);
    CHECK(w.cols() == 400);
  }
  SUBCASE("unknown key errors carry the line number") {
    std::ofstream(tmp.path("bad.cfg")) << "[scene]\nduration_s = 10\nwibble = 3\n";
    CHECK_THROWS_WITH_AS(load_scene_spec(tmp.path("bad.cfg")), doctest::Contains("bad.cfg:3"),
                         std::runtime_error);
  }
  SUBCASE("negative speed diagnostics name the field") {
    std::ofstream(tmp.path("neg.cfg")) << R"([geometry]
channel_count = 100
[scene]
duration_s = 10
[vehicle]
entry_kp = 8.3
lane = Near
speed = 0 -10
)";
    CHECK_THROWS_WITH_AS(load_scene_spec(tmp.path("neg.cfg")), doctest::Contains("speed"),
                         std::runtime_error);
  }
}

TEST_CASE("ground truth csv round-trip") {
  TempDir tmp("gt");
  SceneSpec spec = single_vehicle_scene(100.0, Lane::Near, 0.0, 40.0, 400);
  spec.vehicles[0].lane_timeline.push_back({15.0, Lane::Far});
  spec.checkpoints_kp = {8.5};
  const auto [w, gt] = render_scene(spec);
  write_ground_truth(gt, tmp.str());

  const auto changes = read_lane_changes_csv(tmp.path("lane_changes.csv"));
  REQUIRE(changes.size() == gt.lane_changes.size());
  CHECK(changes[0].time_s == doctest::Approx(gt.lane_changes[0].time_s));
  CHECK(changes[0].from_lane == Lane::Near);
  CHECK(changes[0].to_lane == Lane::Far);

  const auto cps = read_checkpoints_csv(tmp.path("checkpoints.csv"));
  REQUIRE(cps.size() == gt.checkpoints.size());
  CHECK(cps[0].arrival_time_s == doctest::Approx(gt.checkpoints[0].arrival_time_s));
  CHECK(cps[0].vehicle_class == VehicleClass::Small);
}
