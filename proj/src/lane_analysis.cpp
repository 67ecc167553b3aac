#include "dfos/lane_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dfos {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

}  // namespace

VibrationSeries extract_vibration_series(const Waterfall& w, const VehicleTrack& track,
                                         double t0_s, double t1_s) {
  if (!(t0_s < t1_s)) throw std::invalid_argument("vibration series: t0 must be < t1");
  if (t0_s < track.start_time_s() - 1e-9 || t1_s > track.end_time_s() + 1e-9)
    throw std::invalid_argument("vibration series: interval [" + std::to_string(t0_s) + ", " +
                                std::to_string(t1_s) + ") outside the track lifetime");
  const double dt = w.geometry().temporal_resolution_s;
  const long long r0 = std::llround((t0_s - w.start_time_s()) / dt);
  const long long r1 = std::llround((t1_s - w.start_time_s()) / dt);
  if (r0 < 0 || r1 <= r0 || r1 > static_cast<long long>(w.rows()))
    throw std::invalid_argument("vibration series: interval outside the waterfall");

  VibrationSeries s;
  s.sample_rate_hz = 1.0 / dt;
  s.values.reserve(static_cast<std::size_t>(r1 - r0));
  const long long max_c = static_cast<long long>(w.cols()) - 1;
  for (long long r = r0; r < r1; ++r) {
    const double t = w.row_time_s(static_cast<std::size_t>(r));
    const long long c = std::clamp<long long>(std::llround(track.channel_at(t)), 0, max_c);
    s.values.push_back(w.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)));
  }
  double mean = 0.0;
  for (double v : s.values) mean += v;
  mean /= static_cast<double>(s.values.size());
  for (double& v : s.values) v -= mean;
  return s;
}

double spectral_centroid(const VibrationSeries& s) {
  const std::size_t n = s.values.size();
  if (n < 8) throw std::invalid_argument("spectral_centroid: need at least 8 samples");
  if (!(s.sample_rate_hz > 0.0))
    throw std::invalid_argument("spectral_centroid: sample rate must be positive");

  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double hann = 0.5 * (1.0 - std::cos(kTwoPi * static_cast<double>(i) /
                                               static_cast<double>(n - 1)));
    x[i] = s.values[i] * hann;
  }

  double num = 0.0, den = 0.0;
  for (std::size_t k = 1; k <= n / 2; ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = kTwoPi * static_cast<double>(k) * static_cast<double>(i) /
                       static_cast<double>(n);
      re += x[i] * std::cos(a);
      im -= x[i] * std::sin(a);
    }
    const double mag = std::hypot(re, im);
    const double f = static_cast<double>(k) * s.sample_rate_hz / static_cast<double>(n);
    num += f * mag;
    den += mag;
  }
  if (den <= 0.0) throw std::runtime_error("spectral_centroid: undefined for an all-zero series");
  return num / den;
}

CentroidThreshold calibrate_threshold(const std::vector<double>& near_hz,
                                      const std::vector<double>& far_hz) {
  if (near_hz.empty() || far_hz.empty())
    throw std::invalid_argument("calibrate_threshold: both sample sets must be non-empty");
  double mean_near = 0.0, mean_far = 0.0;
  for (double v : near_hz) mean_near += v;
  for (double v : far_hz) mean_far += v;
  mean_near /= static_cast<double>(near_hz.size());
  mean_far /= static_cast<double>(far_hz.size());
  if (!(mean_near > mean_far))
    throw std::invalid_argument("calibrate_threshold: near mean (" + std::to_string(mean_near) +
                                ") must exceed far mean (" + std::to_string(mean_far) + ")");

  std::vector<double> all;
  all.reserve(near_hz.size() + far_hz.size());
  all.insert(all.end(), near_hz.begin(), near_hz.end());
  all.insert(all.end(), far_hz.begin(), far_hz.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());

  std::vector<double> candidates;
  for (std::size_t i = 1; i < all.size(); ++i) candidates.push_back(0.5 * (all[i - 1] + all[i]));
  if (candidates.empty()) candidates.push_back(all.front());  // degenerate: one distinct value

  const double center = 0.5 * (mean_near + mean_far);
  const auto errors_at = [&](double th) {
    std::size_t e = 0;
    for (double v : near_hz)
      if (v < th) ++e;
    for (double v : far_hz)
      if (v >= th) ++e;
    return e;
  };

  double best_th = candidates.front();
  std::size_t best_e = errors_at(best_th);
  for (double th : candidates) {
    const std::size_t e = errors_at(th);
    if (e < best_e || (e == best_e && std::fabs(th - center) < std::fabs(best_th - center))) {
      best_e = e;
      best_th = th;
    }
  }

  CentroidThreshold out;
  out.value_hz = best_th;
  out.near_sample_count = static_cast<int>(near_hz.size());
  out.far_sample_count = static_cast<int>(far_hz.size());
  out.misclassification_rate =
      static_cast<double>(best_e) / static_cast<double>(near_hz.size() + far_hz.size());
  return out;
}

Lane classify_lane(double centroid_hz, const CentroidThreshold& th) {
  return centroid_hz < th.value_hz ? Lane::Far : Lane::Near;
}

std::vector<LaneChangeEvent> detect_lane_changes(const Waterfall& w,
                                                 const VehicleTrack& track,
                                                 const CentroidThreshold& th,
                                                 const LaneDetectConfig& cfg,
                                                 std::vector<std::string>* diagnostics) {
  const auto note = [&](const std::string& msg) {
    if (diagnostics) diagnostics->push_back(msg);
  };
  std::vector<LaneChangeEvent> events;
  if (!(cfg.window_s > 0.0) || !(cfg.hop_s > 0.0) || cfg.debounce < 1)
    throw std::invalid_argument("detect_lane_changes: invalid window/hop/debounce");

  const double start = std::max(track.start_time_s(), w.start_time_s());
  const double end = std::min(track.end_time_s(), w.end_time_s());
  if (end - start < cfg.window_s) {
    note("track " + std::to_string(track.track_id()) + ": duration " +
         std::to_string(end - start) + " s shorter than one analysis window");
    return events;
  }

  struct WindowClass {
    double t0;
    double centroid;
    Lane lane;
  };
  std::vector<WindowClass> windows;
  for (double t0 = start; t0 + cfg.window_s <= end + 1e-9; t0 += cfg.hop_s) {
    try {
      const auto series = extract_vibration_series(w, track, t0, t0 + cfg.window_s);
      const double c = spectral_centroid(series);
      windows.push_back({t0, c, classify_lane(c, th)});
    } catch (const std::exception& e) {
      note("track " + std::to_string(track.track_id()) + ": window at " + std::to_string(t0) +
           " s skipped: " + e.what());
    }
  }
  if (windows.size() < 2) return events;

  Lane current = windows.front().lane;
  std::size_t i = 1;
  while (i < windows.size()) {
    if (windows[i].lane == current) {
      ++i;
      continue;
    }
    // Candidate flip: must persist for `debounce` consecutive windows.
    const Lane flipped = windows[i].lane;
    std::size_t run = 0;
    while (i + run < windows.size() && windows[i + run].lane == flipped) ++run;
    if (static_cast<int>(run) >= cfg.debounce) {
      const double t_event = windows[i].t0 + 0.5 * cfg.window_s;
      events.push_back({t_event, track.kp_at(t_event), current, flipped,
                        windows[i - 1].centroid, windows[i].centroid, track.track_id()});
      current = flipped;
    }
    i += std::max<std::size_t>(run, 1);
  }
  return events;
}

}  // namespace dfos
