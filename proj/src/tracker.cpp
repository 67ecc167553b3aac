#include "dfos/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace dfos {

namespace {

// Peak search runs in a tight corridor around the predicted line so a
// stronger vehicle nearby cannot steal the per-row argmax; the noise floor
// is estimated over the wider window band, which still samples background.
constexpr double kCorridorChannels = 4.0;
constexpr double kFloorMarginChannels = 16.0;
constexpr double kSeedMarginChannels = 8.0;  // direction still unknown

// Fit sanity bounds: a window fit whose line misses the prediction or whose
// speed leaves the dynamic gate band is treated as interference and coasted
// over rather than believed.
constexpr double kFitPositionToleranceChannels = 6.0;
constexpr double kFitSpeedSlackKmh = 10.0;

double kmh_to_mps(double kmh) { return kmh / 3.6; }

double median_of(std::vector<float>& v) {
  const std::size_t n = v.size();
  const std::size_t mid = n / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (n % 2 == 0) {
    std::nth_element(v.begin(), v.begin() + mid - 1, v.begin() + mid);
    m = 0.5 * (m + v[mid - 1]);
  }
  return m;
}

double sq(double x) { return x * x; }

}  // namespace

void TrackerConfig::validate() const {
  if (!(window_length_s > update_interval_s && update_interval_s > 0.0))
    throw std::invalid_argument("tracker: require window_length_s > update_interval_s > 0");
  if (!(v_max_kmh > v_min_kmh && v_min_kmh >= 0.0))
    throw std::invalid_argument("tracker: require v_max_kmh > v_min_kmh >= 0");
  if (!(gate_tolerance >= 0.0)) throw std::invalid_argument("tracker: gate_tolerance must be >= 0");
  if (!(max_coast_s >= 0.0)) throw std::invalid_argument("tracker: max_coast_s must be >= 0");
  if (k_vehicles < 1) throw std::invalid_argument("tracker: k_vehicles must be >= 1");
  if (!(noise_floor_mads >= 0.0))
    throw std::invalid_argument("tracker: noise_floor_mads must be >= 0");
  if (min_fit_hits < 1) throw std::invalid_argument("tracker: min_fit_hits must be >= 1");
}

std::vector<HitPoint> extract_hit_points_rows(const Waterfall& w, std::size_t band_c0,
                                              std::size_t band_c1, std::size_t row0,
                                              std::size_t row1, double noise_floor_mads,
                                              std::size_t floor_c0, std::size_t floor_c1) {
  if (floor_c1 <= floor_c0) {
    floor_c0 = band_c0;
    floor_c1 = band_c1;
  }
  if (!(band_c0 < band_c1) || band_c1 > w.cols())
    throw std::invalid_argument("extract_hit_points: empty or out-of-range channel band");
  if (floor_c1 > w.cols() || floor_c0 > band_c0 || floor_c1 < band_c1)
    throw std::invalid_argument("extract_hit_points: floor band must contain the peak band");
  if (row1 > w.rows()) throw std::invalid_argument("extract_hit_points: row range out of range");

  std::vector<HitPoint> hits;
  std::vector<float> band(floor_c1 - floor_c0);
  for (std::size_t r = row0; r < row1; ++r) {
    float best = -1.0f;
    std::size_t best_c = band_c0;
    for (std::size_t c = floor_c0; c < floor_c1; ++c) {
      const float v = w.at(r, c);
      band[c - floor_c0] = v;
      if (c >= band_c0 && c < band_c1 && v > best) {  // strict: ties keep the lower channel
        best = v;
        best_c = c;
      }
    }
    const double med = median_of(band);
    for (auto& x : band) x = static_cast<float>(std::fabs(x - med));
    const double mad = median_of(band);
    const double floor = med + noise_floor_mads * mad;
    if (best > floor) hits.push_back({r, best_c, best});
  }
  return hits;
}

std::vector<HitPoint> extract_hit_points(const Waterfall& w, std::size_t band_c0,
                                         std::size_t band_c1, double noise_floor_mads) {
  return extract_hit_points_rows(w, band_c0, band_c1, 0, w.rows(), noise_floor_mads);
}

std::vector<HitPoint> gate_hit_points(const std::vector<HitPoint>& hits,
                                      GridPoint predicted,
                                      std::optional<double> prev_speed_kmh,
                                      int travel_direction, const TrackerConfig& cfg,
                                      const SensorGeometry& geometry) {
  const double dt = geometry.temporal_resolution_s;
  const double sr = geometry.spatial_resolution_m;

  double v_lo = cfg.v_min_kmh, v_hi = cfg.v_max_kmh;
  if (prev_speed_kmh) {
    v_lo = std::max(cfg.v_min_kmh, (1.0 - cfg.gate_tolerance) * *prev_speed_kmh);
    v_hi = std::min(cfg.v_max_kmh, (1.0 + cfg.gate_tolerance) * *prev_speed_kmh);
  }
  const double v_lo_mps = kmh_to_mps(v_lo);
  const double v_hi_mps = kmh_to_mps(v_hi);

  // A hit's channel bin spans [d*sr, (d+1)*sr) meters of displacement; accept
  // when that bin overlaps the admissible travel interval. The interval grows
  // by half a channel on each side: the reference position is itself only
  // known to channel precision.
  const auto bin_in_gate = [&](double d, double lo_m, double hi_m) {
    return (d + 1.0) * sr > lo_m && d * sr <= hi_m;
  };

  std::vector<HitPoint> kept;
  GridPoint last = predicted;
  for (const auto& h : hits) {
    const double gap_s = (static_cast<double>(h.time_index) - last.time_index) * dt;
    if (gap_s < 0.0) continue;
    const double lo_m = v_lo_mps * gap_s - 0.5 * sr;
    const double hi_m = v_hi_mps * gap_s + 0.5 * sr;
    const double d = (static_cast<double>(h.channel) - last.channel) *
                     (travel_direction == 0 ? 1.0 : travel_direction);
    bool ok = bin_in_gate(d, lo_m, hi_m);
    if (!ok && travel_direction == 0) ok = bin_in_gate(-d, lo_m, hi_m);
    if (!ok) continue;
    kept.push_back(h);
    last = {static_cast<double>(h.time_index), static_cast<double>(h.channel)};
  }
  return kept;
}

std::vector<HitPoint> select_nearest(const std::vector<HitPoint>& hits,
                                     GridPoint reference, double time_scale) {
  std::vector<HitPoint> kept;
  GridPoint ref = reference;
  std::size_t i = 0;
  while (i < hits.size()) {
    std::size_t j = i;
    while (j < hits.size() && hits[j].time_index == hits[i].time_index) ++j;
    const HitPoint* best = &hits[i];
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t m = i; m < j; ++m) {
      const double d = sq(time_scale * (static_cast<double>(hits[m].time_index) - ref.time_index)) +
                       sq(static_cast<double>(hits[m].channel) - ref.channel);
      if (d < best_d || (d == best_d && hits[m].channel < best->channel)) {
        best_d = d;
        best = &hits[m];
      }
    }
    kept.push_back(*best);
    ref = {static_cast<double>(best->time_index), static_cast<double>(best->channel)};
    i = j;
  }
  return kept;
}

// ---------------------------------------------------------------------------
// K-means
// ---------------------------------------------------------------------------

namespace {

double dist2(const Point2& a, const Point2& b) { return sq(a.x - b.x) + sq(a.y - b.y); }

struct LloydRun {
  std::vector<int> assignment;
  std::vector<Point2> centroids;
  std::vector<double> objective_history;
  double objective = std::numeric_limits<double>::infinity();
  int iterations = 0;
};

LloydRun lloyd(const std::vector<Point2>& pts, std::vector<Point2> centroids) {
  const int k = static_cast<int>(centroids.size());
  LloydRun run;
  run.assignment.assign(pts.size(), -1);

  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    double j_now = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      int best = 0;
      double best_d = dist2(pts[i], centroids[0]);
      for (int c = 1; c < k; ++c) {
        const double d = dist2(pts[i], centroids[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      j_now += best_d;
      if (run.assignment[i] != best) {
        run.assignment[i] = best;
        changed = true;
      }
    }
    run.objective_history.push_back(j_now);
    run.iterations = iter + 1;

    std::vector<Point2> sums(k, Point2{0.0, 0.0});
    std::vector<int> counts(k, 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      sums[run.assignment[i]].x += pts[i].x;
      sums[run.assignment[i]].y += pts[i].y;
      ++counts[run.assignment[i]];
    }
    for (int c = 0; c < k; ++c)
      if (counts[c] > 0)
        centroids[c] = {sums[c].x / counts[c], sums[c].y / counts[c]};
    if (!changed) break;
  }

  run.centroids = std::move(centroids);
  double j_final = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) j_final += dist2(pts[i], run.centroids[run.assignment[i]]);
  run.objective = j_final;
  return run;
}

std::vector<Point2> farthest_chain(const std::vector<Point2>& pts, std::size_t first, int k) {
  std::vector<std::size_t> chosen{first};
  std::vector<double> min_d(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) min_d[i] = dist2(pts[i], pts[first]);
  while (static_cast<int>(chosen.size()) < k) {
    std::size_t next = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (min_d[i] > best) {
        best = min_d[i];
        next = i;
      }
    chosen.push_back(next);
    for (std::size_t i = 0; i < pts.size(); ++i)
      min_d[i] = std::min(min_d[i], dist2(pts[i], pts[next]));
  }
  std::vector<Point2> centroids;
  centroids.reserve(chosen.size());
  for (auto i : chosen) centroids.push_back(pts[i]);
  return centroids;
}

}  // namespace

KMeansResult kmeans_fit(const std::vector<Point2>& points, int k, std::uint64_t seed) {
  if (points.empty()) throw std::invalid_argument("kmeans_fit: empty input");
  if (k < 1) throw std::invalid_argument("kmeans_fit: k must be >= 1");

  std::vector<Point2> distinct;
  for (const auto& p : points) {
    bool seen = false;
    for (const auto& q : distinct)
      if (q.x == p.x && q.y == p.y) {
        seen = true;
        break;
      }
    if (!seen) distinct.push_back(p);
  }
  if (static_cast<std::size_t>(k) > distinct.size())
    throw std::invalid_argument("kmeans_fit: k=" + std::to_string(k) + " exceeds " +
                                std::to_string(distinct.size()) + " distinct points");

  const std::size_t n = points.size();
  LloydRun best = lloyd(points, farthest_chain(points, seed % n, k));

  const auto consider = [&](std::vector<Point2> init) {
    LloydRun run = lloyd(points, std::move(init));
    if (run.objective < best.objective - 1e-12) best = std::move(run);
  };

  // Extra deterministic restarts; Lloyd alone can park in a local minimum.
  if (n <= 64) {
    for (std::size_t i = 0; i < n; ++i)
      if (i != seed % n) consider(farthest_chain(points, i, k));
  } else {
    for (std::size_t s = 1; s <= 8; ++s) consider(farthest_chain(points, (seed + s * (n / 8 + 1)) % n, k));
  }
  if (k >= 2 && distinct.size() <= 16) {
    // All k-subsets of distinct points as starting centroids.
    std::vector<int> idx(k);
    for (int i = 0; i < k; ++i) idx[i] = i;
    const int dn = static_cast<int>(distinct.size());
    while (true) {
      std::vector<Point2> init;
      init.reserve(k);
      for (int i : idx) init.push_back(distinct[i]);
      consider(std::move(init));
      int pos = k - 1;
      while (pos >= 0 && idx[pos] == dn - k + pos) --pos;
      if (pos < 0) break;
      ++idx[pos];
      for (int i = pos + 1; i < k; ++i) idx[i] = idx[i - 1] + 1;
    }
  }

  KMeansResult out;
  out.assignment = best.assignment;
  out.objective = best.objective;
  out.iterations = best.iterations;
  out.objective_history = best.objective_history;
  out.clusters.resize(k);
  for (int c = 0; c < k; ++c) out.clusters[c].centroid = best.centroids[c];
  for (std::size_t i = 0; i < n; ++i) out.clusters[best.assignment[i]].members.push_back(i);
  return out;
}

SpeedEstimate estimate_speed(const std::vector<Point2>& cluster_points,
                             const SensorGeometry& geometry) {
  if (cluster_points.size() < 2)
    throw std::invalid_argument("estimate_speed: need at least 2 points");
  double mx = 0.0, my = 0.0;
  for (const auto& p : cluster_points) {
    mx += p.x;
    my += p.y;
  }
  mx /= cluster_points.size();
  my /= cluster_points.size();
  double sxx = 0.0, sxy = 0.0;
  for (const auto& p : cluster_points) {
    sxx += (p.x - mx) * (p.x - mx);
    sxy += (p.x - mx) * (p.y - my);
  }
  if (sxx == 0.0)
    throw std::invalid_argument("estimate_speed: all points share one time index");

  SpeedEstimate est;
  est.slope_channels_per_sample = sxy / sxx;
  est.speed_kmh = std::fabs(est.slope_channels_per_sample) *
                  (geometry.spatial_resolution_m / geometry.temporal_resolution_s) * 3.6;
  est.direction = (est.slope_channels_per_sample > 0.0) -
                  (est.slope_channels_per_sample < 0.0);
  return est;
}

// ---------------------------------------------------------------------------
// VehicleTrack
// ---------------------------------------------------------------------------

const char* to_string(TrackStatus status) {
  switch (status) {
    case TrackStatus::Active: return "Active";
    case TrackStatus::Coasting: return "Coasting";
    case TrackStatus::Lost: return "Lost";
    case TrackStatus::Completed: return "Completed";
    case TrackStatus::Failed: return "Failed";
  }
  return "Unknown";
}

TrackStatus track_status_from_string(const std::string& s) {
  if (s == "Active") return TrackStatus::Active;
  if (s == "Coasting") return TrackStatus::Coasting;
  if (s == "Lost") return TrackStatus::Lost;
  if (s == "Completed") return TrackStatus::Completed;
  if (s == "Failed") return TrackStatus::Failed;
  throw std::invalid_argument("unknown track status '" + s + "'");
}

VehicleTrack::VehicleTrack(int track_id, const SensorGeometry& geometry,
                           double seed_time_s, double seed_kp)
    : track_id_(track_id), geometry_(geometry) {
  geometry_.validate();
  if (!geometry_.kp_in_range(seed_kp))
    throw std::invalid_argument("track seed kp " + std::to_string(seed_kp) +
                                " outside the sensed range");
  predicted_ = {seed_time_s, geometry_.channel_coordinate(seed_kp)};
}

VehicleTrack VehicleTrack::from_path(int track_id, const SensorGeometry& geometry,
                                     std::vector<TrackPoint> path, TrackStatus status) {
  if (path.empty()) throw std::invalid_argument("from_path: empty path");
  VehicleTrack t(track_id, geometry, path.front().time_s,
                 geometry.kp_at_channel_unchecked(path.front().channel));
  t.path_ = std::move(path);
  t.predicted_ = t.path_.back();
  t.status_ = status;
  return t;
}

double VehicleTrack::start_time_s() const {
  if (path_.empty()) return predicted_.time_s;
  return path_.front().time_s;
}

double VehicleTrack::end_time_s() const {
  if (path_.empty()) return predicted_.time_s;
  return path_.back().time_s;
}

double VehicleTrack::channel_at(double time_s) const {
  if (path_.empty()) return predicted_.channel;
  if (time_s <= path_.front().time_s) return path_.front().channel;
  if (time_s >= path_.back().time_s) return path_.back().channel;
  for (std::size_t i = 1; i < path_.size(); ++i) {
    if (time_s <= path_[i].time_s) {
      const auto& a = path_[i - 1];
      const auto& b = path_[i];
      const double span = b.time_s - a.time_s;
      if (span <= 0.0) return b.channel;
      const double f = (time_s - a.time_s) / span;
      return a.channel + f * (b.channel - a.channel);
    }
  }
  return path_.back().channel;
}

double VehicleTrack::kp_at(double time_s) const {
  return geometry_.kp_at_channel_unchecked(channel_at(time_s));
}

std::optional<double> VehicleTrack::time_at_kp(double kp) const {
  if (path_.size() < 2) return std::nullopt;
  const double target = geometry_.channel_coordinate(kp);
  for (std::size_t i = 1; i < path_.size(); ++i) {
    const double a = path_[i - 1].channel - target;
    const double b = path_[i].channel - target;
    if (a == 0.0) return path_[i - 1].time_s;
    if (a * b <= 0.0) {
      const double span = path_[i].channel - path_[i - 1].channel;
      if (span == 0.0) return path_[i].time_s;
      const double f = (target - path_[i - 1].channel) / span;
      return path_[i - 1].time_s + f * (path_[i].time_s - path_[i - 1].time_s);
    }
  }
  return std::nullopt;
}

void VehicleTrack::coast(const TrackerConfig& cfg) {
  coast_s_ += cfg.update_interval_s;
  predicted_.time_s += cfg.update_interval_s;
  predicted_.channel += velocity_cps_ * cfg.update_interval_s;
  if (!path_.empty()) path_.push_back(predicted_);
  if (coast_s_ > cfg.max_coast_s + 1e-9) {
    status_ = TrackStatus::Lost;
    return;
  }
  status_ = TrackStatus::Coasting;
  complete_if_out_of_range();
}

void VehicleTrack::complete_if_out_of_range() {
  if (status_ == TrackStatus::Lost) return;
  if (predicted_.channel < -0.5 ||
      predicted_.channel > static_cast<double>(geometry_.channel_count) - 0.5)
    status_ = TrackStatus::Completed;
}

void VehicleTrack::step(const Waterfall& window, const TrackerConfig& cfg) {
  cfg.validate();
  if (status_ != TrackStatus::Active && status_ != TrackStatus::Coasting)
    throw std::invalid_argument("track_step: track is " + std::string(to_string(status_)));
  const double dt = geometry_.temporal_resolution_s;
  if (std::fabs(window.geometry().temporal_resolution_s - dt) > 1e-12 ||
      std::fabs(window.geometry().spatial_resolution_m - geometry_.spatial_resolution_m) > 1e-9)
    throw std::invalid_argument("track_step: window resolution differs from the track's");

  const std::size_t rows = window.rows();
  const std::size_t cols = window.cols();
  const double c_off = std::llround(geometry_.channel_coordinate(window.geometry().origin_kp));
  const double pred_row = (predicted_.time_s - window.start_time_s()) / dt;
  const double pred_col = predicted_.channel - c_off;
  if (pred_row < -0.5 || pred_row >= static_cast<double>(rows) || pred_col < -0.5 ||
      pred_col > static_cast<double>(cols) - 0.5)
    throw std::invalid_argument("track_step: window does not cover the predicted position");

  const std::size_t u_rows =
      static_cast<std::size_t>(std::max<long long>(1, std::llround(cfg.update_interval_s / dt)));
  const double v_max_cps = kmh_to_mps(cfg.v_max_kmh) / geometry_.spatial_resolution_m;

  // Only rows after the last already-extracted sample are fresh.
  std::size_t row_start = 0;
  if (!hits_.empty()) {
    const long long fr = std::llround((hits_.back().time_s - window.start_time_s()) / dt);
    row_start = static_cast<std::size_t>(std::max<long long>(0, fr + 1));
  }
  if (row_start >= rows) {
    coast(cfg);
    return;
  }

  const auto clamp_band = [&](double lo, double hi) -> std::pair<std::size_t, std::size_t> {
    const long long a = std::max<long long>(0, static_cast<long long>(std::floor(lo)));
    const long long b =
        std::min<long long>(static_cast<long long>(cols), static_cast<long long>(std::ceil(hi)) + 1);
    if (a >= b) return {0, 0};
    return {static_cast<std::size_t>(a), static_cast<std::size_t>(b)};
  };

  std::vector<HitPoint> fresh;
  if (prev_speed_kmh_ && direction_ != 0) {
    // Kinematics known: search a tight corridor along the predicted line,
    // with the noise floor taken over the whole window band.
    const double v_cpr = velocity_cps_ * dt;
    const double c_a = pred_col + v_cpr * (static_cast<double>(row_start) - pred_row);
    const double c_b = pred_col + v_cpr * (static_cast<double>(rows - 1) - pred_row);
    const auto [b_lo, b_hi] = clamp_band(std::min(c_a, c_b) - kCorridorChannels,
                                         std::max(c_a, c_b) + kCorridorChannels);
    if (b_lo < b_hi)
      fresh = extract_hit_points_rows(window, b_lo, b_hi, row_start, rows,
                                      cfg.noise_floor_mads, 0, cols);
  } else {
    // Unknown kinematics: symmetric band growing with elapsed time, chunked
    // per update interval so a strong vehicle far ahead cannot steal rows
    // near the seed.
    for (std::size_t r0 = row_start; r0 < rows; r0 += u_rows) {
      const std::size_t r1 = std::min(rows, r0 + u_rows);
      const double elapsed = (static_cast<double>(r1) - pred_row) * dt;
      const double half = v_max_cps * std::max(0.0, elapsed) + kSeedMarginChannels;
      const auto [b_lo, b_hi] = clamp_band(pred_col - half, pred_col + half);
      if (b_lo >= b_hi) continue;
      auto chunk = extract_hit_points_rows(window, b_lo, b_hi, r0, r1, cfg.noise_floor_mads);
      fresh.insert(fresh.end(), chunk.begin(), chunk.end());
    }
  }

  // Reference for denoising: the last accepted hit, else the prediction.
  GridPoint ref{pred_row, pred_col};
  if (!hits_.empty())
    ref = {(hits_.back().time_s - window.start_time_s()) / dt, hits_.back().channel - c_off};
  const double time_scale = prev_speed_kmh_ ? std::fabs(velocity_cps_) * dt : 1.0;

  const auto selected = select_nearest(fresh, ref, time_scale);
  const auto gated =
      gate_hit_points(selected, ref, prev_speed_kmh_, direction_, cfg, window.geometry());

  if (static_cast<int>(gated.size()) < cfg.min_fit_hits) {
    coast(cfg);
    return;
  }

  // Window point set: already-denoised history inside the window plus the
  // freshly gated hits.
  std::vector<Point2> pts;
  for (const auto& h : hits_) {
    const double r = (h.time_s - window.start_time_s()) / dt;
    if (r >= -1e-9) pts.push_back({r, h.channel - c_off});
  }
  const std::size_t n_hist = pts.size();
  for (const auto& h : gated)
    pts.push_back({static_cast<double>(h.time_index), static_cast<double>(h.channel)});

  std::size_t distinct = 0;
  {
    std::vector<Point2> uniq;
    for (const auto& p : pts) {
      bool seen = false;
      for (const auto& q : uniq)
        if (q.x == p.x && q.y == p.y) {
          seen = true;
          break;
        }
      if (!seen) uniq.push_back(p);
    }
    distinct = uniq.size();
  }
  if (distinct < 2) {
    coast(cfg);
    return;
  }

  const int k = std::min<int>(cfg.k_vehicles, static_cast<int>(distinct));
  const auto km = kmeans_fit(pts, k, 0x5eedULL + segments_.size());

  // Rank clusters by distance to the prediction, extrapolated along the
  // known velocity to the cluster's mean time.
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t c = 0; c < km.clusters.size(); ++c) {
    const auto& cl = km.clusters[c];
    if (cl.members.size() < 2) continue;
    bool two_times = false;
    for (std::size_t i = 1; i < cl.members.size(); ++i)
      if (pts[cl.members[i]].x != pts[cl.members[0]].x) {
        two_times = true;
        break;
      }
    if (!two_times) continue;
    double d;
    if (prev_speed_kmh_) {
      const double expect = pred_col + velocity_cps_ * dt * (cl.centroid.x - pred_row);
      d = std::fabs(cl.centroid.y - expect);
    } else {
      d = std::sqrt(sq(time_scale * (cl.centroid.x - pred_row)) + sq(cl.centroid.y - pred_col));
    }
    order.emplace_back(d, c);
  }
  std::sort(order.begin(), order.end());

  // Take the nearest cluster whose fit is kinematically plausible: the line
  // must pass close to the prediction, and with a known previous speed the
  // fitted speed must stay inside the gate band. Anything else is another
  // vehicle's trace.
  int chosen = -1;
  std::vector<Point2> fit_points;
  SpeedEstimate est;
  for (const auto& [d, c] : order) {
    std::vector<Point2> candidate;
    candidate.reserve(km.clusters[c].members.size());
    for (auto i : km.clusters[c].members) candidate.push_back(pts[i]);
    const auto e = estimate_speed(candidate, geometry_);
    double mx = 0.0, my = 0.0;
    for (const auto& p : candidate) {
      mx += p.x;
      my += p.y;
    }
    mx /= candidate.size();
    my /= candidate.size();
    const double line_at_pred = my + e.slope_channels_per_sample * (pred_row - mx);
    if (std::fabs(line_at_pred - pred_col) > kFitPositionToleranceChannels) continue;
    if (prev_speed_kmh_) {
      const double lo =
          std::max(cfg.v_min_kmh, (1.0 - cfg.gate_tolerance) * *prev_speed_kmh_) -
          kFitSpeedSlackKmh;
      const double hi =
          std::min(cfg.v_max_kmh, (1.0 + cfg.gate_tolerance) * *prev_speed_kmh_) +
          kFitSpeedSlackKmh;
      if (e.speed_kmh < lo || e.speed_kmh > hi) continue;
      if (direction_ != 0 && e.direction != 0 && e.direction != direction_) continue;
    }
    chosen = static_cast<int>(c);
    fit_points = std::move(candidate);
    est = e;
    break;
  }
  if (chosen < 0) {
    coast(cfg);
    return;
  }

  const double speed = std::clamp(est.speed_kmh, cfg.v_min_kmh, cfg.v_max_kmh);
  if (direction_ == 0) direction_ = est.direction;
  velocity_cps_ = est.slope_channels_per_sample / dt;
  prev_speed_kmh_ = speed;

  double mx = 0.0, my = 0.0;
  for (const auto& p : fit_points) {
    mx += p.x;
    my += p.y;
  }
  mx /= fit_points.size();
  my /= fit_points.size();
  const double m = est.slope_channels_per_sample;
  const double fit_at = [&](double row) { return my + m * (row - mx); }(0.0);

  segments_.push_back({window.start_time_s(), m, fit_at + c_off, speed});
  speed_history_.push_back(speed);

  // Fresh hits belonging to the chosen cluster join the denoised history.
  for (auto i : km.clusters[chosen].members) {
    if (i < n_hist) continue;
    const auto& h = gated[i - n_hist];
    hits_.push_back({window.start_time_s() + static_cast<double>(h.time_index) * dt,
                     static_cast<double>(h.channel) + c_off});
  }
  std::sort(hits_.begin(), hits_.end(),
            [](const TrackPoint& a, const TrackPoint& b) { return a.time_s < b.time_s; });

  if (!path_.empty() && std::fabs(path_.back().time_s - window.start_time_s()) < 1e-9)
    path_.back() = {window.start_time_s(), fit_at + c_off};
  else
    path_.push_back({window.start_time_s(), fit_at + c_off});

  const double next_t = window.start_time_s() + cfg.update_interval_s;
  const double next_row = (next_t - window.start_time_s()) / dt;
  predicted_ = {next_t, my + m * (next_row - mx) + c_off};
  coast_s_ = 0.0;
  status_ = TrackStatus::Active;
  complete_if_out_of_range();
}

VehicleTrack track_vehicle(const Waterfall& w, double start_time_s, double start_kp,
                           const TrackerConfig& cfg, int track_id) {
  cfg.validate();
  const auto& g = w.geometry();
  if (!g.kp_in_range(start_kp))
    throw std::invalid_argument("track_vehicle: start kp " + std::to_string(start_kp) +
                                " outside the sensed range");
  if (start_time_s < w.start_time_s() - 1e-9 || start_time_s >= w.end_time_s())
    throw std::invalid_argument("track_vehicle: start time " + std::to_string(start_time_s) +
                                " outside the waterfall");

  VehicleTrack track(track_id, g, start_time_s, start_kp);
  const double dt = g.temporal_resolution_s;
  const double v_max_cps = kmh_to_mps(cfg.v_max_kmh) / g.spatial_resolution_m;

  while (track.status() == TrackStatus::Active || track.status() == TrackStatus::Coasting) {
    const double t0 = track.predicted().time_s;
    if (w.end_time_s() - t0 < 2.0 * dt) break;
    // All recorded data consumed with the vehicle still in range.
    if (!track.hits().empty() && track.hits().back().time_s > w.end_time_s() - 1.5 * dt) break;
    const double t1 = std::min(t0 + cfg.window_length_s, w.end_time_s());

    const double pred_ch = track.predicted().channel;
    double lo, hi;
    if (track.last_speed_kmh() && track.direction() != 0) {
      const double reach =
          track.direction() * kmh_to_mps(*track.last_speed_kmh()) / g.spatial_resolution_m * (t1 - t0);
      lo = std::min(pred_ch, pred_ch + reach) - kFloorMarginChannels;
      hi = std::max(pred_ch, pred_ch + reach) + kFloorMarginChannels;
    } else {
      const double half = v_max_cps * (t1 - t0) + kSeedMarginChannels;
      lo = pred_ch - half;
      hi = pred_ch + half;
    }
    const long long c0 = std::max<long long>(0, static_cast<long long>(std::floor(lo)));
    const long long c1 = std::min<long long>(static_cast<long long>(g.channel_count),
                                             static_cast<long long>(std::ceil(hi)) + 1);
    if (c0 >= c1 || c1 - c0 < 2) break;

    const WindowSelector sel{t0 - w.start_time_s(), t1 - w.start_time_s(),
                             static_cast<std::size_t>(c0), static_cast<std::size_t>(c1)};
    const Waterfall window = slice(w, sel);
    track.step(window, cfg);
  }

  if (track.status() == TrackStatus::Active || track.status() == TrackStatus::Coasting)
    track.set_status(TrackStatus::Completed);

  // Extend the path to the last observed hit using the final window's fit.
  if (!track.segments().empty() && !track.hits().empty()) {
    const auto& seg = track.segments().back();
    const double t_end = track.hits().back().time_s;
    if (track.path().empty() || t_end > track.path().back().time_s + 1e-9) {
      const double row = (t_end - seg.t0_s) / g.temporal_resolution_s;
      track.append_path_point({t_end, seg.channel_at_t0 + seg.slope_channels_per_sample * row});
    }
  }
  return track;
}

}  // namespace dfos
