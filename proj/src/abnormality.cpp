#include "dfos/abnormality.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dfos {

const char* to_string(ChangeDirection d) {
  return d == ChangeDirection::NearToFar ? "NearToFar" : "FarToNear";
}

ChangeDirection direction_of(const LaneChangeEvent& e) {
  return e.from_lane == Lane::Near ? ChangeDirection::NearToFar : ChangeDirection::FarToNear;
}

void HistogramConfig::validate() const {
  if (!(kp_start < kp_end)) throw std::invalid_argument("histogram: kp_start must be < kp_end");
  if (!(t_start < t_end)) throw std::invalid_argument("histogram: t_start must be < t_end");
  if (!(kp_bin_km > 0.0)) throw std::invalid_argument("histogram: kp_bin_km must be > 0");
  if (!(time_bin_s > 0.0)) throw std::invalid_argument("histogram: time_bin_s must be > 0");
}

namespace {

std::size_t bin_count(double start, double end, double width) {
  return static_cast<std::size_t>(std::ceil((end - start) / width - 1e-9));
}

// Interior boundaries belong to the lower bin; the range start stays in bin 0.
long long bin_of(double x, double start, double width, std::size_t bins) {
  const double f = (x - start) / width;
  long long b = static_cast<long long>(std::ceil(f)) - 1;
  if (b < 0 && x >= start) b = 0;
  if (b >= static_cast<long long>(bins) && x <= start + width * static_cast<double>(bins))
    b = static_cast<long long>(bins) - 1;
  return b;
}

}  // namespace

EventHistogram::EventHistogram(const HistogramConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  kp_bins_ = bin_count(cfg_.kp_start, cfg_.kp_end, cfg_.kp_bin_km);
  time_bins_ = bin_count(cfg_.t_start, cfg_.t_end, cfg_.time_bin_s);
  counts_.assign(kp_bins_ * time_bins_ * 2, 0);
  cell_tracks_.assign(kp_bins_ * time_bins_, {});
}

int EventHistogram::count(std::size_t time_bin, std::size_t kp_bin, ChangeDirection d) const {
  return counts_[(time_bin * kp_bins_ + kp_bin) * 2 + static_cast<std::size_t>(d)];
}

int EventHistogram::total(std::size_t time_bin, std::size_t kp_bin) const {
  return count(time_bin, kp_bin, ChangeDirection::NearToFar) +
         count(time_bin, kp_bin, ChangeDirection::FarToNear);
}

const std::vector<int>& EventHistogram::tracks_in(std::size_t time_bin,
                                                  std::size_t kp_bin) const {
  return cell_tracks_[time_bin * kp_bins_ + kp_bin];
}

long EventHistogram::total_count() const {
  long t = 0;
  for (int c : counts_) t += c;
  return t;
}

double EventHistogram::kp_bin_start(std::size_t kp_bin) const {
  return cfg_.kp_start + static_cast<double>(kp_bin) * cfg_.kp_bin_km;
}
double EventHistogram::kp_bin_end(std::size_t kp_bin) const {
  return std::min(cfg_.kp_end, kp_bin_start(kp_bin) + cfg_.kp_bin_km);
}
double EventHistogram::time_bin_start(std::size_t time_bin) const {
  return cfg_.t_start + static_cast<double>(time_bin) * cfg_.time_bin_s;
}
double EventHistogram::time_bin_end(std::size_t time_bin) const {
  return std::min(cfg_.t_end, time_bin_start(time_bin) + cfg_.time_bin_s);
}

void EventHistogram::add(const LaneChangeEvent& e) {
  const long long kb = bin_of(e.kp, cfg_.kp_start, cfg_.kp_bin_km, kp_bins_);
  const long long tb = bin_of(e.time_s, cfg_.t_start, cfg_.time_bin_s, time_bins_);
  if (kb < 0 || kb >= static_cast<long long>(kp_bins_) || tb < 0 ||
      tb >= static_cast<long long>(time_bins_) || e.kp > cfg_.kp_end || e.kp < cfg_.kp_start ||
      e.time_s > cfg_.t_end || e.time_s < cfg_.t_start) {
    ++skipped_;
    return;
  }
  const std::size_t cell = static_cast<std::size_t>(tb) * kp_bins_ + static_cast<std::size_t>(kb);
  ++counts_[cell * 2 + static_cast<std::size_t>(direction_of(e))];
  cell_tracks_[cell].push_back(e.track_id);
}

EventHistogram aggregate(const std::vector<LaneChangeEvent>& events,
                         const HistogramConfig& cfg) {
  EventHistogram h(cfg);
  for (const auto& e : events) h.add(e);
  return h;
}

std::vector<AbnormalityAlert> detect_hotspots(const EventHistogram& h,
                                              const HotspotConfig& cfg) {
  if (cfg.min_count < 1) throw std::invalid_argument("hotspots: min_count must be >= 1");
  std::vector<AbnormalityAlert> alerts;

  for (std::size_t tb = 0; tb < h.time_bins(); ++tb) {
    std::size_t kb = 0;
    while (kb < h.kp_bins()) {
      if (h.total(tb, kb) < cfg.min_count) {
        ++kb;
        continue;
      }
      std::size_t kb_end = kb + 1;
      if (cfg.adjacent_merge)
        while (kb_end < h.kp_bins() && h.total(tb, kb_end) >= cfg.min_count) ++kb_end;

      AbnormalityAlert a;
      a.kp_start = h.kp_bin_start(kb);
      a.kp_end = h.kp_bin_end(kb_end - 1);
      a.t_start = h.time_bin_start(tb);
      a.t_end = h.time_bin_end(tb);
      int n2f = 0, f2n = 0;
      for (std::size_t b = kb; b < kb_end; ++b) {
        n2f += h.count(tb, b, ChangeDirection::NearToFar);
        f2n += h.count(tb, b, ChangeDirection::FarToNear);
        const auto& ts = h.tracks_in(tb, b);
        a.track_ids.insert(a.track_ids.end(), ts.begin(), ts.end());
      }
      a.event_count = n2f + f2n;
      a.dominant_direction =
          f2n > n2f ? ChangeDirection::FarToNear : ChangeDirection::NearToFar;
      std::sort(a.track_ids.begin(), a.track_ids.end());
      a.track_ids.erase(std::unique(a.track_ids.begin(), a.track_ids.end()),
                        a.track_ids.end());

      if (!cfg.require_near_to_far || a.dominant_direction == ChangeDirection::NearToFar)
        alerts.push_back(std::move(a));
      kb = kb_end;
    }
  }
  return alerts;
}

}  // namespace dfos
