#include "dfos/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace dfos {

namespace {

std::string fmt_rate(const std::optional<double>& r) {
  if (!r) return "N/A";
  std::ostringstream os;
  os.precision(1);
  os << std::fixed << (*r * 100.0) << "%";
  return os.str();
}

nlohmann::json rate_json(const std::optional<double>& r) {
  if (!r) return nullptr;
  return *r;
}

nlohmann::json direction_json(const DirectionRates& d) {
  return {{"true_total", d.true_total},
          {"detected_total", d.detected_total},
          {"matched", d.matched},
          {"true_positive_rate", rate_json(d.true_positive_rate())},
          {"false_positive_rate", rate_json(d.false_positive_rate())}};
}

}  // namespace

TrackingMetrics tracking_accuracy(const std::vector<VehicleTrack>& tracks,
                                  const std::vector<CheckpointArrival>& truth,
                                  double tol_s) {
  if (!(tol_s > 0.0)) throw std::invalid_argument("tracking_accuracy: tol_s must be > 0");
  if (truth.empty()) throw std::invalid_argument("tracking_accuracy: no checkpoints configured");

  // Destination checkpoint per vehicle: the latest true arrival.
  std::map<int, const CheckpointArrival*> destination;
  for (const auto& c : truth) {
    auto& slot = destination[c.vehicle_id];
    if (!slot || c.arrival_time_s > slot->arrival_time_s) slot = &c;
  }

  TrackingMetrics m;
  for (const auto& [vid, cp] : destination) {
    const std::string cls = to_string(cp->vehicle_class);
    ++m.overall.total;
    ++m.by_class[cls].total;

    const VehicleTrack* track = nullptr;
    for (const auto& t : tracks)
      if (t.track_id() == vid) {
        track = &t;
        break;
      }
    if (!track) continue;
    const auto arrival = track->time_at_kp(cp->checkpoint_kp);
    if (arrival && std::fabs(*arrival - cp->arrival_time_s) <= tol_s) {
      ++m.overall.detected;
      ++m.by_class[cls].detected;
    }
  }
  return m;
}

LaneChangeMetrics lane_change_metrics(const std::vector<LaneChangeEvent>& detected,
                                      const std::vector<TrueLaneChange>& truth,
                                      double match_window_s, double match_kp_km) {
  if (!(match_window_s > 0.0) || !(match_kp_km > 0.0))
    throw std::invalid_argument("lane_change_metrics: match windows must be > 0");

  std::vector<const LaneChangeEvent*> det;
  det.reserve(detected.size());
  for (const auto& e : detected) det.push_back(&e);
  std::sort(det.begin(), det.end(),
            [](const LaneChangeEvent* a, const LaneChangeEvent* b) { return a->time_s < b->time_s; });

  std::vector<bool> truth_used(truth.size(), false);
  LaneChangeMetrics m;
  for (const auto& t : truth) {
    auto& d = t.from_lane == Lane::Near ? m.near_to_far : m.far_to_near;
    ++d.true_total;
    ++m.pooled.true_total;
  }

  for (const auto* e : det) {
    auto& d = e->from_lane == Lane::Near ? m.near_to_far : m.far_to_near;
    ++d.detected_total;
    ++m.pooled.detected_total;

    long best = -1;
    double best_dt = match_window_s + 1.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth_used[i]) continue;
      if (truth[i].from_lane != e->from_lane || truth[i].to_lane != e->to_lane) continue;
      const double dt = std::fabs(truth[i].time_s - e->time_s);
      if (dt > match_window_s) continue;
      if (std::fabs(truth[i].kp - e->kp) > match_kp_km) continue;
      if (dt < best_dt) {
        best_dt = dt;
        best = static_cast<long>(i);
      }
    }
    if (best >= 0) {
      truth_used[static_cast<std::size_t>(best)] = true;
      ++d.matched;
      ++m.pooled.matched;
    }
  }
  return m;
}

std::string MetricsReport::to_table() const {
  std::ostringstream os;
  os << "Tracking\n";
  os << "  class            detected  total  accuracy\n";
  const auto line = [&](const std::string& name, const ClassCount& c) {
    os << "  " << name;
    for (std::size_t i = name.size(); i < 17; ++i) os << ' ';
    os << c.detected << "  " << c.total << "  " << fmt_rate(c.accuracy()) << '\n';
  };
  for (const auto& [name, c] : tracking.by_class) line(name, c);
  line("all", tracking.overall);

  os << "Lane changes\n";
  os << "  direction   matched  true  detected  TPR    FPR\n";
  const auto dline = [&](const std::string& name, const DirectionRates& d) {
    os << "  " << name;
    for (std::size_t i = name.size(); i < 11; ++i) os << ' ';
    os << d.matched << "  " << d.true_total << "  " << d.detected_total << "  "
       << fmt_rate(d.true_positive_rate()) << "  " << fmt_rate(d.false_positive_rate()) << '\n';
  };
  dline("near->far", lane_change.near_to_far);
  dline("far->near", lane_change.far_to_near);
  dline("pooled", lane_change.pooled);
  return os.str();
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["tracking"]["overall"] = {{"detected", tracking.overall.detected},
                              {"total", tracking.overall.total},
                              {"accuracy", rate_json(tracking.overall.accuracy())}};
  for (const auto& [name, c] : tracking.by_class)
    j["tracking"]["by_class"][name] = {
        {"detected", c.detected}, {"total", c.total}, {"accuracy", rate_json(c.accuracy())}};
  j["lane_change"]["near_to_far"] = direction_json(lane_change.near_to_far);
  j["lane_change"]["far_to_near"] = direction_json(lane_change.far_to_near);
  j["lane_change"]["pooled"] = direction_json(lane_change.pooled);
  return j.dump(2);
}

}  // namespace dfos
