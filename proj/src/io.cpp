#include "dfos/io.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace dfos {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  return cells;
}

bool is_header(const std::vector<std::string>& cells) {
  if (cells.empty() || cells[0].empty()) return false;
  const char c = cells[0][0];
  return !std::isdigit(static_cast<unsigned char>(c)) && c != '-' && c != '+' && c != '.';
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) fail(path + ": cannot open for writing");
  os.precision(9);
  return os;
}

}  // namespace

std::vector<TrackSeed> read_starts_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(path + ": cannot open");
  std::vector<TrackSeed> seeds;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split_csv(line);
    if (is_header(cells)) continue;
    try {
      TrackSeed s;
      if (cells.size() >= 3) {
        s.track_id = std::stoi(cells[0]);
        s.time_s = std::stod(cells[1]);
        s.kp = std::stod(cells[2]);
      } else if (cells.size() == 2) {
        s.track_id = static_cast<int>(seeds.size());
        s.time_s = std::stod(cells[0]);
        s.kp = std::stod(cells[1]);
      } else {
        fail(path + ":" + std::to_string(lineno) + ": expected 'time_s,kp' or 'id,time_s,kp'");
      }
      seeds.push_back(s);
    } catch (const std::invalid_argument&) {
      fail(path + ":" + std::to_string(lineno) + ": cannot parse '" + line + "'");
    }
  }
  return seeds;
}

void write_track_csv(const VehicleTrack& track, const std::string& path) {
  auto os = open_out(path);
  os << "time_s,kp,channel,speed_kmh,status\n";
  const auto& g = track.geometry();
  const auto& segs = track.segments();
  for (std::size_t i = 0; i < track.path().size(); ++i) {
    const auto& p = track.path()[i];
    const double speed = i < segs.size() ? segs[i].speed_kmh
                         : (segs.empty() ? 0.0 : segs.back().speed_kmh);
    const bool last = i + 1 == track.path().size();
    os << p.time_s << ',' << g.kp_at_channel_unchecked(p.channel) << ',' << p.channel << ','
       << speed << ',' << (last ? to_string(track.status()) : "Active") << '\n';
  }
}

VehicleTrack read_track_csv(const std::string& path, int track_id,
                            const SensorGeometry& geometry) {
  std::ifstream is(path);
  if (!is) fail(path + ": cannot open");
  std::vector<TrackPoint> pathpts;
  TrackStatus status = TrackStatus::Completed;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (is_header(cells)) continue;
    if (cells.size() < 5)
      fail(path + ":" + std::to_string(lineno) + ": expected 5 columns");
    try {
      pathpts.push_back({std::stod(cells[0]), std::stod(cells[2])});
      status = track_status_from_string(cells[4]);
    } catch (const std::invalid_argument&) {
      fail(path + ":" + std::to_string(lineno) + ": cannot parse '" + line + "'");
    }
  }
  if (pathpts.empty()) fail(path + ": no track rows");
  return VehicleTrack::from_path(track_id, geometry, std::move(pathpts), status);
}

TrackSummaryRow summarize(const VehicleTrack& track) {
  TrackSummaryRow row;
  row.track_id = track.track_id();
  row.status = track.status();
  row.start_time_s = track.start_time_s();
  row.end_time_s = track.end_time_s();
  row.start_kp = track.kp_at(row.start_time_s);
  row.end_kp = track.kp_at(row.end_time_s);
  double sum = 0.0;
  for (double v : track.speed_history()) sum += v;
  row.mean_speed_kmh =
      track.speed_history().empty() ? 0.0 : sum / track.speed_history().size();
  return row;
}

void write_track_summary(const std::vector<TrackSummaryRow>& rows, const std::string& path) {
  auto os = open_out(path);
  os << "track_id,start_time_s,start_kp,end_time_s,end_kp,mean_speed_kmh,status\n";
  for (const auto& r : rows)
    os << r.track_id << ',' << r.start_time_s << ',' << r.start_kp << ',' << r.end_time_s
       << ',' << r.end_kp << ',' << r.mean_speed_kmh << ',' << to_string(r.status) << '\n';
}

std::vector<TrackSummaryRow> read_track_summary(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(path + ": cannot open");
  std::vector<TrackSummaryRow> rows;
  std::string line;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (is_header(cells)) continue;
    if (cells.size() < 7) fail(path + ": expected 7 columns in '" + line + "'");
    TrackSummaryRow r;
    r.track_id = std::stoi(cells[0]);
    r.start_time_s = std::stod(cells[1]);
    r.start_kp = std::stod(cells[2]);
    r.end_time_s = std::stod(cells[3]);
    r.end_kp = std::stod(cells[4]);
    r.mean_speed_kmh = std::stod(cells[5]);
    r.status = track_status_from_string(cells[6]);
    rows.push_back(r);
  }
  return rows;
}

void write_events_jsonl(const std::vector<LaneChangeEvent>& events, const std::string& path) {
  auto os = open_out(path);
  for (const auto& e : events) {
    nlohmann::json j{{"time_s", e.time_s},
                     {"kp", e.kp},
                     {"from_lane", to_string(e.from_lane)},
                     {"to_lane", to_string(e.to_lane)},
                     {"centroid_before_hz", e.centroid_before_hz},
                     {"centroid_after_hz", e.centroid_after_hz},
                     {"track_id", e.track_id}};
    os << j.dump() << '\n';
  }
}

std::vector<LaneChangeEvent> read_events_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(path + ": cannot open");
  std::vector<LaneChangeEvent> events;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      LaneChangeEvent e;
      e.time_s = j.at("time_s").get<double>();
      e.kp = j.at("kp").get<double>();
      e.from_lane = lane_from_string(j.at("from_lane").get<std::string>());
      e.to_lane = lane_from_string(j.at("to_lane").get<std::string>());
      e.centroid_before_hz = j.at("centroid_before_hz").get<double>();
      e.centroid_after_hz = j.at("centroid_after_hz").get<double>();
      e.track_id = j.at("track_id").get<int>();
      events.push_back(e);
    } catch (const nlohmann::json::exception& ex) {
      fail(path + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return events;
}

void write_events_csv(const std::vector<LaneChangeEvent>& events, const std::string& path) {
  auto os = open_out(path);
  os << "time_s,kp,from_lane,to_lane,centroid_before_hz,centroid_after_hz,track_id\n";
  for (const auto& e : events)
    os << e.time_s << ',' << e.kp << ',' << to_string(e.from_lane) << ',' << to_string(e.to_lane)
       << ',' << e.centroid_before_hz << ',' << e.centroid_after_hz << ',' << e.track_id << '\n';
}

void write_threshold_file(const CentroidThreshold& th, const std::string& path) {
  auto os = open_out(path);
  os << "threshold_hz=" << th.value_hz << '\n'
     << "near_samples=" << th.near_sample_count << '\n'
     << "far_samples=" << th.far_sample_count << '\n'
     << "misclassification_rate=" << th.misclassification_rate << '\n';
}

CentroidThreshold read_threshold_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(path + ": cannot open");
  CentroidThreshold th;
  bool have_value = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(path + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "threshold_hz") {
        th.value_hz = std::stod(value);
        have_value = true;
      } else if (key == "near_samples") th.near_sample_count = std::stoi(value);
      else if (key == "far_samples") th.far_sample_count = std::stoi(value);
      else if (key == "misclassification_rate") th.misclassification_rate = std::stod(value);
      else fail(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      fail(path + ":" + std::to_string(lineno) + ": cannot parse '" + value + "'");
    }
  }
  if (!have_value) fail(path + ": missing threshold_hz");
  if (!(th.value_hz > 0.0)) fail(path + ": threshold_hz must be > 0");
  return th;
}

void write_alerts_jsonl(const std::vector<AbnormalityAlert>& alerts, const std::string& path) {
  auto os = open_out(path);
  for (const auto& a : alerts) {
    nlohmann::json j{{"kp_start", a.kp_start}, {"kp_end", a.kp_end},
                     {"t_start", a.t_start},   {"t_end", a.t_end},
                     {"count", a.event_count}, {"direction", to_string(a.dominant_direction)},
                     {"tracks", a.track_ids}};
    os << j.dump() << '\n';
  }
}

std::string alerts_summary_table(const std::vector<AbnormalityAlert>& alerts) {
  std::ostringstream os;
  os.precision(3);
  os << std::fixed;
  if (alerts.empty()) {
    os << "no abnormality alerts\n";
    return os.str();
  }
  os << "kp range          time range        events  direction\n";
  for (const auto& a : alerts) {
    os << std::setw(7) << a.kp_start << "-" << std::setw(7) << a.kp_end << "   " << std::setw(7)
       << a.t_start << "-" << std::setw(7) << a.t_end << "   " << std::setw(5) << a.event_count
       << "   " << to_string(a.dominant_direction) << " (" << a.track_ids.size() << " vehicles)\n";
  }
  return os.str();
}

}  // namespace dfos
