#include "dfos/simulator.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>

namespace dfos {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

double kmh_to_mps(double kmh) { return kmh / 3.6; }

}  // namespace

const char* to_string(Lane lane) { return lane == Lane::Near ? "Near" : "Far"; }

const char* to_string(VehicleClass cls) {
  return cls == VehicleClass::Large ? "Large" : "Small";
}

Lane lane_from_string(const std::string& s) {
  if (s == "Near" || s == "near") return Lane::Near;
  if (s == "Far" || s == "far") return Lane::Far;
  throw std::invalid_argument("unknown lane '" + s + "' (expected Near or Far)");
}

VehicleClass vehicle_class_from_string(const std::string& s) {
  if (s == "Large" || s == "large") return VehicleClass::Large;
  if (s == "Small" || s == "small") return VehicleClass::Small;
  throw std::invalid_argument("unknown vehicle class '" + s + "' (expected Large or Small)");
}

void LaneModels::validate() const {
  if (!(near.amplitude_gain > far.amplitude_gain) || !(far.amplitude_gain > 0.0))
    throw std::invalid_argument(
        "lane models: require amplitude_gain(Near) > amplitude_gain(Far) > 0");
  if (!(near.carrier_frequency_hz > far.carrier_frequency_hz) ||
      !(far.carrier_frequency_hz > 0.0))
    throw std::invalid_argument(
        "lane models: require carrier_frequency(Near) > carrier_frequency(Far) > 0");
}

LaneModels default_lane_models() {
  // Far gain below (1-depth)/(1+depth) of the near gain keeps far-lane
  // modulation crests under near-lane troughs, so the intensity ordering
  // holds at every sample.
  LaneModels m;
  m.near = {Lane::Near, 1.0, 3.2};
  m.far = {Lane::Far, 0.3, 2.2};
  return m;
}

double VehicleSpec::speed_kmh_at(double t_s) const {
  double v = speed_profile.empty() ? 0.0 : speed_profile.front().speed_kmh;
  for (const auto& seg : speed_profile) {
    if (seg.since_s <= t_s) v = seg.speed_kmh;
    else break;
  }
  return v;
}

Lane VehicleSpec::lane_at(double t_s) const {
  Lane lane = lane_timeline.empty() ? Lane::Near : lane_timeline.front().lane;
  for (const auto& tr : lane_timeline) {
    if (tr.time_s <= t_s) lane = tr.lane;
    else break;
  }
  return lane;
}

double VehicleSpec::kp_at(double t_s) const {
  // Walk the profile breakpoints between entry and t_s.
  double km = 0.0;
  double cursor = entry_time_s;
  while (cursor < t_s) {
    const double v = speed_kmh_at(cursor);
    double next = t_s;
    for (const auto& seg : speed_profile)
      if (seg.since_s > cursor) { next = std::min(next, seg.since_s); break; }
    km += kmh_to_mps(v) * (next - cursor) / 1000.0;
    cursor = next;
  }
  return entry_kp + heading * km;
}

void SceneSpec::validate() const {
  geometry.validate();
  if (!(duration_s > 0.0)) throw std::invalid_argument("scene: duration_s must be > 0");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("scene: noise_sigma must be >= 0");
  if (!(base_amplitude > 0.0)) throw std::invalid_argument("scene: base_amplitude must be > 0");
  if (!(kernel_sigma_channels > 0.0))
    throw std::invalid_argument("scene: kernel_sigma_channels must be > 0");
  if (!(modulation_depth >= 0.0 && modulation_depth <= 1.0))
    throw std::invalid_argument("scene: modulation_depth must be in [0, 1]");
  lanes.validate();
  for (const auto& s : low_snr_sections) {
    if (!(s.attenuation > 0.0 && s.attenuation <= 1.0))
      throw std::invalid_argument("low_snr: attenuation must be in (0, 1]");
    if (!(s.kp_start < s.kp_end))
      throw std::invalid_argument("low_snr: kp_start must be < kp_end");
  }
  for (const auto& v : vehicles) {
    const std::string who = "vehicle " + std::to_string(v.id);
    if (v.heading != 1 && v.heading != -1)
      throw std::invalid_argument(who + ": heading must be +1 or -1");
    if (v.speed_profile.empty())
      throw std::invalid_argument(who + ": speed profile is empty");
    if (v.speed_profile.front().since_s > v.entry_time_s + 1e-9)
      throw std::invalid_argument(who + ": first speed segment must start at or before entry_time_s");
    for (std::size_t i = 0; i < v.speed_profile.size(); ++i) {
      const auto& seg = v.speed_profile[i];
      if (!(seg.speed_kmh >= 0.0 && seg.speed_kmh <= v_max_kmh))
        throw std::invalid_argument(who + ": speed " + std::to_string(seg.speed_kmh) +
                                    " km/h outside [0, " + std::to_string(v_max_kmh) + "]");
      if (i > 0 && !(seg.since_s > v.speed_profile[i - 1].since_s))
        throw std::invalid_argument(who + ": speed segment times must be increasing");
    }
    if (v.lane_timeline.empty())
      throw std::invalid_argument(who + ": lane timeline is empty");
    if (v.lane_timeline.front().time_s > v.entry_time_s + 1e-9)
      throw std::invalid_argument(who + ": initial lane must be set at or before entry_time_s");
    for (std::size_t i = 1; i < v.lane_timeline.size(); ++i) {
      if (!(v.lane_timeline[i].time_s > v.lane_timeline[i - 1].time_s))
        throw std::invalid_argument(who + ": lane timeline times must be strictly increasing");
      if (v.lane_timeline[i].lane == v.lane_timeline[i - 1].lane)
        throw std::invalid_argument(who + ": lane timeline repeats lane " +
                                    to_string(v.lane_timeline[i].lane));
    }
  }
}

std::vector<float> simulate_noise_field(std::uint64_t seed, std::size_t rows,
                                        std::size_t cols, double sigma) {
  std::vector<float> noise(rows * cols, 0.0f);
  if (sigma <= 0.0) return noise;
  // Box-Muller on top of mt19937_64: keeps the realization identical across
  // standard libraries for a given seed.
  std::mt19937_64 rng(seed);
  const double norm = 1.0 / static_cast<double>(std::mt19937_64::max());
  bool have_spare = false;
  double spare = 0.0;
  for (auto& cell : noise) {
    double z;
    if (have_spare) {
      z = spare;
      have_spare = false;
    } else {
      double u1 = 0.0;
      do {
        u1 = static_cast<double>(rng()) * norm;
      } while (u1 <= 0.0);
      const double u2 = static_cast<double>(rng()) * norm;
      const double r = std::sqrt(-2.0 * std::log(u1));
      z = r * std::cos(kTwoPi * u2);
      spare = r * std::sin(kTwoPi * u2);
      have_spare = true;
    }
    cell = static_cast<float>(sigma * z);
  }
  return noise;
}

namespace {

// Modulation phase is integrated across lane transitions so a lane change
// shifts the carrier without a phase jump.
class ModulationPhase {
 public:
  ModulationPhase(const VehicleSpec& v, const LaneModels& lanes) {
    double phase = 0.0;
    double t = v.entry_time_s;
    Lane lane = v.lane_at(t);
    starts_.push_back({t, phase, lanes.for_lane(lane).carrier_frequency_hz});
    for (const auto& tr : v.lane_timeline) {
      if (tr.time_s <= t) continue;
      phase += kTwoPi * starts_.back().freq_hz * (tr.time_s - starts_.back().t0);
      starts_.push_back({tr.time_s, phase, lanes.for_lane(tr.lane).carrier_frequency_hz});
    }
  }

  double at(double t_s) const {
    const Piece* p = &starts_.front();
    for (const auto& piece : starts_) {
      if (piece.t0 <= t_s) p = &piece;
      else break;
    }
    return p->phase0 + kTwoPi * p->freq_hz * (t_s - p->t0);
  }

 private:
  struct Piece {
    double t0;
    double phase0;
    double freq_hz;
  };
  std::vector<Piece> starts_;
};

double class_scale(VehicleClass cls) { return cls == VehicleClass::Large ? 1.6 : 1.0; }

double attenuation_at(const SceneSpec& spec, double kp) {
  double a = 1.0;
  for (const auto& s : spec.low_snr_sections)
    if (kp >= s.kp_start && kp <= s.kp_end) a *= s.attenuation;
  return a;
}

// First time the vehicle reaches checkpoint kp, solved per speed segment.
std::optional<double> crossing_time(const VehicleSpec& v, double kp, double t_end) {
  double cursor = v.entry_time_s;
  double pos = v.entry_kp;
  while (cursor < t_end) {
    const double speed = v.speed_kmh_at(cursor);
    double next = t_end;
    for (const auto& seg : v.speed_profile)
      if (seg.since_s > cursor) { next = std::min(next, seg.since_s); break; }
    const double vel_kps = v.heading * kmh_to_mps(speed) / 1000.0;  // km per second
    const double pos_next = pos + vel_kps * (next - cursor);
    const double lo = std::min(pos, pos_next), hi = std::max(pos, pos_next);
    if (kp >= lo && kp <= hi && vel_kps != 0.0) {
      const double t = cursor + (kp - pos) / vel_kps;
      if (t >= cursor - 1e-9 && t <= next + 1e-9) return t;
    }
    if (pos == kp && vel_kps == 0.0) return cursor;
    cursor = next;
    pos = pos_next;
  }
  return std::nullopt;
}

}  // namespace

std::pair<Waterfall, GroundTruth> render_scene(const SceneSpec& spec) {
  spec.validate();
  const auto& g = spec.geometry;
  const double dt = g.temporal_resolution_s;
  const std::size_t rows = static_cast<std::size_t>(std::llround(spec.duration_s / dt));
  const std::size_t cols = g.channel_count;
  if (rows == 0) fail("scene: duration shorter than one time sample");

  Waterfall w(g, spec.start_time_s, rows);
  GroundTruth gt;
  gt.traces.resize(spec.vehicles.size());
  gt.lane_timelines.resize(spec.vehicles.size());
  gt.truncated.assign(spec.vehicles.size(), false);

  const double t_end = spec.start_time_s + spec.duration_s;
  const double sigma_ch = spec.kernel_sigma_channels;
  const int reach = static_cast<int>(std::ceil(4.0 * sigma_ch));

  std::vector<float>& cells = w.samples();

  for (std::size_t vi = 0; vi < spec.vehicles.size(); ++vi) {
    const auto& v = spec.vehicles[vi];
    gt.lane_timelines[vi] = v.lane_timeline;
    const ModulationPhase phase(v, spec.lanes);
    const double amp0 = spec.base_amplitude * class_scale(v.vehicle_class);

    for (std::size_t r = 0; r < rows; ++r) {
      const double t = w.row_time_s(r);
      if (t < v.entry_time_s) continue;
      const double kp = v.kp_at(t);
      const Lane lane = v.lane_at(t);
      const bool in_range = g.kp_in_range(kp);
      const double ch = g.channel_coordinate(kp);
      gt.traces[vi].push_back({t, kp, ch, lane, in_range});
      if (!in_range) {
        gt.truncated[vi] = true;
        continue;
      }
      const auto& lm = spec.lanes.for_lane(lane);
      double amp = amp0 * lm.amplitude_gain *
                   (1.0 + spec.modulation_depth * std::sin(phase.at(t)));
      if (amp < 0.0) amp = 0.0;
      amp *= attenuation_at(spec, kp);

      const int c_lo = std::max(0, static_cast<int>(std::floor(ch)) - reach);
      const int c_hi = std::min(static_cast<int>(cols) - 1,
                                static_cast<int>(std::ceil(ch)) + reach);
      for (int c = c_lo; c <= c_hi; ++c) {
        const double d = (static_cast<double>(c) - ch) / sigma_ch;
        cells[r * cols + c] += static_cast<float>(amp * std::exp(-0.5 * d * d));
      }
    }

    // Lane-change events, in sensed range and inside the scene window.
    for (std::size_t i = 1; i < v.lane_timeline.size(); ++i) {
      const double t = v.lane_timeline[i].time_s;
      if (t < v.entry_time_s || t >= t_end) continue;
      const double kp = v.kp_at(t);
      if (!g.kp_in_range(kp)) continue;
      gt.lane_changes.push_back(
          {v.id, t, kp, v.lane_timeline[i - 1].lane, v.lane_timeline[i].lane});
    }

    for (const double cp : spec.checkpoints_kp) {
      if (const auto t = crossing_time(v, cp, t_end))
        gt.checkpoints.push_back({v.id, cp, *t, v.vehicle_class});
    }
  }

  if (spec.noise_sigma > 0.0) {
    const auto noise = simulate_noise_field(spec.rng_seed, rows, cols, spec.noise_sigma);
    for (std::size_t i = 0; i < cells.size(); ++i)
      cells[i] = std::fabs(cells[i] + noise[i]);
  }
  return {std::move(w), std::move(gt)};
}

// ---------------------------------------------------------------------------
// Scene files
// ---------------------------------------------------------------------------

namespace {

struct SceneParser {
  std::string name;
  std::size_t lineno = 0;

  [[noreturn]] void err(const std::string& msg) const {
    fail(name + ":" + std::to_string(lineno) + ": " + msg);
  }

  double num(const std::string& v, const std::string& key) const {
    try {
      std::size_t pos = 0;
      const double d = std::stod(v, &pos);
      while (pos < v.size() && std::isspace(static_cast<unsigned char>(v[pos]))) ++pos;
      if (pos != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      err("cannot parse number '" + v + "' for " + key);
    }
  }
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

SceneSpec parse_scene_spec(std::istream& is, const std::string& name) {
  SceneSpec spec;
  spec.geometry.channel_count = 0;  // must be set by the file
  SceneParser p{name};
  std::string section;
  std::string line;
  VehicleSpec* vehicle = nullptr;
  int next_vehicle_id = 0;

  while (std::getline(is, line)) {
    ++p.lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;

    if (line.front() == '[') {
      if (line.back() != ']') p.err("unterminated section header");
      section = line.substr(1, line.size() - 2);
      if (section == "vehicle") {
        spec.vehicles.emplace_back();
        vehicle = &spec.vehicles.back();
        vehicle->id = next_vehicle_id++;
      } else if (section != "scene" && section != "geometry" && section != "lanes" &&
                 section != "checkpoints" && section != "low_snr") {
        p.err("unknown section [" + section + "]");
      }
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos) p.err("expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    if (section == "scene") {
      if (key == "duration_s") spec.duration_s = p.num(value, key);
      else if (key == "noise_sigma") spec.noise_sigma = p.num(value, key);
      else if (key == "rng_seed") spec.rng_seed = static_cast<std::uint64_t>(p.num(value, key));
      else if (key == "base_amplitude") spec.base_amplitude = p.num(value, key);
      else if (key == "kernel_sigma_channels") spec.kernel_sigma_channels = p.num(value, key);
      else if (key == "modulation_depth") spec.modulation_depth = p.num(value, key);
      else if (key == "v_max_kmh") spec.v_max_kmh = p.num(value, key);
      else p.err("unknown key '" + key + "' in [scene]");
    } else if (section == "geometry") {
      if (key == "spatial_resolution_m") spec.geometry.spatial_resolution_m = p.num(value, key);
      else if (key == "temporal_resolution_s") spec.geometry.temporal_resolution_s = p.num(value, key);
      else if (key == "origin_kp") spec.geometry.origin_kp = p.num(value, key);
      else if (key == "channel_count")
        spec.geometry.channel_count = static_cast<std::size_t>(p.num(value, key));
      else if (key == "kp_direction") spec.geometry.kp_direction = static_cast<int>(p.num(value, key));
      else if (key == "start_time_s") spec.start_time_s = p.num(value, key);
      else p.err("unknown key '" + key + "' in [geometry]");
    } else if (section == "lanes") {
      if (key == "near_gain") spec.lanes.near.amplitude_gain = p.num(value, key);
      else if (key == "near_carrier_hz") spec.lanes.near.carrier_frequency_hz = p.num(value, key);
      else if (key == "far_gain") spec.lanes.far.amplitude_gain = p.num(value, key);
      else if (key == "far_carrier_hz") spec.lanes.far.carrier_frequency_hz = p.num(value, key);
      else p.err("unknown key '" + key + "' in [lanes]");
    } else if (section == "checkpoints") {
      if (key == "kp") spec.checkpoints_kp.push_back(p.num(value, key));
      else p.err("unknown key '" + key + "' in [checkpoints]");
    } else if (section == "low_snr") {
      if (key == "section") {
        std::istringstream ss(value);
        LowSnrSection s;
        if (!(ss >> s.kp_start >> s.kp_end >> s.attenuation))
          p.err("expected 'section = kp_start kp_end attenuation'");
        spec.low_snr_sections.push_back(s);
      } else {
        p.err("unknown key '" + key + "' in [low_snr]");
      }
    } else if (section == "vehicle") {
      if (!vehicle) p.err("key outside any section");
      if (key == "entry_time_s") vehicle->entry_time_s = p.num(value, key);
      else if (key == "entry_kp") vehicle->entry_kp = p.num(value, key);
      else if (key == "heading") vehicle->heading = static_cast<int>(p.num(value, key));
      else if (key == "class") {
        try {
          vehicle->vehicle_class = vehicle_class_from_string(value);
        } catch (const std::exception& e) {
          p.err(e.what());
        }
      } else if (key == "lane") {
        try {
          vehicle->lane_timeline.insert(vehicle->lane_timeline.begin(),
                                        {vehicle->entry_time_s, lane_from_string(value)});
        } catch (const std::exception& e) {
          p.err(e.what());
        }
      } else if (key == "speed") {
        std::istringstream ss(value);
        SpeedSegment seg;
        if (!(ss >> seg.since_s >> seg.speed_kmh))
          p.err("expected 'speed = since_s speed_kmh'");
        vehicle->speed_profile.push_back(seg);
      } else if (key == "lane_change") {
        std::istringstream ss(value);
        LaneTransition tr;
        std::string lane_name;
        if (!(ss >> tr.time_s >> lane_name)) p.err("expected 'lane_change = time_s lane'");
        try {
          tr.lane = lane_from_string(lane_name);
        } catch (const std::exception& e) {
          p.err(e.what());
        }
        vehicle->lane_timeline.push_back(tr);
      } else {
        p.err("unknown key '" + key + "' in [vehicle]");
      }
    } else {
      p.err("key '" + key + "' before any section");
    }
  }

  // Initial lane lines are inserted at the front with the entry time; make
  // sure that stayed consistent if entry_time_s was set after "lane".
  for (auto& v : spec.vehicles) {
    if (!v.lane_timeline.empty() && v.lane_timeline.front().time_s > v.entry_time_s)
      v.lane_timeline.front().time_s = v.entry_time_s;
    std::sort(v.lane_timeline.begin() + (v.lane_timeline.empty() ? 0 : 1),
              v.lane_timeline.end(),
              [](const LaneTransition& a, const LaneTransition& b) { return a.time_s < b.time_s; });
    std::sort(v.speed_profile.begin(), v.speed_profile.end(),
              [](const SpeedSegment& a, const SpeedSegment& b) { return a.since_s < b.since_s; });
  }

  try {
    spec.validate();
  } catch (const std::exception& e) {
    fail(name + ": " + e.what());
  }
  return spec;
}

SceneSpec load_scene_spec(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(path + ": cannot open");
  return parse_scene_spec(is, path);
}

// ---------------------------------------------------------------------------
// Ground-truth CSV
// ---------------------------------------------------------------------------

void write_ground_truth(const GroundTruth& gt, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  {
    std::ofstream os(dir + "/trace.csv");
    if (!os) fail(dir + "/trace.csv: cannot open for writing");
    os.precision(9);
    os << "vehicle_id,time_s,kp,channel,lane,in_range\n";
    for (std::size_t vi = 0; vi < gt.traces.size(); ++vi)
      for (const auto& pt : gt.traces[vi])
        os << vi << ',' << pt.time_s << ',' << pt.kp << ',' << pt.channel << ','
           << to_string(pt.lane) << ',' << (pt.in_range ? 1 : 0) << '\n';
  }
  {
    std::ofstream os(dir + "/lane_changes.csv");
    if (!os) fail(dir + "/lane_changes.csv: cannot open for writing");
    os.precision(9);
    os << "vehicle_id,time_s,kp,from_lane,to_lane\n";
    for (const auto& e : gt.lane_changes)
      os << e.vehicle_id << ',' << e.time_s << ',' << e.kp << ',' << to_string(e.from_lane)
         << ',' << to_string(e.to_lane) << '\n';
  }
  {
    std::ofstream os(dir + "/checkpoints.csv");
    if (!os) fail(dir + "/checkpoints.csv: cannot open for writing");
    os.precision(9);
    os << "vehicle_id,checkpoint_kp,arrival_time_s,vehicle_class\n";
    for (const auto& c : gt.checkpoints)
      os << c.vehicle_id << ',' << c.checkpoint_kp << ',' << c.arrival_time_s << ','
         << to_string(c.vehicle_class) << '\n';
  }
}

namespace {

std::vector<std::vector<std::string>> read_csv_rows(const std::string& path,
                                                    std::size_t min_cols) {
  std::ifstream is(path);
  if (!is) fail(path + ": cannot open");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (lineno == 1 && !cells.empty() && !cells[0].empty() &&
        !std::isdigit(static_cast<unsigned char>(cells[0][0])) && cells[0][0] != '-')
      continue;  // header
    if (cells.size() < min_cols)
      fail(path + ":" + std::to_string(lineno) + ": expected at least " +
           std::to_string(min_cols) + " columns");
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

std::vector<TrueLaneChange> read_lane_changes_csv(const std::string& path) {
  std::vector<TrueLaneChange> out;
  for (const auto& row : read_csv_rows(path, 5)) {
    TrueLaneChange e;
    e.vehicle_id = std::stoi(row[0]);
    e.time_s = std::stod(row[1]);
    e.kp = std::stod(row[2]);
    e.from_lane = lane_from_string(row[3]);
    e.to_lane = lane_from_string(row[4]);
    out.push_back(e);
  }
  return out;
}

std::vector<CheckpointArrival> read_checkpoints_csv(const std::string& path) {
  std::vector<CheckpointArrival> out;
  for (const auto& row : read_csv_rows(path, 3)) {
    CheckpointArrival c;
    c.vehicle_id = std::stoi(row[0]);
    c.checkpoint_kp = std::stod(row[1]);
    c.arrival_time_s = std::stod(row[2]);
    c.vehicle_class = row.size() > 3 ? vehicle_class_from_string(row[3]) : VehicleClass::Small;
    out.push_back(c);
  }
  return out;
}

}  // namespace dfos
