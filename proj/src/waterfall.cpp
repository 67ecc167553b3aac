#include "dfos/waterfall.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dfos {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

}  // namespace

void SensorGeometry::validate() const {
  if (!(spatial_resolution_m > 0.0))
    throw std::invalid_argument("geometry: spatial_resolution_m must be > 0");
  if (!(temporal_resolution_s > 0.0))
    throw std::invalid_argument("geometry: temporal_resolution_s must be > 0");
  if (channel_count < 1)
    throw std::invalid_argument("geometry: channel_count must be >= 1");
  if (kp_direction != 1 && kp_direction != -1)
    throw std::invalid_argument("geometry: kp_direction must be +1 or -1");
  if (!std::isfinite(origin_kp))
    throw std::invalid_argument("geometry: origin_kp must be finite");
}

double SensorGeometry::channel_to_kp(std::size_t channel) const {
  if (channel >= channel_count)
    throw std::out_of_range("channel_to_kp: channel " + std::to_string(channel) +
                            " out of range [0, " + std::to_string(channel_count) + ")");
  return kp_at_channel_unchecked(static_cast<double>(channel));
}

double SensorGeometry::kp_at_channel_unchecked(double channel) const {
  return origin_kp + kp_direction * channel * spatial_resolution_m / 1000.0;
}

double SensorGeometry::channel_coordinate(double kp) const {
  return kp_direction * (kp - origin_kp) * 1000.0 / spatial_resolution_m;
}

std::size_t SensorGeometry::kp_to_channel(double kp) const {
  const double c = channel_coordinate(kp);
  const long long r = std::llround(c);
  if (r < 0 || r >= static_cast<long long>(channel_count))
    throw std::out_of_range("kp_to_channel: kp " + std::to_string(kp) +
                            " maps to channel " + std::to_string(r) +
                            ", outside [0, " + std::to_string(channel_count) + ")");
  return static_cast<std::size_t>(r);
}

double SensorGeometry::kp_min() const {
  const double a = origin_kp;
  const double b = kp_at_channel_unchecked(static_cast<double>(channel_count - 1));
  return a < b ? a : b;
}

double SensorGeometry::kp_max() const {
  const double a = origin_kp;
  const double b = kp_at_channel_unchecked(static_cast<double>(channel_count - 1));
  return a > b ? a : b;
}

bool SensorGeometry::kp_in_range(double kp) const {
  return kp >= kp_min() && kp <= kp_max();
}

Waterfall::Waterfall(SensorGeometry geometry, double start_time_s, std::size_t rows)
    : geometry_(geometry), start_time_s_(start_time_s), rows_(rows) {
  geometry_.validate();
  samples_.assign(rows_ * geometry_.channel_count, 0.0f);
}

void Waterfall::validate() const {
  const std::size_t n = geometry_.channel_count;
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const float v = samples_[r * n + c];
      if (!std::isfinite(v) || v < 0.0f)
        fail("waterfall: invalid sample at row " + std::to_string(r) + ", col " +
             std::to_string(c) + " (" + std::to_string(v) + ")");
    }
  }
}

Waterfall slice(const Waterfall& w, const WindowSelector& sel) {
  const double dt = w.geometry().temporal_resolution_s;
  if (!(sel.t0_s < sel.t1_s))
    throw std::out_of_range("slice: t0 must be < t1");
  if (!(sel.c0 < sel.c1) || sel.c1 > w.cols())
    throw std::out_of_range("slice: channel range [" + std::to_string(sel.c0) + ", " +
                            std::to_string(sel.c1) + ") outside [0, " +
                            std::to_string(w.cols()) + ")");
  const long long r0 = std::llround(sel.t0_s / dt);
  const long long r1 = std::llround(sel.t1_s / dt);
  if (r0 < 0 || r1 <= r0 || r1 > static_cast<long long>(w.rows()))
    throw std::out_of_range("slice: time range [" + std::to_string(sel.t0_s) + ", " +
                            std::to_string(sel.t1_s) + ") outside the waterfall");

  SensorGeometry g = w.geometry();
  g.origin_kp = g.kp_at_channel_unchecked(static_cast<double>(sel.c0));
  g.channel_count = sel.c1 - sel.c0;

  Waterfall out(g, w.start_time_s() + static_cast<double>(r0) * dt,
                static_cast<std::size_t>(r1 - r0));
  for (long long r = r0; r < r1; ++r)
    for (std::size_t c = sel.c0; c < sel.c1; ++c)
      out.at(static_cast<std::size_t>(r - r0), c - sel.c0) =
          w.at(static_cast<std::size_t>(r), c);
  return out;
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'D', 'F', 'W', 'F'};
constexpr std::uint16_t kFormatVersion = 1;

template <typename T>
void write_raw(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is, const std::string& path, const char* field) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) fail(path + ": truncated header while reading " + field);
  return v;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void save_binary(const Waterfall& w, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(path + ": cannot open for writing");
  os.write(kMagic, 4);
  write_raw(os, kFormatVersion);
  write_raw(os, static_cast<std::uint64_t>(w.rows()));
  write_raw(os, static_cast<std::uint64_t>(w.cols()));
  write_raw(os, w.geometry().temporal_resolution_s);
  write_raw(os, w.geometry().spatial_resolution_m);
  write_raw(os, w.geometry().origin_kp);
  write_raw(os, static_cast<std::int8_t>(w.geometry().kp_direction));
  write_raw(os, w.start_time_s());
  os.write(reinterpret_cast<const char*>(w.samples().data()),
           static_cast<std::streamsize>(w.samples().size() * sizeof(float)));
  if (!os) fail(path + ": write failed");
}

Waterfall load_binary(std::ifstream& is, const std::string& path) {
  char magic[4];
  is.read(magic, 4);
  const std::uint16_t version = read_raw<std::uint16_t>(is, path, "version");
  if (version != kFormatVersion)
    fail(path + ": unsupported format version " + std::to_string(version));
  const auto rows = read_raw<std::uint64_t>(is, path, "rows");
  const auto cols = read_raw<std::uint64_t>(is, path, "cols");
  SensorGeometry g;
  g.temporal_resolution_s = read_raw<double>(is, path, "temporal_resolution");
  g.spatial_resolution_m = read_raw<double>(is, path, "spatial_resolution");
  g.origin_kp = read_raw<double>(is, path, "origin_kp");
  g.kp_direction = read_raw<std::int8_t>(is, path, "kp_direction");
  const double start_time = read_raw<double>(is, path, "start_time");
  if (cols == 0) fail(path + ": header declares zero channels");
  g.channel_count = cols;
  try {
    g.validate();
  } catch (const std::exception& e) {
    fail(path + ": malformed header: " + e.what());
  }

  Waterfall w(g, start_time, rows);
  is.read(reinterpret_cast<char*>(w.samples().data()),
          static_cast<std::streamsize>(rows * cols * sizeof(float)));
  if (static_cast<std::uint64_t>(is.gcount()) != rows * cols * sizeof(float))
    fail(path + ": sample payload shorter than the declared " + std::to_string(rows) +
         "x" + std::to_string(cols) + " grid");
  for (std::size_t r = 0; r < w.rows(); ++r)
    for (std::size_t c = 0; c < w.cols(); ++c) {
      const float v = w.at(r, c);
      if (!std::isfinite(v) || v < 0.0f)
        fail(path + ": invalid sample at row " + std::to_string(r) + ", col " +
             std::to_string(c));
    }
  return w;
}

void save_csv(const Waterfall& w, const std::string& path) {
  std::ofstream os(path);
  if (!os) fail(path + ": cannot open for writing");
  os.precision(9);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    for (std::size_t c = 0; c < w.cols(); ++c) {
      if (c) os << ',';
      os << w.at(r, c);
    }
    os << '\n';
  }
  if (!os) fail(path + ": write failed");

  std::ofstream meta(path + ".meta");
  if (!meta) fail(path + ".meta: cannot open for writing");
  meta.precision(12);
  meta << "temporal_resolution_s=" << w.geometry().temporal_resolution_s << '\n'
       << "spatial_resolution_m=" << w.geometry().spatial_resolution_m << '\n'
       << "origin_kp=" << w.geometry().origin_kp << '\n'
       << "kp_direction=" << w.geometry().kp_direction << '\n'
       << "start_time_s=" << w.start_time_s() << '\n';
}

Waterfall load_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(path + ": cannot open");

  std::vector<std::vector<float>> grid;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<float> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      std::size_t pos = 0;
      float v = 0.0f;
      try {
        v = std::stof(cell, &pos);
      } catch (const std::exception&) {
        fail(path + ":" + std::to_string(lineno) + ": cannot parse sample '" + cell + "'");
      }
      if (!std::isfinite(v) || v < 0.0f)
        fail(path + ":" + std::to_string(lineno) + ": invalid sample '" + cell + "'");
      row.push_back(v);
    }
    if (!grid.empty() && row.size() != grid.front().size())
      fail(path + ":" + std::to_string(lineno) + ": row has " + std::to_string(row.size()) +
           " values, expected " + std::to_string(grid.front().size()));
    grid.push_back(std::move(row));
  }
  if (grid.empty()) fail(path + ": no sample rows");

  SensorGeometry g;
  g.channel_count = grid.front().size();
  double start_time = 0.0;

  const std::string meta_path = path + ".meta";
  std::ifstream meta(meta_path);
  if (!meta) fail(meta_path + ": sidecar metadata file missing");
  lineno = 0;
  while (std::getline(meta, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(meta_path + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    try {
      if (key == "temporal_resolution_s") g.temporal_resolution_s = std::stod(value);
      else if (key == "spatial_resolution_m") g.spatial_resolution_m = std::stod(value);
      else if (key == "origin_kp") g.origin_kp = std::stod(value);
      else if (key == "kp_direction") g.kp_direction = std::stoi(value);
      else if (key == "start_time_s") start_time = std::stod(value);
      else fail(meta_path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      fail(meta_path + ":" + std::to_string(lineno) + ": cannot parse value '" + value + "'");
    }
  }
  try {
    g.validate();
  } catch (const std::exception& e) {
    fail(meta_path + ": " + e.what());
  }

  Waterfall w(g, start_time, grid.size());
  for (std::size_t r = 0; r < grid.size(); ++r)
    for (std::size_t c = 0; c < g.channel_count; ++c) w.at(r, c) = grid[r][c];
  return w;
}

}  // namespace

Waterfall load_waterfall(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(path + ": cannot open");
  char magic[4] = {0, 0, 0, 0};
  is.read(magic, 4);
  if (is && std::memcmp(magic, kMagic, 4) == 0) {
    is.seekg(0);
    return load_binary(is, path);
  }
  return load_csv(path);
}

void save_waterfall(const Waterfall& w, const std::string& path) {
  if (ends_with(path, ".csv"))
    save_csv(w, path);
  else
    save_binary(w, path);
}

}  // namespace dfos
