#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mapfusion/io.hpp"

namespace mapfusion::io {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> tokens;
  std::istringstream stream(line);
  std::string token;
  while (stream >> token) tokens.push_back(token);
  return tokens;
}

std::vector<std::string> split_char(const std::string& line, char sep) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream stream(line);
  while (std::getline(stream, field, sep)) fields.push_back(field);
  if (!line.empty() && line.back() == sep) fields.emplace_back();
  return fields;
}

std::string strip(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& token, const std::string& path,
                    std::size_t line) {
  const std::string t = strip(token);
  char* end = nullptr;
  const double value = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size())
    throw FileFormatError(path, line, "expected a number, got '" + token + "'");
  return value;
}

// Strips comments; true when the remainder is non-blank.
bool strip_comment(std::string& line) {
  const auto hash = line.find('#');
  if (hash != std::string::npos) line.erase(hash);
  line = strip(line);
  return !line.empty();
}

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return std::move(buffer).str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw std::runtime_error("write failure on '" + path + "'");
}

std::vector<geom::TimedPose> read_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<geom::TimedPose> out;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!strip_comment(line)) continue;
    const auto tokens = split_ws(line);
    if (tokens.size() != 8)
      throw FileFormatError(path, line_number,
                            "expected 8 fields (timestamp tx ty tz qx qy qz qw), got " +
                                std::to_string(tokens.size()));
    double v[8];
    for (int i = 0; i < 8; ++i) v[i] = parse_double(tokens[i], path, line_number);
    Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);  // w, x, y, z
    if (q.norm() < 1e-9)
      throw FileFormatError(path, line_number, "zero quaternion");
    geom::TimedPose tp;
    tp.t = v[0];
    tp.pose = geom::Pose(Eigen::Vector3d(v[1], v[2], v[3]), q);
    if (!out.empty() && tp.t <= out.back().t)
      throw FileFormatError(path, line_number, "timestamps must be strictly increasing");
    out.push_back(tp);
  }
  if (out.empty()) throw FileFormatError(path, line_number, "no poses in file");
  return out;
}

void write_trajectory(const std::string& path,
                      const std::vector<geom::TimedPose>& trajectory) {
  std::string content;
  content.reserve(trajectory.size() * 96 + 64);
  content += "# timestamp tx ty tz qx qy qz qw\n";
  char buf[256];
  for (const auto& tp : trajectory) {
    const auto& p = tp.pose.position;
    const auto& q = tp.pose.orientation;
    std::snprintf(buf, sizeof(buf), "%.6f %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n",
                  tp.t, p.x(), p.y(), p.z(), q.x(), q.y(), q.z(), q.w());
    content += buf;
  }
  write_file(path, content);
}

std::vector<GpsRow> read_gps_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::string line;
  std::size_t line_number = 0;

  // Header decides the coordinate kind.
  bool geodetic = false;
  bool has_std = false;
  while (std::getline(in, line)) {
    ++line_number;
    if (!strip_comment(line)) continue;
    auto fields = split_char(line, ',');
    for (auto& f : fields) f = strip(f);
    if (fields.size() < 4)
      throw FileFormatError(path, line_number, "header needs at least 4 columns");
    if (fields[0] != "timestamp")
      throw FileFormatError(path, line_number, "first column must be 'timestamp'");
    if (fields[1] == "lat" && fields[2] == "lon" && fields[3] == "alt")
      geodetic = true;
    else if (fields[1] == "east" && fields[2] == "north" && fields[3] == "up")
      geodetic = false;
    else
      throw FileFormatError(path, line_number,
                            "header must be timestamp,lat,lon,alt or "
                            "timestamp,east,north,up");
    if (fields.size() == 5 && fields[4] == "std_m") has_std = true;
    else if (fields.size() > 4)
      throw FileFormatError(path, line_number, "unexpected extra header columns");
    break;
  }

  std::vector<GpsRow> rows;
  while (std::getline(in, line)) {
    ++line_number;
    if (!strip_comment(line)) continue;
    const auto fields = split_char(line, ',');
    const std::size_t expected = has_std ? 5 : 4;
    if (fields.size() != expected)
      throw FileFormatError(path, line_number,
                            "expected " + std::to_string(expected) + " fields, got " +
                                std::to_string(fields.size()));
    GpsRow row;
    row.t = parse_double(fields[0], path, line_number);
    row.geodetic = geodetic;
    if (geodetic) {
      row.geo.latitude = parse_double(fields[1], path, line_number);
      row.geo.longitude = parse_double(fields[2], path, line_number);
      row.geo.altitude = parse_double(fields[3], path, line_number);
      if (!row.geo.is_valid())
        throw FileFormatError(path, line_number, "lat/lon out of range");
    } else {
      row.enu = Eigen::Vector3d(parse_double(fields[1], path, line_number),
                                parse_double(fields[2], path, line_number),
                                parse_double(fields[3], path, line_number));
    }
    if (has_std) row.std_m = parse_double(fields[4], path, line_number);
    if (!rows.empty() && row.t <= rows.back().t)
      throw FileFormatError(path, line_number, "timestamps must be strictly increasing");
    rows.push_back(row);
  }
  if (rows.empty()) throw FileFormatError(path, line_number, "no GPS rows in file");
  return rows;
}

void write_gps_csv_enu(const std::string& path, const std::vector<sim::GpsFix>& fixes) {
  std::string content = "timestamp,east,north,up\n";
  char buf[160];
  for (const auto& fix : fixes) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.9f,%.9f,%.9f\n", fix.t, fix.enu.x(),
                  fix.enu.y(), fix.enu.z());
    content += buf;
  }
  write_file(path, content);
}

sim::Scenario read_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  sim::Scenario scenario;
  scenario.gps.period_s = 5.0;
  std::string line;
  std::size_t line_number = 0;
  bool have_route = false;

  while (std::getline(in, line)) {
    ++line_number;
    if (!strip_comment(line)) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw FileFormatError(path, line_number, "expected 'key = value'");
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    if (value.empty()) throw FileFormatError(path, line_number, "missing value");

    if (key == "seed") {
      scenario.seed = static_cast<std::uint64_t>(
          parse_double(value, path, line_number));
    } else if (key == "speed_mps") {
      scenario.speed_mps = parse_double(value, path, line_number);
    } else if (key == "vo_rate_hz") {
      scenario.vo_rate_hz = parse_double(value, path, line_number);
    } else if (key == "route") {
      for (const auto& token : split_ws(value)) {
        const double id = parse_double(token, path, line_number);
        if (id < 0 || id != std::floor(id))
          throw FileFormatError(path, line_number, "route ids must be non-negative integers");
        scenario.route.push_back(static_cast<std::uint32_t>(id));
      }
      have_route = true;
    } else if (key == "lateral_drift_m_per_m") {
      scenario.drift.lateral_drift_m_per_m = parse_double(value, path, line_number);
    } else if (key == "yaw_drift_deg_per_m") {
      scenario.drift.yaw_drift_deg_per_m = parse_double(value, path, line_number);
    } else if (key == "scale_error") {
      scenario.drift.scale_error = parse_double(value, path, line_number);
    } else if (key == "step_noise_pos_m") {
      scenario.drift.step_noise_pos_m = parse_double(value, path, line_number);
    } else if (key == "step_noise_rot_deg") {
      scenario.drift.step_noise_rot_deg = parse_double(value, path, line_number);
    } else if (key == "gps_enabled") {
      if (value == "true" || value == "1") scenario.gps.enabled = true;
      else if (value == "false" || value == "0") scenario.gps.enabled = false;
      else throw FileFormatError(path, line_number, "gps_enabled must be true/false");
    } else if (key == "gps_period_s") {
      scenario.gps.period_s = parse_double(value, path, line_number);
    } else if (key == "gps_noise_std_m") {
      scenario.gps.noise_std_m = parse_double(value, path, line_number);
    } else if (key == "gps_dropout") {
      const auto tokens = split_ws(value);
      if (tokens.size() != 2)
        throw FileFormatError(path, line_number, "gps_dropout needs 'start end'");
      scenario.gps.dropouts.emplace_back(parse_double(tokens[0], path, line_number),
                                         parse_double(tokens[1], path, line_number));
    } else {
      throw FileFormatError(path, line_number, "unknown scenario key '" + key + "'");
    }
  }
  if (!have_route) throw FileFormatError(path, line_number, "scenario needs a route");
  return scenario;
}

}  // namespace mapfusion::io
