#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "mapfusion/config.hpp"

namespace mapfusion::config {

namespace {

double to_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double d = std::strtod(value.c_str(), &end);
  if (value.empty() || end != value.c_str() + value.size())
    throw ConfigError("config key '" + key + "': expected a number, got '" + value + "'");
  return d;
}

double to_positive(const std::string& key, const std::string& value) {
  const double d = to_double(key, value);
  if (!(d > 0.0)) throw ConfigError("config key '" + key + "' must be positive");
  return d;
}

double to_non_negative(const std::string& key, const std::string& value) {
  const double d = to_double(key, value);
  if (d < 0.0) throw ConfigError("config key '" + key + "' must be non-negative");
  return d;
}

int to_positive_int(const std::string& key, const std::string& value) {
  const double d = to_positive(key, value);
  if (d != std::floor(d)) throw ConfigError("config key '" + key + "' must be an integer");
  return static_cast<int>(d);
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key '" + key + "' must be true/false");
}

std::string strip(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

void ToolkitConfig::set(const std::string& key, const std::string& value) {
  if (key == "mapgraph.step_m") mapgraph.step_m = to_positive(key, value);
  else if (key == "mapgraph.window") {
    const int w = to_positive_int(key, value);
    if (w % 2 == 0) throw ConfigError("mapgraph.window must be odd");
    mapgraph.smoothing_window = static_cast<std::uint32_t>(w);
  } else if (key == "mapgraph.grid_cell_m") mapgraph.grid_cell_m = to_positive(key, value);

  else if (key == "init.md_m") init.md_m = to_positive(key, value);
  else if (key == "init.ms_kmh") init.ms_kmh = to_positive(key, value);
  else if (key == "init.f_gps_hz") init.f_gps_hz = to_positive(key, value);
  else if (key == "init.f_vo_hz") init.f_vo_hz = to_positive(key, value);
  else if (key == "init.samples") init.samples_required = to_positive_int(key, value);
  else if (key == "init.scale_mode") {
    if (value == "linear-ratio") init.scale_mode = initializer::ScaleMode::linear_ratio;
    else if (value == "literal-squared")
      init.scale_mode = initializer::ScaleMode::literal_squared;
    else
      throw ConfigError("init.scale_mode must be linear-ratio or literal-squared");
  }

  else if (key == "matcher.radius_m") fusion.match_radius_m = to_positive(key, value);
  else if (key == "matcher.widen_radius_m")
    fusion.widen_radius_m = to_positive(key, value);

  else if (key == "fusion.odom_pos_std_pre_m")
    fusion.odom_pos_std_pre_m = to_positive(key, value);
  else if (key == "fusion.odom_pos_std_post_m")
    fusion.odom_pos_std_post_m = to_positive(key, value);
  else if (key == "fusion.odom_pos_frac_post")
    fusion.odom_pos_frac_post = to_non_negative(key, value);
  else if (key == "fusion.odom_rot_std_deg")
    fusion.odom_rot_std_deg = to_positive(key, value);
  else if (key == "fusion.gps_pos_std_m") fusion.gps_pos_std_m = to_positive(key, value);
  else if (key == "fusion.gps_alt_std_m") fusion.gps_alt_std_m = to_positive(key, value);
  else if (key == "fusion.map_priors") fusion.map_priors_enabled = to_bool(key, value);
  else if (key == "fusion.yaw_prior_std_deg")
    fusion.yaw_prior_std_deg = to_positive(key, value);
  else if (key == "fusion.eigen_floor_m2") fusion.eigen_floor_m2 = to_positive(key, value);
  else if (key == "fusion.stationary_eps_m")
    fusion.stationary_eps_m = to_positive(key, value);
  else if (key == "fusion.cap") fusion.cap_enabled = to_bool(key, value);
  else if (key == "fusion.default_road_width_m")
    fusion.default_road_width_m = to_positive(key, value);
  else if (key == "fusion.init_pos_std_m") fusion.init_pos_std_m = to_positive(key, value);
  else if (key == "fusion.init_alt_std_m") fusion.init_alt_std_m = to_positive(key, value);
  else if (key == "fusion.init_yaw_std_deg")
    fusion.init_yaw_std_deg = to_positive(key, value);
  else if (key == "fusion.init_tilt_std_deg")
    fusion.init_tilt_std_deg = to_positive(key, value);
  else if (key == "fusion.window")
    fusion.window = static_cast<std::size_t>(to_positive_int(key, value));

  else
    throw ConfigError("unknown config key '" + key + "'");
}

void ToolkitConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = strip(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(line_number) +
                        ": expected 'key = value'");
    try {
      set(strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(line_number) + ": " + e.what());
    }
  }
  validate();
}

void ToolkitConfig::validate() const {
  if (!init.valid()) throw ConfigError("invalid init.* configuration");
  if (mapgraph.step_m <= 0.0) throw ConfigError("mapgraph.step_m must be positive");
  if (mapgraph.smoothing_window % 2 == 0 || mapgraph.smoothing_window < 1)
    throw ConfigError("mapgraph.window must be odd and >= 1");
  if (fusion.widen_radius_m < fusion.match_radius_m)
    throw ConfigError("matcher.widen_radius_m must be >= matcher.radius_m");
  if (fusion.window < 2) throw ConfigError("fusion.window must be >= 2");
}

std::string ToolkitConfig::dump() const {
  std::ostringstream out;
  out << "mapgraph.step_m = " << fmt(mapgraph.step_m) << "\n";
  out << "mapgraph.window = " << mapgraph.smoothing_window << "\n";
  out << "mapgraph.grid_cell_m = " << fmt(mapgraph.grid_cell_m) << "\n";
  out << "init.md_m = " << fmt(init.md_m) << "\n";
  out << "init.ms_kmh = " << fmt(init.ms_kmh) << "\n";
  out << "init.f_gps_hz = " << fmt(init.f_gps_hz) << "\n";
  out << "init.f_vo_hz = " << fmt(init.f_vo_hz) << "\n";
  out << "init.samples = " << init.samples_required << "\n";
  out << "init.scale_mode = "
      << (init.scale_mode == initializer::ScaleMode::linear_ratio ? "linear-ratio"
                                                                  : "literal-squared")
      << "\n";
  out << "matcher.radius_m = " << fmt(fusion.match_radius_m) << "\n";
  out << "matcher.widen_radius_m = " << fmt(fusion.widen_radius_m) << "\n";
  out << "fusion.odom_pos_std_pre_m = " << fmt(fusion.odom_pos_std_pre_m) << "\n";
  out << "fusion.odom_pos_std_post_m = " << fmt(fusion.odom_pos_std_post_m) << "\n";
  out << "fusion.odom_pos_frac_post = " << fmt(fusion.odom_pos_frac_post) << "\n";
  out << "fusion.odom_rot_std_deg = " << fmt(fusion.odom_rot_std_deg) << "\n";
  out << "fusion.gps_pos_std_m = " << fmt(fusion.gps_pos_std_m) << "\n";
  out << "fusion.gps_alt_std_m = " << fmt(fusion.gps_alt_std_m) << "\n";
  out << "fusion.map_priors = " << (fusion.map_priors_enabled ? "true" : "false") << "\n";
  out << "fusion.yaw_prior_std_deg = " << fmt(fusion.yaw_prior_std_deg) << "\n";
  out << "fusion.eigen_floor_m2 = " << fmt(fusion.eigen_floor_m2) << "\n";
  out << "fusion.stationary_eps_m = " << fmt(fusion.stationary_eps_m) << "\n";
  out << "fusion.cap = " << (fusion.cap_enabled ? "true" : "false") << "\n";
  out << "fusion.default_road_width_m = " << fmt(fusion.default_road_width_m) << "\n";
  out << "fusion.init_pos_std_m = " << fmt(fusion.init_pos_std_m) << "\n";
  out << "fusion.init_alt_std_m = " << fmt(fusion.init_alt_std_m) << "\n";
  out << "fusion.init_yaw_std_deg = " << fmt(fusion.init_yaw_std_deg) << "\n";
  out << "fusion.init_tilt_std_deg = " << fmt(fusion.init_tilt_std_deg) << "\n";
  out << "fusion.window = " << fusion.window << "\n";
  return std::move(out).str();
}

}  // namespace mapfusion::config
