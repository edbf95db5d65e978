#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "mapfusion/geom.hpp"
#include "mapfusion/sim.hpp"

namespace mapfusion::io {

struct FileFormatError : std::runtime_error {
  FileFormatError(const std::string& path, std::size_t line, const std::string& msg)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + msg),
        line_number(line) {}
  std::size_t line_number;
};

/// Trajectory files: one pose per line, `timestamp tx ty tz qx qy qz qw`,
/// space separated, `#` comments. Strict: wrong field counts or trailing
/// garbage fail with the offending line number.
std::vector<geom::TimedPose> read_trajectory(const std::string& path);
void write_trajectory(const std::string& path,
                      const std::vector<geom::TimedPose>& trajectory);

/// GPS CSV with a header of either `timestamp,lat,lon,alt` (geodetic) or
/// `timestamp,east,north,up` (local metric); an optional trailing `std_m`
/// column carries a per-fix horizontal sigma.
struct GpsRow {
  double t = 0.0;
  bool geodetic = false;
  geom::GeoPoint geo;
  Eigen::Vector3d enu{0, 0, 0};
  std::optional<double> std_m;
};

std::vector<GpsRow> read_gps_csv(const std::string& path);
void write_gps_csv_enu(const std::string& path, const std::vector<sim::GpsFix>& fixes);

/// Scenario files: flat `key = value` lines, `#` comments, `gps_dropout`
/// repeatable. Unknown keys are rejected.
sim::Scenario read_scenario(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace mapfusion::io
