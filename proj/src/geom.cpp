#include "mapfusion/geom.hpp"

#include <algorithm>
#include <cmath>

namespace mapfusion::geom {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kDegPerRad = 180.0 / kPi;

// WGS84
constexpr double kSemiMajorM = 6378137.0;
constexpr double kFlattening = 1.0 / 298.257223563;
constexpr double kEcc2 = kFlattening * (2.0 - kFlattening);
}  // namespace

Eigen::Quaterniond quat_from_ypr(double yaw, double pitch, double roll) {
  return Eigen::Quaterniond(
      Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
      Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) *
      Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()));
}

Pose Pose::from_xyz_ypr(double x, double y, double z, double yaw, double pitch,
                        double roll) {
  return Pose(Eigen::Vector3d(x, y, z), quat_from_ypr(yaw, pitch, roll));
}

double Pose::roll() const {
  const Eigen::Matrix3d r = orientation.toRotationMatrix();
  return std::atan2(r(2, 1), r(2, 2));
}

double Pose::pitch() const {
  const Eigen::Matrix3d r = orientation.toRotationMatrix();
  return std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
}

double Pose::yaw() const {
  const Eigen::Matrix3d r = orientation.toRotationMatrix();
  return std::atan2(r(1, 0), r(0, 0));
}

Pose Pose::inverse() const {
  const Eigen::Quaterniond qi = orientation.conjugate();
  return Pose(qi * -position, qi);
}

Pose compose(const Pose& a, const Pose& b) {
  return Pose(a.position + a.orientation * b.position,
              (a.orientation * b.orientation).normalized());
}

Pose relative(const Pose& from, const Pose& to) {
  return compose(from.inverse(), to);
}

double quat_angular_distance_deg(const Eigen::Quaterniond& q1,
                                 const Eigen::Quaterniond& q2) {
  const double d = q1.dot(q2);
  const double c = std::clamp(2.0 * d * d - 1.0, -1.0, 1.0);
  return std::acos(c) * kDegPerRad;
}

std::optional<double> heading_between(const Eigen::Vector2d& prev,
                                      const Eigen::Vector2d& next) {
  const Eigen::Vector2d d = next - prev;
  if (d.norm() <= 1e-9) return std::nullopt;
  return std::atan2(d.y(), d.x());
}

double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a > kPi) a -= 2.0 * kPi;
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

LocalFrame::LocalFrame(const GeoPoint& origin) : origin_(origin) {
  const double lat = origin.latitude * kPi / 180.0;
  const double s2 = std::sin(lat) * std::sin(lat);
  const double w = std::sqrt(1.0 - kEcc2 * s2);
  const double meridian_radius = kSemiMajorM * (1.0 - kEcc2) / (w * w * w);
  const double normal_radius = kSemiMajorM / w;
  m_per_deg_lat_ = meridian_radius * kPi / 180.0;
  m_per_deg_lon_ = normal_radius * std::cos(lat) * kPi / 180.0;
}

Eigen::Vector3d LocalFrame::to_enu(const GeoPoint& p) const {
  double dlon = p.longitude - origin_.longitude;
  if (dlon > 180.0) dlon -= 360.0;
  if (dlon < -180.0) dlon += 360.0;
  return {dlon * m_per_deg_lon_, (p.latitude - origin_.latitude) * m_per_deg_lat_,
          p.altitude - origin_.altitude};
}

GeoPoint LocalFrame::to_geo(const Eigen::Vector3d& enu) const {
  GeoPoint p;
  p.longitude = origin_.longitude + enu.x() / m_per_deg_lon_;
  if (p.longitude > 180.0) p.longitude -= 360.0;
  if (p.longitude <= -180.0) p.longitude += 360.0;
  p.latitude = origin_.latitude + enu.y() / m_per_deg_lat_;
  p.altitude = origin_.altitude + enu.z();
  return p;
}

bool LocalFrame::in_validity_range(const GeoPoint& p) const {
  const Eigen::Vector3d enu = to_enu(p);
  return enu.head<2>().norm() <= kValidityRadiusM;
}

}  // namespace mapfusion::geom
