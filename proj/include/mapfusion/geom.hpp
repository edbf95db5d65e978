#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <optional>

namespace mapfusion::geom {

/// SE(3) rigid transform. Global coordinates are East/North/Up; when used as
/// a relative transform the axes read forward/left/up.
struct Pose {
  Eigen::Vector3d position{0.0, 0.0, 0.0};
  Eigen::Quaterniond orientation{1.0, 0.0, 0.0, 0.0};

  Pose() = default;
  Pose(const Eigen::Vector3d& p, const Eigen::Quaterniond& q)
      : position(p), orientation(q.normalized()) {}

  static Pose identity() { return Pose{}; }

  /// Euler convention: yaw about Up, pitch about Left, roll about Forward,
  /// applied yaw * pitch * roll.
  static Pose from_xyz_ypr(double x, double y, double z, double yaw,
                           double pitch = 0.0, double roll = 0.0);
  static Pose from_xy_yaw(double x, double y, double yaw) {
    return from_xyz_ypr(x, y, 0.0, yaw);
  }

  double x() const { return position.x(); }
  double y() const { return position.y(); }
  double z() const { return position.z(); }

  double roll() const;
  double pitch() const;
  double yaw() const;

  Pose inverse() const;
};

/// Quaternion for the yaw * pitch * roll Euler convention.
Eigen::Quaterniond quat_from_ypr(double yaw, double pitch, double roll);

/// SE(3) product a * b (applies b in a's frame).
Pose compose(const Pose& a, const Pose& b);

/// Transform of `to` expressed in `from`'s frame: from^-1 * to.
/// compose(from, relative(from, to)) == to.
Pose relative(const Pose& from, const Pose& to);

/// Angular distance arccos(2 <q1,q2>^2 - 1) in degrees, in [0, 180].
/// Symmetric and invariant to sign flips of either argument.
double quat_angular_distance_deg(const Eigen::Quaterniond& q1,
                                 const Eigen::Quaterniond& q2);

/// Heading of the segment prev -> next, radians in (-pi, pi] measured from
/// East counter-clockwise. Empty when the points are closer than 1e-9 m
/// (caller skips or reuses the previous heading).
std::optional<double> heading_between(const Eigen::Vector2d& prev,
                                      const Eigen::Vector2d& next);

/// Wrap an angle to (-pi, pi].
double wrap_angle(double a);

/// WGS84 geodetic coordinate.
struct GeoPoint {
  double latitude = 0.0;   // degrees, [-90, 90]
  double longitude = 0.0;  // degrees, [-180, 180]
  double altitude = 0.0;   // meters

  bool is_valid() const {
    return latitude >= -90.0 && latitude <= 90.0 && longitude >= -180.0 &&
           longitude <= 180.0;
  }
};

/// Local tangent-plane projection anchored at a geodetic origin, East/North/Up
/// axes. Valid within ~50 km of the origin.
class LocalFrame {
 public:
  LocalFrame() : LocalFrame(GeoPoint{}) {}
  explicit LocalFrame(const GeoPoint& origin);

  const GeoPoint& origin() const { return origin_; }

  Eigen::Vector3d to_enu(const GeoPoint& p) const;
  GeoPoint to_geo(const Eigen::Vector3d& enu) const;

  /// False beyond the tangent-plane validity radius (the projection is still
  /// computed; callers treat this as a warning).
  bool in_validity_range(const GeoPoint& p) const;

  static constexpr double kValidityRadiusM = 50e3;

 private:
  GeoPoint origin_;
  double m_per_deg_lat_ = 0.0;
  double m_per_deg_lon_ = 0.0;
};

/// Trajectory sample.
struct TimedPose {
  double t = 0.0;  // seconds
  Pose pose;
};

}  // namespace mapfusion::geom
