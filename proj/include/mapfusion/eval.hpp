#pragma once

#include <stdexcept>
#include <vector>

#include "mapfusion/geom.hpp"

namespace mapfusion::eval {

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PosePair {
  geom::TimedPose est;
  geom::TimedPose gt;
};

/// Nearest-timestamp pairing within max_dt; unmatched poses dropped. Throws
/// when no pair survives.
std::vector<PosePair> associate(const std::vector<geom::TimedPose>& est,
                                const std::vector<geom::TimedPose>& gt,
                                double max_dt);

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }
  geom::Pose apply(const geom::Pose& p) const {
    return geom::Pose(apply(p.position),
                      Eigen::Quaterniond(rotation) * p.orientation);
  }
};

/// Closed-form least-squares rigid alignment (rotation + translation, no
/// scale) mapping est positions onto gt. Collinear inputs resolve yaw by
/// aligning the dominant direction vectors. Throws below 2 pairs.
RigidTransform align_6dof(const std::vector<PosePair>& pairs);

enum class DelocMetric { max_error, rmse };

struct AteReport {
  double rmse = 0.0;
  double max_error = 0.0;
  std::vector<double> errors;  // per pair, East/North plane
  bool delocalized = false;

  static constexpr double kDelocalizationThresholdM = 20.0;
};

/// 2D-projected absolute trajectory error of aligned pairs: drop z, East/North
/// distance per pose, RMSE over all pairs, the 20 m delocalization rule on the
/// chosen metric.
AteReport ate_2d(const std::vector<PosePair>& pairs,
                 const RigidTransform& alignment,
                 DelocMetric metric = DelocMetric::max_error);

/// Convenience: associate + align + ate_2d.
AteReport evaluate(const std::vector<geom::TimedPose>& est,
                   const std::vector<geom::TimedPose>& gt, double max_dt = 0.05,
                   bool align = true, DelocMetric metric = DelocMetric::max_error);

}  // namespace mapfusion::eval
