#include <algorithm>
#include <cmath>

#include "mapfusion/eval.hpp"

namespace mapfusion::eval {

std::vector<PosePair> associate(const std::vector<geom::TimedPose>& est,
                                const std::vector<geom::TimedPose>& gt,
                                double max_dt) {
  if (est.empty() || gt.empty()) throw EvalError("empty trajectory");
  std::vector<PosePair> pairs;
  std::size_t cursor = 0;
  for (const auto& g : gt) {
    // est timestamps are increasing; advance to the closest one.
    while (cursor + 1 < est.size() &&
           std::abs(est[cursor + 1].t - g.t) <= std::abs(est[cursor].t - g.t))
      ++cursor;
    if (std::abs(est[cursor].t - g.t) <= max_dt) pairs.push_back({est[cursor], g});
  }
  if (pairs.empty()) throw EvalError("no timestamp pairs within max_dt");
  return pairs;
}

RigidTransform align_6dof(const std::vector<PosePair>& pairs) {
  if (pairs.size() < 2) throw EvalError("need at least 2 pairs to align");

  Eigen::Vector3d est_mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d gt_mean = Eigen::Vector3d::Zero();
  for (const auto& p : pairs) {
    est_mean += p.est.pose.position;
    gt_mean += p.gt.pose.position;
  }
  est_mean /= static_cast<double>(pairs.size());
  gt_mean /= static_cast<double>(pairs.size());

  Eigen::Matrix3d cross = Eigen::Matrix3d::Zero();
  for (const auto& p : pairs)
    cross += (p.est.pose.position - est_mean) * (p.gt.pose.position - gt_mean).transpose();

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cross,
                                        Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d singular = svd.singularValues();

  RigidTransform out;
  if (singular[1] <= 1e-9 * std::max(singular[0], 1e-12)) {
    // Collinear points: rotation about the line is unconstrained. Align the
    // dominant direction vectors with a yaw about Up (the straight-road case).
    const Eigen::Vector3d est_dir =
        pairs.back().est.pose.position - pairs.front().est.pose.position;
    const Eigen::Vector3d gt_dir =
        pairs.back().gt.pose.position - pairs.front().gt.pose.position;
    const double yaw = std::atan2(gt_dir.y(), gt_dir.x()) -
                       std::atan2(est_dir.y(), est_dir.x());
    out.rotation = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  } else {
    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0) d(2, 2) = -1;
    out.rotation = svd.matrixV() * d * svd.matrixU().transpose();
  }
  out.translation = gt_mean - out.rotation * est_mean;
  return out;
}

AteReport ate_2d(const std::vector<PosePair>& pairs, const RigidTransform& alignment,
                 DelocMetric metric) {
  AteReport report;
  report.errors.reserve(pairs.size());
  double sum_sq = 0.0;
  for (const auto& p : pairs) {
    const Eigen::Vector3d aligned = alignment.apply(p.est.pose.position);
    const double err = (aligned.head<2>() - p.gt.pose.position.head<2>()).norm();
    report.errors.push_back(err);
    sum_sq += err * err;
    report.max_error = std::max(report.max_error, err);
  }
  report.rmse = std::sqrt(sum_sq / static_cast<double>(pairs.size()));
  const double gauge =
      metric == DelocMetric::max_error ? report.max_error : report.rmse;
  report.delocalized = gauge > AteReport::kDelocalizationThresholdM;
  return report;
}

AteReport evaluate(const std::vector<geom::TimedPose>& est,
                   const std::vector<geom::TimedPose>& gt, double max_dt, bool align,
                   DelocMetric metric) {
  const std::vector<PosePair> pairs = associate(est, gt, max_dt);
  const RigidTransform transform = align ? align_6dof(pairs) : RigidTransform{};
  return ate_2d(pairs, transform, metric);
}

}  // namespace mapfusion::eval
