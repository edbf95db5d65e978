#include "dense_oracle.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace mapfusion::test {

namespace {

using fusion::Matrix6d;
using fusion::Vector6d;
using geom::Pose;

Eigen::Vector3d rotation_log(const Eigen::Matrix3d& m) {
  const Eigen::AngleAxisd aa(m);
  return aa.angle() * aa.axis();
}

Eigen::Matrix3d rotation_exp(const Eigen::Vector3d& w) {
  const double angle = w.norm();
  if (angle < 1e-14) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
}

Vector6d between_residual_ref(const Pose& pi, const Pose& pj, const Pose& measured) {
  const Eigen::Matrix3d ri = pi.orientation.toRotationMatrix();
  const Eigen::Matrix3d rj = pj.orientation.toRotationMatrix();
  const Eigen::Matrix3d rm = measured.orientation.toRotationMatrix();
  Vector6d r;
  r.head<3>() = ri.transpose() * (pj.position - pi.position) - measured.position;
  r.tail<3>() = rotation_log(rm.transpose() * ri.transpose() * rj);
  return r;
}

Vector6d prior_residual_ref(const Pose& p, const Pose& measured) {
  const Eigen::Matrix3d rp = p.orientation.toRotationMatrix();
  const Eigen::Matrix3d rm = measured.orientation.toRotationMatrix();
  Vector6d r;
  r.head<3>() = p.position - measured.position;
  r.tail<3>() = rotation_log(rm.transpose() * rp);
  return r;
}

// The optimizer's update chart: translation in the global frame, rotation as
// a body-frame exponential.
Pose perturb(const Pose& p, int dim, double eps) {
  Pose out = p;
  if (dim < 3) {
    out.position[dim] += eps;
  } else {
    Eigen::Vector3d w = Eigen::Vector3d::Zero();
    w[dim - 3] = eps;
    out.orientation = Eigen::Quaterniond(p.orientation.toRotationMatrix() *
                                         rotation_exp(w));
  }
  return out;
}

constexpr double kStep = 1e-6;

// Central-difference Jacobians of a residual wrt one pose.
template <typename Residual>
Matrix6d numeric_jacobian(const Pose& p, const Residual& residual) {
  Matrix6d j;
  for (int dim = 0; dim < 6; ++dim) {
    const Vector6d hi = residual(perturb(p, dim, kStep));
    const Vector6d lo = residual(perturb(p, dim, -kStep));
    j.col(dim) = (hi - lo) / (2.0 * kStep);
  }
  return j;
}

struct Dense {
  Eigen::MatrixXd h;
  Eigen::VectorXd g;
};

Dense assemble_dense(const fusion::FusionGraph& graph,
                     const std::vector<Pose>& poses) {
  const auto dim = static_cast<Eigen::Index>(6 * graph.pose_count());
  Dense eq{Eigen::MatrixXd::Zero(dim, dim), Eigen::VectorXd::Zero(dim)};

  for (const auto& f : graph.betweens()) {
    const Vector6d r = between_residual_ref(poses[f.i], poses[f.j], f.measured);
    const Matrix6d ji = numeric_jacobian(poses[f.i], [&](const Pose& p) {
      return between_residual_ref(p, poses[f.j], f.measured);
    });
    const Matrix6d jj = numeric_jacobian(poses[f.j], [&](const Pose& p) {
      return between_residual_ref(poses[f.i], p, f.measured);
    });
    const Matrix6d& info = f.noise.information();
    const auto bi = static_cast<Eigen::Index>(6 * f.i);
    const auto bj = static_cast<Eigen::Index>(6 * f.j);
    eq.h.block<6, 6>(bi, bi) += ji.transpose() * info * ji;
    eq.h.block<6, 6>(bj, bj) += jj.transpose() * info * jj;
    eq.h.block<6, 6>(bi, bj) += ji.transpose() * info * jj;
    eq.h.block<6, 6>(bj, bi) += jj.transpose() * info * ji;
    eq.g.segment<6>(bi) += ji.transpose() * info * r;
    eq.g.segment<6>(bj) += jj.transpose() * info * r;
  }
  for (const auto& f : graph.priors()) {
    const Vector6d r = prior_residual_ref(poses[f.index], f.measured);
    const Matrix6d j = numeric_jacobian(poses[f.index], [&](const Pose& p) {
      return prior_residual_ref(p, f.measured);
    });
    const Matrix6d& info = f.noise.information();
    const auto b = static_cast<Eigen::Index>(6 * f.index);
    eq.h.block<6, 6>(b, b) += j.transpose() * info * j;
    eq.g.segment<6>(b) += j.transpose() * info * r;
  }
  return eq;
}

void apply_delta(std::vector<Pose>& poses, const Eigen::VectorXd& delta) {
  for (std::size_t k = 0; k < poses.size(); ++k) {
    const auto base = static_cast<Eigen::Index>(6 * k);
    poses[k].position += delta.segment<3>(base);
    poses[k].orientation =
        Eigen::Quaterniond(poses[k].orientation.toRotationMatrix() *
                           rotation_exp(delta.segment<3>(base + 3)))
            .normalized();
  }
}

}  // namespace

double oracle_cost(const fusion::FusionGraph& graph,
                   const std::vector<Pose>& poses) {
  double cost = 0.0;
  for (const auto& f : graph.betweens()) {
    const Vector6d r = between_residual_ref(poses[f.i], poses[f.j], f.measured);
    cost += r.dot(f.noise.information() * r);
  }
  for (const auto& f : graph.priors()) {
    const Vector6d r = prior_residual_ref(poses[f.index], f.measured);
    cost += r.dot(f.noise.information() * r);
  }
  return cost;
}

std::vector<Pose> oracle_optimize(const fusion::FusionGraph& graph,
                                  std::vector<Pose> initial, int max_iterations,
                                  double relative_tol) {
  double cost = oracle_cost(graph, initial);
  for (int iter = 0; iter < max_iterations; ++iter) {
    const Dense eq = assemble_dense(graph, initial);
    double lambda = 0.0;
    bool stepped = false;
    while (lambda <= 1e10) {
      Eigen::MatrixXd h = eq.h;
      if (lambda > 0.0)
        for (Eigen::Index d = 0; d < h.rows(); ++d)
          h(d, d) += lambda * std::max(eq.h(d, d), 1e-9);
      const Eigen::VectorXd delta = h.ldlt().solve(-eq.g);
      std::vector<Pose> candidate = initial;
      apply_delta(candidate, delta);
      const double new_cost = oracle_cost(graph, candidate);
      const double drop = cost - new_cost;
      if (std::abs(drop) <= relative_tol * std::max(cost, 1e-300) ||
          delta.lpNorm<Eigen::Infinity>() < 1e-14) {
        if (new_cost < cost) initial = std::move(candidate);
        return initial;
      }
      if (new_cost < cost) {
        initial = std::move(candidate);
        cost = new_cost;
        stepped = true;
        break;
      }
      lambda = lambda == 0.0 ? 1e-6 : lambda * 10.0;
    }
    if (!stepped) break;
  }
  return initial;
}

Matrix6d oracle_pose_covariance(const fusion::FusionGraph& graph,
                                const std::vector<Pose>& linearization,
                                std::size_t index) {
  const Dense eq = assemble_dense(graph, linearization);
  const Eigen::MatrixXd cov =
      eq.h.ldlt().solve(Eigen::MatrixXd::Identity(eq.h.rows(), eq.h.cols()));
  return cov.block<6, 6>(static_cast<Eigen::Index>(6 * index),
                         static_cast<Eigen::Index>(6 * index));
}

}  // namespace mapfusion::test
