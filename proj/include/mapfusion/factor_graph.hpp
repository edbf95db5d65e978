#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "mapfusion/geom.hpp"

namespace mapfusion::fusion {

using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Vector6d = Eigen::Matrix<double, 6, 1>;

/// Gaussian noise as a 6x6 information matrix over (x, y, z, roll, pitch,
/// yaw). Zero rows encode infinite covariance (unconstrained dimensions).
class NoiseModel {
 public:
  NoiseModel() : info_(Matrix6d::Identity()) {}

  static NoiseModel from_information(const Matrix6d& info);
  /// Diagonal model from standard deviations; a non-finite sigma gives that
  /// dimension zero information.
  static NoiseModel from_sigmas(const Vector6d& sigmas);
  static NoiseModel from_position_rotation_sigmas(double sigma_pos_m,
                                                  double sigma_rot_rad);
  /// Inverts a covariance; dimensions with non-finite variance become
  /// zero-information.
  static NoiseModel from_covariance(const Matrix6d& cov);

  const Matrix6d& information() const { return info_; }

 private:
  explicit NoiseModel(const Matrix6d& info) : info_(info) {}
  Matrix6d info_;
};

struct BetweenFactor {
  std::size_t i = 0;
  std::size_t j = 0;
  geom::Pose measured;  // pose j expressed in pose i's frame
  NoiseModel noise;
};

struct PriorFactor {
  std::size_t index = 0;
  geom::Pose measured;
  NoiseModel noise;
};

/// Pose variables plus Gaussian between-factors and unary priors.
class FusionGraph {
 public:
  std::size_t add_pose() { return pose_count_++; }
  void add_between(std::size_t i, std::size_t j, const geom::Pose& measured,
                   const NoiseModel& noise);
  void add_prior(std::size_t index, const geom::Pose& measured,
                 const NoiseModel& noise);

  std::size_t pose_count() const { return pose_count_; }
  const std::vector<BetweenFactor>& betweens() const { return betweens_; }
  const std::vector<PriorFactor>& priors() const { return priors_; }

  /// Every pose reachable from pose 0 through between-factors.
  bool connected() const;

 private:
  std::size_t pose_count_ = 0;
  std::vector<BetweenFactor> betweens_;
  std::vector<PriorFactor> priors_;
};

struct SingularGraphError : std::runtime_error {
  explicit SingularGraphError(const std::string& msg) : std::runtime_error(msg) {}
};

struct OptimizeOptions {
  int max_iterations = 100;
  double relative_cost_tol = 1e-9;
};

struct OptimizeResult {
  std::vector<geom::Pose> poses;
  bool converged = false;
  int iterations = 0;
  double final_cost = 0.0;
};

/// Residual conventions shared with every consumer of this graph:
///  - between (i, j): translation (Pi^-1 Pj).t - measured.t in pose i's frame,
///    rotation Log(R_m^T Ri^T Rj);
///  - prior: translation Pi.t - measured.t in the global frame (so prior
///    covariances are stated in East/North/Up), rotation Log(R_m^T Ri).
Vector6d between_residual(const geom::Pose& pi, const geom::Pose& pj,
                          const geom::Pose& measured);
Vector6d prior_residual(const geom::Pose& p, const geom::Pose& measured);

/// Sum over factors of r^T * information * r.
double graph_cost(const FusionGraph& graph, const std::vector<geom::Pose>& poses);

/// Sparse Gauss-Newton with Levenberg damping fallback; unknowns ordered by
/// pose index. Throws SingularGraphError naming the unconstrained dimensions
/// when the normal equations are singular.
OptimizeResult optimize(const FusionGraph& graph,
                        std::vector<geom::Pose> initial,
                        const OptimizeOptions& options = {});

/// Marginal covariances from the information-matrix inverse at a fixed
/// linearization point.
class Marginals {
 public:
  Marginals(const FusionGraph& graph, const std::vector<geom::Pose>& linearization);
  ~Marginals();
  Marginals(Marginals&&) noexcept;
  Marginals& operator=(Marginals&&) noexcept;

  Matrix6d pose_covariance(std::size_t index) const;

  /// Largest-eigenvalue standard deviation of the East/North position block.
  double position_std(std::size_t index) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// so(3) helpers used by the residuals (exposed for the test oracles).
Eigen::Matrix3d skew(const Eigen::Vector3d& v);
Eigen::Vector3d log_so3(const Eigen::Quaterniond& q);
Eigen::Quaterniond exp_so3(const Eigen::Vector3d& w);

}  // namespace mapfusion::fusion
