#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>

#include "mapfusion/factor_graph.hpp"

namespace mapfusion::fusion {

namespace {

constexpr const char* kDimNames[6] = {"x", "y", "z", "roll", "pitch", "yaw"};

Matrix6d symmetrize(const Matrix6d& m) { return 0.5 * (m + m.transpose()); }

// Inverse of the SO(3) right Jacobian at rotation vector w.
Eigen::Matrix3d right_jacobian_inverse(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  const Eigen::Matrix3d s = skew(w);
  if (theta < 1e-8) return Eigen::Matrix3d::Identity() + 0.5 * s + s * s / 12.0;
  const double c =
      1.0 / (theta * theta) - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Eigen::Matrix3d::Identity() + 0.5 * s + c * (s * s);
}

struct FactorBlocks {
  // Jacobians of the 6-d residual wrt [delta_t; delta_theta] of each pose.
  Matrix6d j_i = Matrix6d::Zero();
  Matrix6d j_j = Matrix6d::Zero();
  Vector6d residual = Vector6d::Zero();
};

FactorBlocks linearize_between(const geom::Pose& pi, const geom::Pose& pj,
                               const geom::Pose& measured) {
  FactorBlocks out;
  out.residual = between_residual(pi, pj, measured);
  const Eigen::Matrix3d ri_t = pi.orientation.toRotationMatrix().transpose();
  const Eigen::Matrix3d rj = pj.orientation.toRotationMatrix();
  const Eigen::Vector3d t_rel = ri_t * (pj.position - pi.position);
  const Eigen::Matrix3d jr_inv = right_jacobian_inverse(out.residual.tail<3>());

  out.j_i.block<3, 3>(0, 0) = -ri_t;
  out.j_i.block<3, 3>(0, 3) = skew(t_rel);
  out.j_i.block<3, 3>(3, 3) = -jr_inv * (rj.transpose() * ri_t.transpose());

  out.j_j.block<3, 3>(0, 0) = ri_t;
  out.j_j.block<3, 3>(3, 3) = jr_inv;
  return out;
}

FactorBlocks linearize_prior(const geom::Pose& p, const geom::Pose& measured) {
  FactorBlocks out;
  out.residual = prior_residual(p, measured);
  out.j_i.block<3, 3>(0, 0) = Eigen::Matrix3d::Identity();
  out.j_i.block<3, 3>(3, 3) = right_jacobian_inverse(out.residual.tail<3>());
  return out;
}

using SparseMatrix = Eigen::SparseMatrix<double>;
using Solver =
    Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::NaturalOrdering<int>>;

struct NormalEquations {
  SparseMatrix h;
  Eigen::VectorXd g;
};

void add_block(std::vector<Eigen::Triplet<double>>& triplets, std::size_t row_pose,
               std::size_t col_pose, const Matrix6d& block) {
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 6; ++c) {
      if (block(r, c) != 0.0)
        triplets.emplace_back(static_cast<int>(6 * row_pose) + r,
                              static_cast<int>(6 * col_pose) + c, block(r, c));
    }
  }
}

NormalEquations assemble(const FusionGraph& graph,
                         const std::vector<geom::Pose>& poses) {
  const std::size_t dim = 6 * graph.pose_count();
  NormalEquations eq;
  eq.g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(72 * (graph.betweens().size() + graph.priors().size()) + dim);
  // Explicit structural diagonal, so rank deficiencies surface as zero pivots
  // (nameable) instead of a failed factorization.
  for (std::size_t d = 0; d < dim; ++d)
    triplets.emplace_back(static_cast<int>(d), static_cast<int>(d), 0.0);

  for (const auto& f : graph.betweens()) {
    const FactorBlocks blocks = linearize_between(poses[f.i], poses[f.j], f.measured);
    const Matrix6d& info = f.noise.information();
    const Matrix6d wi = info * blocks.j_i;
    const Matrix6d wj = info * blocks.j_j;
    add_block(triplets, f.i, f.i, blocks.j_i.transpose() * wi);
    add_block(triplets, f.j, f.j, blocks.j_j.transpose() * wj);
    add_block(triplets, f.i, f.j, blocks.j_i.transpose() * wj);
    add_block(triplets, f.j, f.i, blocks.j_j.transpose() * wi);
    eq.g.segment<6>(static_cast<Eigen::Index>(6 * f.i)) +=
        blocks.j_i.transpose() * (info * blocks.residual);
    eq.g.segment<6>(static_cast<Eigen::Index>(6 * f.j)) +=
        blocks.j_j.transpose() * (info * blocks.residual);
  }
  for (const auto& f : graph.priors()) {
    const FactorBlocks blocks = linearize_prior(poses[f.index], f.measured);
    const Matrix6d& info = f.noise.information();
    add_block(triplets, f.index, f.index,
              blocks.j_i.transpose() * (info * blocks.j_i));
    eq.g.segment<6>(static_cast<Eigen::Index>(6 * f.index)) +=
        blocks.j_i.transpose() * (info * blocks.residual);
  }

  eq.h.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  eq.h.setFromTriplets(triplets.begin(), triplets.end());
  return eq;
}

double max_diagonal(const SparseMatrix& h) {
  double scale = 0.0;
  for (int k = 0; k < h.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(h, k); it; ++it)
      if (it.row() == it.col()) scale = std::max(scale, std::abs(it.value()));
  return scale;
}

SparseMatrix shifted_diagonal(const SparseMatrix& h, double shift) {
  SparseMatrix identity(h.rows(), h.cols());
  identity.setIdentity();
  return h + shift * identity;
}

// Rank check via a slightly shifted probe: the shift keeps LDLT from aborting
// on zero pivots, and unconstrained dimensions surface as pivots at the shift
// magnitude (unknowns are ordered by pose index, so pivots map to dims).
void require_full_rank(const SparseMatrix& h) {
  const double scale = std::max(max_diagonal(h), 1.0);
  const double shift = scale * 1e-12;
  Solver probe;
  probe.compute(shifted_diagonal(h, shift));
  if (probe.info() != Eigen::Success)
    throw SingularGraphError("normal equations singular; unconstrained: (probe failed)");
  const Eigen::VectorXd pivots = probe.vectorD();
  std::string dims;
  int named = 0;
  for (Eigen::Index i = 0; i < pivots.size(); ++i) {
    if (std::abs(pivots[i]) > 1e3 * shift) continue;
    if (named++ == 8) {
      dims += ", ...";
      break;
    }
    if (!dims.empty()) dims += ", ";
    dims += "pose " + std::to_string(i / 6) + " " + kDimNames[i % 6];
  }
  if (!dims.empty())
    throw SingularGraphError("normal equations singular; unconstrained: " + dims);
}

Eigen::VectorXd solve_damped(const NormalEquations& eq, double lambda) {
  SparseMatrix h = eq.h;
  if (lambda > 0.0) {
    SparseMatrix damping(eq.h.rows(), eq.h.cols());
    std::vector<Eigen::Triplet<double>> diag;
    diag.reserve(static_cast<std::size_t>(eq.h.rows()));
    for (int k = 0; k < eq.h.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(eq.h, k); it; ++it) {
        if (it.row() == it.col())
          diag.emplace_back(it.row(), it.col(),
                            lambda * std::max(it.value(), 1e-9));
      }
    }
    damping.setFromTriplets(diag.begin(), diag.end());
    h = eq.h + damping;
  }
  Solver solver;
  solver.compute(h);
  if (solver.info() != Eigen::Success) {
    require_full_rank(eq.h);
    throw SingularGraphError("normal equations factorization failed");
  }
  return solver.solve(-eq.g);
}

void apply_update(std::vector<geom::Pose>& poses, const Eigen::VectorXd& delta) {
  for (std::size_t k = 0; k < poses.size(); ++k) {
    const auto base = static_cast<Eigen::Index>(6 * k);
    poses[k].position += delta.segment<3>(base);
    poses[k].orientation =
        (poses[k].orientation * exp_so3(delta.segment<3>(base + 3))).normalized();
  }
}

}  // namespace

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

Eigen::Vector3d log_so3(const Eigen::Quaterniond& q_in) {
  Eigen::Quaterniond q = q_in.normalized();
  if (q.w() < 0) q.coeffs() = -q.coeffs();
  const Eigen::Vector3d v = q.vec();
  const double n = v.norm();
  if (n < 1e-12) return 2.0 * v;
  const double angle = 2.0 * std::atan2(n, q.w());
  return v * (angle / n);
}

Eigen::Quaterniond exp_so3(const Eigen::Vector3d& w) {
  const double angle = w.norm();
  if (angle < 1e-12) {
    Eigen::Quaterniond q(1.0, 0.5 * w.x(), 0.5 * w.y(), 0.5 * w.z());
    return q.normalized();
  }
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle, w / angle));
}

NoiseModel NoiseModel::from_information(const Matrix6d& info) {
  if (!info.allFinite()) throw std::invalid_argument("information must be finite");
  return NoiseModel(symmetrize(info));
}

NoiseModel NoiseModel::from_sigmas(const Vector6d& sigmas) {
  Matrix6d info = Matrix6d::Zero();
  for (int i = 0; i < 6; ++i) {
    if (std::isfinite(sigmas[i])) {
      if (sigmas[i] <= 0.0) throw std::invalid_argument("sigma must be positive");
      info(i, i) = 1.0 / (sigmas[i] * sigmas[i]);
    }
  }
  return NoiseModel(info);
}

NoiseModel NoiseModel::from_position_rotation_sigmas(double sigma_pos_m,
                                                     double sigma_rot_rad) {
  Vector6d sigmas;
  sigmas << sigma_pos_m, sigma_pos_m, sigma_pos_m, sigma_rot_rad, sigma_rot_rad,
      sigma_rot_rad;
  return from_sigmas(sigmas);
}

NoiseModel NoiseModel::from_covariance(const Matrix6d& cov) {
  // Non-finite variances drop out as zero-information dimensions; the finite
  // block is inverted on its own.
  std::vector<int> finite;
  for (int i = 0; i < 6; ++i)
    if (std::isfinite(cov(i, i))) finite.push_back(i);
  Matrix6d info = Matrix6d::Zero();
  if (!finite.empty()) {
    Eigen::MatrixXd sub(finite.size(), finite.size());
    for (std::size_t r = 0; r < finite.size(); ++r)
      for (std::size_t c = 0; c < finite.size(); ++c)
        sub(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            cov(finite[r], finite[c]);
    const Eigen::MatrixXd sub_info =
        sub.ldlt().solve(Eigen::MatrixXd::Identity(sub.rows(), sub.cols()));
    for (std::size_t r = 0; r < finite.size(); ++r)
      for (std::size_t c = 0; c < finite.size(); ++c)
        info(finite[r], finite[c]) =
            sub_info(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  }
  return NoiseModel(symmetrize(info));
}

void FusionGraph::add_between(std::size_t i, std::size_t j,
                              const geom::Pose& measured, const NoiseModel& noise) {
  if (i >= pose_count_ || j >= pose_count_ || i == j)
    throw std::out_of_range("between-factor indices invalid");
  betweens_.push_back({i, j, measured, noise});
}

void FusionGraph::add_prior(std::size_t index, const geom::Pose& measured,
                            const NoiseModel& noise) {
  if (index >= pose_count_) throw std::out_of_range("prior index invalid");
  priors_.push_back({index, measured, noise});
}

bool FusionGraph::connected() const {
  if (pose_count_ == 0) return true;
  std::vector<std::vector<std::size_t>> adjacency(pose_count_);
  for (const auto& f : betweens_) {
    adjacency[f.i].push_back(f.j);
    adjacency[f.j].push_back(f.i);
  }
  std::vector<bool> seen(pose_count_, false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  while (!stack.empty()) {
    const std::size_t k = stack.back();
    stack.pop_back();
    for (const std::size_t n : adjacency[k]) {
      if (!seen[n]) {
        seen[n] = true;
        stack.push_back(n);
      }
    }
  }
  return std::all_of(seen.begin(), seen.end(), [](bool s) { return s; });
}

Vector6d between_residual(const geom::Pose& pi, const geom::Pose& pj,
                          const geom::Pose& measured) {
  const geom::Pose rel = geom::relative(pi, pj);
  Vector6d r;
  r.head<3>() = rel.position - measured.position;
  r.tail<3>() = log_so3(measured.orientation.conjugate() * rel.orientation);
  return r;
}

Vector6d prior_residual(const geom::Pose& p, const geom::Pose& measured) {
  Vector6d r;
  r.head<3>() = p.position - measured.position;
  r.tail<3>() = log_so3(measured.orientation.conjugate() * p.orientation);
  return r;
}

double graph_cost(const FusionGraph& graph, const std::vector<geom::Pose>& poses) {
  double cost = 0.0;
  for (const auto& f : graph.betweens()) {
    const Vector6d r = between_residual(poses[f.i], poses[f.j], f.measured);
    cost += r.dot(f.noise.information() * r);
  }
  for (const auto& f : graph.priors()) {
    const Vector6d r = prior_residual(poses[f.index], f.measured);
    cost += r.dot(f.noise.information() * r);
  }
  return cost;
}

OptimizeResult optimize(const FusionGraph& graph, std::vector<geom::Pose> initial,
                        const OptimizeOptions& options) {
  if (initial.size() != graph.pose_count())
    throw std::invalid_argument("initial values size mismatch");
  if (graph.pose_count() == 0) return {std::move(initial), true, 0, 0.0};
  if (!graph.connected())
    throw SingularGraphError("graph disconnected: poses unreachable from pose 0");
  if (graph.priors().empty())
    throw SingularGraphError("no prior factor: gauge not fixed");

  OptimizeResult result;
  result.poses = std::move(initial);
  double cost = graph_cost(graph, result.poses);

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    result.iterations = iter + 1;
    const NormalEquations eq = assemble(graph, result.poses);
    if (iter == 0) require_full_rank(eq.h);

    double lambda = 0.0;
    bool stepped = false;
    while (true) {
      const Eigen::VectorXd delta = solve_damped(eq, lambda);
      std::vector<geom::Pose> candidate = result.poses;
      apply_update(candidate, delta);
      const double new_cost = graph_cost(graph, candidate);
      const double drop = cost - new_cost;
      // A step that changes the cost by less than the tolerance is a plateau:
      // converged, whichever side of zero roundoff put the difference on.
      if (std::abs(drop) <= options.relative_cost_tol * std::max(cost, 1e-300) ||
          delta.lpNorm<Eigen::Infinity>() < 1e-14) {
        if (new_cost < cost) {
          result.poses = std::move(candidate);
          cost = new_cost;
        }
        result.converged = true;
        result.final_cost = cost;
        return result;
      }
      if (new_cost < cost) {
        result.poses = std::move(candidate);
        cost = new_cost;
        stepped = true;
        break;
      }
      // Gauss-Newton step rejected: add Levenberg damping and retry.
      lambda = lambda == 0.0 ? 1e-6 : lambda * 10.0;
      if (lambda > 1e10) break;
    }
    if (!stepped) break;  // damping exhausted, keep best iterate
  }
  result.final_cost = cost;
  result.converged = false;
  return result;
}

struct Marginals::Impl {
  Solver solver;
  std::size_t pose_count = 0;
};

Marginals::Marginals(const FusionGraph& graph,
                     const std::vector<geom::Pose>& linearization)
    : impl_(std::make_unique<Impl>()) {
  if (linearization.size() != graph.pose_count())
    throw std::invalid_argument("linearization size mismatch");
  const NormalEquations eq = assemble(graph, linearization);
  impl_->pose_count = graph.pose_count();
  require_full_rank(eq.h);
  impl_->solver.compute(eq.h);
  if (impl_->solver.info() != Eigen::Success)
    throw SingularGraphError("marginals factorization failed");
}

Marginals::~Marginals() = default;
Marginals::Marginals(Marginals&&) noexcept = default;
Marginals& Marginals::operator=(Marginals&&) noexcept = default;

Matrix6d Marginals::pose_covariance(std::size_t index) const {
  if (index >= impl_->pose_count) throw std::out_of_range("pose index");
  const auto dim = static_cast<Eigen::Index>(6 * impl_->pose_count);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(dim, 6);
  for (int c = 0; c < 6; ++c) rhs(static_cast<Eigen::Index>(6 * index) + c, c) = 1.0;
  const Eigen::MatrixXd cols = impl_->solver.solve(rhs);
  Matrix6d cov = cols.block<6, 6>(static_cast<Eigen::Index>(6 * index), 0);
  return symmetrize(cov);
}

double Marginals::position_std(std::size_t index) const {
  const Matrix6d cov = pose_covariance(index);
  const Eigen::Matrix2d en = cov.block<2, 2>(0, 0);
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eigen(en);
  return std::sqrt(std::max(0.0, eigen.eigenvalues().maxCoeff()));
}

}  // namespace mapfusion::fusion
