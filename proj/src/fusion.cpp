#include <cmath>
#include <limits>

#include "mapfusion/fusion.hpp"

namespace mapfusion::fusion {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kRadPerDeg = kPi / 180.0;

geom::Pose scale_delta(const geom::Pose& delta, double scale) {
  return geom::Pose(scale * delta.position, delta.orientation);
}
}  // namespace

Eigen::Matrix2d lateral_covariance_2d(const Eigen::Vector2d& delta, double v_lon,
                                      double v_lat, double floor_m2) {
  const Eigen::Vector2d e1 = delta.normalized();
  const Eigen::Vector2d e2(e1.y(), -e1.x());
  const double lambda1 = std::max(std::abs(v_lon), floor_m2);
  const double lambda2 = std::max(std::abs(v_lat), floor_m2);
  Eigen::Matrix2d v;
  v.col(0) = e1;
  v.col(1) = e2;
  const Eigen::Matrix2d sigma =
      v * Eigen::Vector2d(lambda1, lambda2).asDiagonal() * v.transpose();
  return 0.5 * (sigma + sigma.transpose());
}

std::optional<NoiseModel> map_prior_noise(const geom::Pose& prev,
                                          const geom::Pose& cur, double v_lon,
                                          double v_lat, double yaw_std_deg,
                                          double eigen_floor_m2,
                                          double stationary_eps_m) {
  const Eigen::Vector2d delta = (cur.position - prev.position).head<2>();
  if (delta.norm() <= stationary_eps_m) return std::nullopt;

  const Eigen::Matrix2d sigma =
      lateral_covariance_2d(delta, v_lon, v_lat, eigen_floor_m2);
  const Eigen::Matrix2d info_en = sigma.inverse();

  Matrix6d info = Matrix6d::Zero();
  info.block<2, 2>(0, 0) = 0.5 * (info_en + info_en.transpose());
  const double yaw_std = yaw_std_deg * kRadPerDeg;
  info(5, 5) = 1.0 / (yaw_std * yaw_std);
  // z, roll, pitch rows stay zero: infinite covariance from the 2D map.
  return NoiseModel::from_information(info);
}

FusionSession::FusionSession(const mapgraph::MapGraph* map,
                             const FusionConfig& config,
                             const initializer::InitConfig& init_config)
    : map_(map), config_(config), init_state_(init_config) {}

void FusionSession::preset_initialization(const initializer::Initialization& init) {
  if (has_last_t_) throw std::logic_error("preset must precede the first step");
  preset_init_ = init;
}

const initializer::Initialization& FusionSession::initialization() const {
  if (!bootstrapped_) throw std::logic_error("session not initialized");
  return init_;
}

NoiseModel FusionSession::odom_noise(double step_length, bool pre_init) const {
  const double pos_std =
      pre_init ? config_.odom_pos_std_pre_m
               : config_.odom_pos_std_post_m + config_.odom_pos_frac_post * step_length;
  return NoiseModel::from_position_rotation_sigmas(
      pos_std, config_.odom_rot_std_deg * kRadPerDeg);
}

NoiseModel FusionSession::gps_noise() const {
  Vector6d sigmas;
  const double inf = std::numeric_limits<double>::infinity();
  sigmas << config_.gps_pos_std_m, config_.gps_pos_std_m, config_.gps_alt_std_m, inf,
      inf, inf;
  return NoiseModel::from_sigmas(sigmas);
}

geom::Pose FusionSession::newest_pose() const {
  return values_.empty() ? raw_vo_pose_ : values_.back();
}

void FusionSession::bootstrap_graph(double t) {
  const auto& init = init_;

  // Replay the stashed prefix: aligned values, scaled betweens with the
  // pre-initialization noise, GPS priors on the pose they arrived with.
  geom::Pose raw = geom::Pose::identity();
  const double t0 = stash_.empty() ? t : stash_.front().t;

  graph_ = FusionGraph{};
  values_.clear();
  pose_times_.clear();

  graph_.add_pose();
  values_.push_back(initializer::apply_initialization(init, raw));
  pose_times_.push_back(t0);

  // With a preset alignment there was no scale-unknown phase, so the stash
  // (a single step) gets the post-initialization noise.
  const bool pre_init_noise = !preset_init_.has_value();
  for (const auto& entry : stash_) {
    if (entry.vo_delta) {
      raw = geom::compose(raw, *entry.vo_delta);
      const std::size_t j = graph_.add_pose();
      values_.push_back(initializer::apply_initialization(init, raw));
      pose_times_.push_back(entry.t);
      const geom::Pose scaled = scale_delta(*entry.vo_delta, init.scale);
      graph_.add_between(j - 1, j, scaled,
                         odom_noise(scaled.position.norm(), pre_init_noise));
    }
    if (entry.gps && !values_.empty()) {
      const std::size_t idx = values_.size() - 1;
      graph_.add_prior(idx, geom::Pose(*entry.gps, Eigen::Quaterniond::Identity()),
                       gps_noise());
    }
  }

  // Gauge prior on the first pose: position near the first GPS fix, yaw from
  // the initialization heading.
  Vector6d sigmas;
  sigmas << config_.init_pos_std_m, config_.init_pos_std_m, config_.init_alt_std_m,
      config_.init_tilt_std_deg * kRadPerDeg, config_.init_tilt_std_deg * kRadPerDeg,
      config_.init_yaw_std_deg * kRadPerDeg;
  graph_.add_prior(0, values_.front(), NoiseModel::from_sigmas(sigmas));

  const OptimizeResult result = optimize(graph_, values_);
  values_ = result.poses;
  if (!result.converged) degraded_ = true;

  Marginals marginals(graph_, values_);
  last_position_std_ = marginals.position_std(values_.size() - 1);

  if (map_) hint_ = matcher::match(*map_, values_.back(), std::nullopt,
                                   {config_.match_radius_m, config_.widen_radius_m});
  stash_.clear();
  marginalize_if_needed();
}

void FusionSession::marginalize_if_needed() {
  if (config_.window < 2 || values_.size() <= config_.window) return;

  const std::size_t cut = values_.size() - config_.window;
  Marginals marginals(graph_, values_);
  const Matrix6d boundary_cov = marginals.pose_covariance(cut);

  for (std::size_t k = 0; k < cut; ++k)
    archived_.push_back({pose_times_[k], values_[k]});

  FusionGraph pruned;
  for (std::size_t k = cut; k < values_.size(); ++k) pruned.add_pose();
  for (const auto& f : graph_.betweens()) {
    if (f.i >= cut && f.j >= cut)
      pruned.add_between(f.i - cut, f.j - cut, f.measured, f.noise);
  }
  for (const auto& f : graph_.priors()) {
    if (f.index >= cut) pruned.add_prior(f.index - cut, f.measured, f.noise);
  }
  // Dense prior standing in for the dropped history.
  pruned.add_prior(0, values_[cut], NoiseModel::from_covariance(boundary_cov));

  graph_ = std::move(pruned);
  values_.erase(values_.begin(), values_.begin() + static_cast<std::ptrdiff_t>(cut));
  pose_times_.erase(pose_times_.begin(),
                    pose_times_.begin() + static_cast<std::ptrdiff_t>(cut));
}

StepResult FusionSession::step(double t, const std::optional<geom::Pose>& vo_delta,
                               const std::optional<Eigen::Vector3d>& gps) {
  if (has_last_t_ && t <= last_t_)
    throw std::invalid_argument("timestamps must be strictly increasing");
  last_t_ = t;
  has_last_t_ = true;

  StepResult result;

  if (!bootstrapped_) {
    if (vo_delta) {
      raw_vo_pose_ = geom::compose(raw_vo_pose_, *vo_delta);
      if (!preset_init_) init_state_.feed_vo(t, *vo_delta);
    }
    if (gps && !preset_init_) init_state_.feed_gps(t, *gps);
    stash_.push_back({t, vo_delta, gps});

    if (preset_init_ || init_state_.initialized()) {
      init_ = preset_init_ ? *preset_init_ : init_state_.result();
      bootstrap_graph(t);
      bootstrapped_ = true;
      result.initialized = true;
      result.pose_added = true;
      result.pose = values_.back();
      result.position_std = last_position_std_;
    } else {
      result.pose = raw_vo_pose_;
    }
    records_.push_back({t, result});
    return result;
  }

  result.initialized = true;
  const auto& init = init_;

  if (gps) pending_gps_.push_back(*gps);

  if (!vo_delta) {
    result.pose = newest_pose();
    result.position_std = last_position_std_;
    records_.push_back({t, result});
    return result;
  }

  raw_vo_pose_ = geom::compose(raw_vo_pose_, *vo_delta);

  // 1. new pose variable + odometry between-factor
  const geom::Pose scaled = scale_delta(*vo_delta, init.scale);
  const geom::Pose prev = values_.back();
  const geom::Pose predicted = geom::compose(prev, scaled);
  const double dt = t - pose_times_.back();
  const std::size_t j = graph_.add_pose();
  values_.push_back(predicted);
  pose_times_.push_back(t);
  graph_.add_between(j - 1, j, scaled, odom_noise(scaled.position.norm(), false));
  result.pose_added = true;

  // 2. GPS position priors
  for (const auto& fix : pending_gps_) {
    graph_.add_prior(j, geom::Pose(fix, Eigen::Quaterniond::Identity()), gps_noise());
    result.gps_prior_added = true;
  }
  pending_gps_.clear();

  // 3. map-alignment prior when the lateral offset leaves the road
  if (map_) {
    result.match = matcher::match(*map_, predicted, hint_,
                                  {config_.match_radius_m, config_.widen_radius_m});
    if (result.match) {
      hint_ = result.match;
      last_road_width_ = result.match->road_width_m;
      if (config_.map_priors_enabled && result.match->exceeds_road_width &&
          map_prior_armed_ && dt > 0.0) {
        const Eigen::Vector3d v_body =
            predicted.orientation.conjugate() * (predicted.position - prev.position) /
            dt;
        const auto noise = map_prior_noise(prev, predicted, v_body.x(), v_body.y(),
                                           config_.yaw_prior_std_deg,
                                           config_.eigen_floor_m2,
                                           config_.stationary_eps_m);
        if (noise) {
          graph_.add_prior(j, matcher::road_pose(result.match->map_pose, predicted),
                           *noise);
          map_prior_armed_ = false;
          ++map_priors_fired_;
          result.map_prior_added = true;
        }
      }
      if (!result.match->exceeds_road_width) map_prior_armed_ = true;
    }
  }

  // 4. uncertainty cap: odometry-estimate prior when the marginal outgrows
  //    the road width
  const double road_width =
      last_road_width_ > 0.0 ? last_road_width_ : config_.default_road_width_m;
  if (config_.cap_enabled) {
    Marginals pre(graph_, values_);
    if (pre.position_std(j) > road_width) {
      graph_.add_prior(j, predicted,
                       NoiseModel::from_covariance(pre.pose_covariance(j)));
      result.cap_prior_added = true;
    }
  }

  // 5. optimize and report the newest estimate
  const OptimizeResult opt = optimize(graph_, values_);
  if (opt.converged) {
    values_ = opt.poses;
    result.pose = values_.back();
  } else {
    degraded_ = true;
    result.degraded = true;
    values_ = opt.poses;  // best iterate
    result.pose = predicted;
  }

  Marginals marginals(graph_, values_);
  last_position_std_ = marginals.position_std(j);
  result.position_std = last_position_std_;

  // Refresh the hint against the optimized pose; corrections re-arm the map
  // prior once the lateral offset is back inside the road.
  if (map_ && result.match) {
    const auto post = matcher::match(*map_, values_.back(), hint_,
                                     {config_.match_radius_m, config_.widen_radius_m});
    if (post) {
      hint_ = post;
      if (!post->exceeds_road_width) map_prior_armed_ = true;
    }
  }

  marginalize_if_needed();
  records_.push_back({t, result});
  return result;
}

std::vector<geom::TimedPose> FusionSession::trajectory() const {
  std::vector<geom::TimedPose> out = archived_;
  for (std::size_t k = 0; k < values_.size(); ++k)
    out.push_back({pose_times_[k], values_[k]});
  return out;
}

}  // namespace mapfusion::fusion
