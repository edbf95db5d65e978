#pragma once

#include <deque>
#include <optional>

#include "mapfusion/factor_graph.hpp"
#include "mapfusion/initializer.hpp"
#include "mapfusion/mapgraph.hpp"
#include "mapfusion/matcher.hpp"

namespace mapfusion::fusion {

struct FusionConfig {
  // odometry between-factor noise
  double odom_pos_std_pre_m = 10.0;        // before scale initialization
  double odom_pos_std_post_m = 0.1;        // after, plus a fraction of step length
  double odom_pos_frac_post = 0.01;
  double odom_rot_std_deg = 0.5;

  // GPS position prior (rotation information zero)
  double gps_pos_std_m = 0.5;
  double gps_alt_std_m = 2.0;

  // map-alignment prior
  bool map_priors_enabled = true;
  double yaw_prior_std_deg = 10.0;
  double eigen_floor_m2 = 0.01;
  double stationary_eps_m = 1e-3;
  double match_radius_m = 20.0;
  double widen_radius_m = 50.0;

  // uncertainty cap
  bool cap_enabled = true;
  double default_road_width_m = 3.0;

  // first-pose prior once initialized (gauge fixing)
  double init_pos_std_m = 0.5;
  double init_alt_std_m = 2.0;
  double init_yaw_std_deg = 2.0;
  double init_tilt_std_deg = 5.0;

  // sliding window
  std::size_t window = 500;
};

/// Eq.-style anisotropic 2x2 covariance: eigenvectors along/across the motion
/// direction `delta`, eigenvalues |v_lon| and |v_lat| floored at `floor_m2`.
Eigen::Matrix2d lateral_covariance_2d(const Eigen::Vector2d& delta, double v_lon,
                                      double v_lat, double floor_m2 = 0.01);

/// 6-d noise for a map-alignment prior: the East/North block from
/// lateral_covariance_2d, yaw sigma `yaw_std_deg`, and infinite covariance on
/// z, roll, pitch. Empty when the vehicle is stationary (|cur-prev| < eps).
std::optional<NoiseModel> map_prior_noise(const geom::Pose& prev,
                                          const geom::Pose& cur, double v_lon,
                                          double v_lat, double yaw_std_deg = 10.0,
                                          double eigen_floor_m2 = 0.01,
                                          double stationary_eps_m = 1e-3);

struct StepResult {
  geom::Pose pose;           // newest estimate (dead-reckoned before init)
  bool initialized = false;
  bool pose_added = false;
  bool gps_prior_added = false;
  bool map_prior_added = false;
  bool cap_prior_added = false;
  bool degraded = false;
  std::optional<matcher::MatchResult> match;
  double position_std = 0.0;  // newest-pose marginal, 0 before init
};

/// Per-step debug record for CSV export.
struct StepRecord {
  double t = 0.0;
  StepResult result;
};

/// Map-Fusion session: routes measurements into the initializer until scale
/// and heading are known, then maintains the factor graph with odometry
/// betweens, GPS priors, map-alignment priors and uncertainty capping.
/// Single-owner; step() calls are strictly sequential.
class FusionSession {
 public:
  FusionSession(const mapgraph::MapGraph* map, const FusionConfig& config,
                const initializer::InitConfig& init_config);

  /// Skip GPS initialization and start from a known alignment on the first
  /// step (the pure-odometry baseline path). Call before the first step.
  void preset_initialization(const initializer::Initialization& init);

  /// Advance the session to time t with an optional odometry delta (raw VO
  /// units) and an optional GPS fix (ENU meters). Timestamps must be strictly
  /// increasing.
  StepResult step(double t, const std::optional<geom::Pose>& vo_delta,
                  const std::optional<Eigen::Vector3d>& gps);

  bool initialized() const { return bootstrapped_; }
  bool degraded() const { return degraded_; }
  const initializer::InitState& init_state() const { return init_state_; }
  const initializer::Initialization& initialization() const;

  /// Full optimized trajectory: frozen poses from marginalized windows plus
  /// the active window, one entry per odometry frame.
  std::vector<geom::TimedPose> trajectory() const;

  const std::vector<StepRecord>& records() const { return records_; }
  std::size_t map_priors_fired() const { return map_priors_fired_; }

  /// Active-window internals, read-only (batch/incremental cross-checks).
  const FusionGraph& graph() const { return graph_; }
  const std::vector<geom::Pose>& values() const { return values_; }

  /// Newest-pose marginal East/North std; 0 before initialization.
  double newest_position_std() const { return last_position_std_; }

 private:
  void bootstrap_graph(double t);
  void marginalize_if_needed();
  geom::Pose newest_pose() const;
  NoiseModel odom_noise(double step_length, bool pre_init) const;
  NoiseModel gps_noise() const;

  const mapgraph::MapGraph* map_;  // may be null (fusion without matching)
  FusionConfig config_;
  initializer::InitState init_state_;
  std::optional<initializer::Initialization> preset_init_;
  initializer::Initialization init_;
  bool bootstrapped_ = false;

  // pre-initialization stash
  struct Stashed {
    double t;
    std::optional<geom::Pose> vo_delta;
    std::optional<Eigen::Vector3d> gps;
  };
  std::vector<Stashed> stash_;
  geom::Pose raw_vo_pose_;  // integrated raw odometry (dead reckoning)

  // active factor-graph window
  fusion::FusionGraph graph_;
  std::vector<geom::Pose> values_;
  std::vector<double> pose_times_;
  std::vector<geom::TimedPose> archived_;

  std::optional<matcher::MatchResult> hint_;
  bool map_prior_armed_ = true;
  double last_road_width_ = 0.0;
  double last_position_std_ = 0.0;
  double last_t_ = 0.0;
  bool has_last_t_ = false;
  bool degraded_ = false;
  std::size_t map_priors_fired_ = 0;

  std::vector<Eigen::Vector3d> pending_gps_;
  std::vector<StepRecord> records_;
};

}  // namespace mapfusion::fusion
