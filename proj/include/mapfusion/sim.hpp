#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mapfusion/eval.hpp"
#include "mapfusion/fusion.hpp"
#include "mapfusion/mapgraph.hpp"

namespace mapfusion::sim {

/// Per-step odometry corruption, applied in the body frame and integrated.
struct DriftSpec {
  double lateral_drift_m_per_m = 0.0;  // leftward slide per meter traveled
  double yaw_drift_deg_per_m = 0.0;
  double scale_error = 1.0;  // multiplies odometry translation (1 / true scale)
  double step_noise_pos_m = 0.0;
  double step_noise_rot_deg = 0.0;
};

struct GpsSpec {
  bool enabled = true;
  double period_s = 5.0;
  double noise_std_m = 0.5;
  std::vector<std::pair<double, double>> dropouts;  // [start, end) seconds

  bool in_dropout(double t) const {
    for (const auto& [start, end] : dropouts)
      if (t >= start && t < end) return true;
    return false;
  }
};

struct Scenario {
  std::vector<std::uint32_t> route;  // chain-connected edge ids
  double speed_mps = 10.0;
  double vo_rate_hz = 2.0;
  DriftSpec drift;
  GpsSpec gps;
  std::uint64_t seed = 0;
};

struct GpsFix {
  double t = 0.0;
  Eigen::Vector3d enu{0, 0, 0};
};

struct Streams {
  std::vector<geom::TimedPose> ground_truth;    // one per odometry frame
  std::vector<geom::TimedPose> odometry_deltas;  // frame k-1 -> k, starts at k=1
  std::vector<GpsFix> gps;
};

struct SimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Drive the route centerline at constant speed and corrupt the odometry and
/// GPS per the scenario. Identical seeds give bit-identical streams.
Streams generate(const mapgraph::MapGraph& map, const Scenario& scenario);

struct ScenarioReport {
  eval::AteReport with_map;
  eval::AteReport without_map;
  std::size_t map_priors_fired = 0;
  bool with_map_degraded = false;
  bool without_map_degraded = false;
  bool initialized = false;
};

/// Run the same streams through fusion with and without map priors and
/// evaluate both against ground truth (aligned, 2D ATE). Deterministic per
/// seed.
ScenarioReport evaluate_scenario(const mapgraph::MapGraph& map,
                                 const Scenario& scenario,
                                 const fusion::FusionConfig& fusion_config,
                                 const initializer::InitConfig& init_config);

/// Replay generated streams through one fusion session; exposed so tests can
/// inspect the session afterwards.
fusion::FusionSession run_session(const mapgraph::MapGraph& map,
                                  const Streams& streams,
                                  const fusion::FusionConfig& fusion_config,
                                  const initializer::InitConfig& init_config);

}  // namespace mapfusion::sim
