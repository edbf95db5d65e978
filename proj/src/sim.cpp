#include <algorithm>
#include <cmath>

#include "mapfusion/sim.hpp"

namespace mapfusion::sim {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kRadPerDeg = kPi / 180.0;

// Route centerline as one polyline, honoring edge traversal direction.
std::vector<Eigen::Vector2d> route_polyline(const mapgraph::MapGraph& map,
                                            const std::vector<std::uint32_t>& route) {
  if (route.empty()) throw SimError("empty route");
  const auto& edges = map.edges();
  for (const std::uint32_t id : route)
    if (id >= edges.size()) throw SimError("route references missing edge");

  std::vector<Eigen::Vector2d> polyline;
  std::uint32_t position_vertex = 0;  // vertex we are currently at

  for (std::size_t k = 0; k < route.size(); ++k) {
    const auto& edge = edges[route[k]];
    bool forward;
    if (k == 0) {
      // Orient the first edge so it chains into the second, if any.
      forward = true;
      if (route.size() > 1) {
        const auto& next = edges[route[1]];
        forward = edge.vertex_b == next.vertex_a || edge.vertex_b == next.vertex_b;
        if (!forward && edge.vertex_a != next.vertex_a && edge.vertex_a != next.vertex_b)
          throw SimError("route edges not chain-connected");
      }
      position_vertex = forward ? edge.vertex_a : edge.vertex_b;
    } else {
      if (edge.vertex_a == position_vertex) forward = true;
      else if (edge.vertex_b == position_vertex) forward = false;
      else throw SimError("route edges not chain-connected");
    }

    std::vector<Eigen::Vector2d> pts;
    pts.reserve(edge.waypoints.size());
    for (const auto& wp : edge.waypoints) pts.emplace_back(wp.x, wp.y);
    if (!forward) std::reverse(pts.begin(), pts.end());

    const std::size_t skip = polyline.empty() ? 0 : 1;  // shared junction point
    polyline.insert(polyline.end(), pts.begin() + static_cast<std::ptrdiff_t>(skip),
                    pts.end());
    position_vertex = forward ? edge.vertex_b : edge.vertex_a;
  }
  if (polyline.size() < 2) throw SimError("route polyline degenerate");
  return polyline;
}

struct ArcSampler {
  explicit ArcSampler(std::vector<Eigen::Vector2d> polyline)
      : points(std::move(polyline)) {
    arclen.resize(points.size(), 0.0);
    for (std::size_t i = 1; i < points.size(); ++i)
      arclen[i] = arclen[i - 1] + (points[i] - points[i - 1]).norm();
  }

  double total() const { return arclen.back(); }

  // Position and tangent heading at arclength s (clamped to the route).
  std::pair<Eigen::Vector2d, double> at(double s) const {
    s = std::clamp(s, 0.0, total());
    const auto it = std::upper_bound(arclen.begin(), arclen.end(), s);
    std::size_t hi = std::min(static_cast<std::size_t>(it - arclen.begin()),
                              points.size() - 1);
    std::size_t lo = hi - 1;
    double seg = arclen[hi] - arclen[lo];
    while (seg <= 1e-12 && hi + 1 < points.size()) {
      ++hi;
      seg = arclen[hi] - arclen[lo];
    }
    const double frac = seg > 1e-12 ? (s - arclen[lo]) / seg : 0.0;
    const Eigen::Vector2d p = points[lo] + frac * (points[hi] - points[lo]);
    const Eigen::Vector2d d = points[hi] - points[lo];
    return {p, std::atan2(d.y(), d.x())};
  }

  std::vector<Eigen::Vector2d> points;
  std::vector<double> arclen;
};

}  // namespace

Streams generate(const mapgraph::MapGraph& map, const Scenario& scenario) {
  if (scenario.speed_mps <= 0.0) throw SimError("speed must be positive");
  if (scenario.vo_rate_hz <= 0.0) throw SimError("vo rate must be positive");
  if (scenario.drift.scale_error <= 0.0) throw SimError("scale error must be positive");
  for (const auto& [start, end] : scenario.gps.dropouts)
    if (end < start) throw SimError("dropout window reversed");

  const ArcSampler sampler(route_polyline(map, scenario.route));
  const double duration = sampler.total() / scenario.speed_mps;
  const double dt = 1.0 / scenario.vo_rate_hz;
  const auto frames = static_cast<std::size_t>(std::floor(duration / dt)) + 1;

  Streams streams;
  streams.ground_truth.reserve(frames);
  for (std::size_t k = 0; k < frames; ++k) {
    const double t = static_cast<double>(k) * dt;
    const auto [p, heading] = sampler.at(scenario.speed_mps * t);
    streams.ground_truth.push_back(
        {t, geom::Pose::from_xy_yaw(p.x(), p.y(), heading)});
  }

  // Odometry: truth deltas corrupted in the body frame, drift integrating
  // over distance.
  std::mt19937_64 odom_rng(scenario.seed);
  std::normal_distribution<double> unit_normal(0.0, 1.0);
  const DriftSpec& drift = scenario.drift;
  const bool has_noise =
      drift.step_noise_pos_m > 0.0 || drift.step_noise_rot_deg > 0.0;
  streams.odometry_deltas.reserve(frames - 1);
  for (std::size_t k = 1; k < frames; ++k) {
    const geom::Pose truth_delta = geom::relative(streams.ground_truth[k - 1].pose,
                                                  streams.ground_truth[k].pose);
    const double dl = truth_delta.position.norm();
    Eigen::Vector3d translation = truth_delta.position;
    translation.y() += drift.lateral_drift_m_per_m * dl;
    Eigen::Quaterniond rotation =
        truth_delta.orientation *
        geom::quat_from_ypr(drift.yaw_drift_deg_per_m * kRadPerDeg * dl, 0.0, 0.0);
    translation *= drift.scale_error;
    if (has_noise) {
      translation.x() += drift.step_noise_pos_m * unit_normal(odom_rng);
      translation.y() += drift.step_noise_pos_m * unit_normal(odom_rng);
      rotation = rotation * geom::quat_from_ypr(drift.step_noise_rot_deg * kRadPerDeg *
                                                    unit_normal(odom_rng),
                                                0.0, 0.0);
    }
    streams.odometry_deltas.push_back(
        {streams.ground_truth[k].t, geom::Pose(translation, rotation)});
  }

  // GPS on its own grid, suppressed in dropout windows.
  if (scenario.gps.enabled && scenario.gps.period_s > 0.0) {
    std::mt19937_64 gps_rng(scenario.seed ^ 0x9e3779b97f4a7c15ULL);
    for (double t = 0.0; t <= duration + 1e-9; t += scenario.gps.period_s) {
      if (scenario.gps.in_dropout(t)) continue;
      const auto [p, heading] = sampler.at(scenario.speed_mps * t);
      (void)heading;
      Eigen::Vector3d fix(p.x(), p.y(), 0.0);
      if (scenario.gps.noise_std_m > 0.0) {
        fix.x() += scenario.gps.noise_std_m * unit_normal(gps_rng);
        fix.y() += scenario.gps.noise_std_m * unit_normal(gps_rng);
      }
      streams.gps.push_back({t, fix});
    }
  }
  return streams;
}

fusion::FusionSession run_session(const mapgraph::MapGraph& map,
                                  const Streams& streams,
                                  const fusion::FusionConfig& fusion_config,
                                  const initializer::InitConfig& init_config) {
  fusion::FusionSession session(&map, fusion_config, init_config);
  std::size_t gps_cursor = 0;
  const double eps = 1e-9;

  // First frame carries no delta; deliver any fix at t=0 on its own step.
  if (!streams.ground_truth.empty()) {
    const double t0 = streams.ground_truth.front().t;
    std::optional<Eigen::Vector3d> fix;
    if (gps_cursor < streams.gps.size() && streams.gps[gps_cursor].t <= t0 + eps) {
      fix = streams.gps[gps_cursor].enu;
      ++gps_cursor;
    }
    if (fix) session.step(t0, std::nullopt, fix);
  }

  for (const auto& delta : streams.odometry_deltas) {
    std::optional<Eigen::Vector3d> fix;
    if (gps_cursor < streams.gps.size() &&
        streams.gps[gps_cursor].t <= delta.t + eps) {
      fix = streams.gps[gps_cursor].enu;
      ++gps_cursor;
    }
    session.step(delta.t, delta.pose, fix);
  }
  return session;
}

ScenarioReport evaluate_scenario(const mapgraph::MapGraph& map,
                                 const Scenario& scenario,
                                 const fusion::FusionConfig& fusion_config,
                                 const initializer::InitConfig& init_config) {
  const Streams streams = generate(map, scenario);

  fusion::FusionConfig with_map = fusion_config;
  with_map.map_priors_enabled = true;
  fusion::FusionConfig without_map = fusion_config;
  without_map.map_priors_enabled = false;

  ScenarioReport report;
  {
    const auto session = run_session(map, streams, with_map, init_config);
    report.initialized = session.initialized();
    report.with_map_degraded = session.degraded();
    report.map_priors_fired = session.map_priors_fired();
    report.with_map = eval::evaluate(session.trajectory(), streams.ground_truth);
  }
  {
    const auto session = run_session(map, streams, without_map, init_config);
    report.without_map_degraded = session.degraded();
    report.without_map = eval::evaluate(session.trajectory(), streams.ground_truth);
  }
  return report;
}

}  // namespace mapfusion::sim
