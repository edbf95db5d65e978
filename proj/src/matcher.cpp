#include <cmath>

#include "mapfusion/matcher.hpp"

namespace mapfusion::matcher {

namespace {
constexpr double kPi = 3.14159265358979323846;

struct Candidate {
  const mapgraph::MapPose* wp = nullptr;
  bool reversed = false;
  double euclidean = 0.0;
  double angular = 0.0;
  double combined = 0.0;
};

constexpr std::uint32_t kNoHintEdge = 0xffffffffu;

// Deterministic preference for equal D: stay on the hint's edge, then lower
// edge id, lower waypoint index, forward before reversed.
bool preferred(const Candidate& a, const Candidate& b, std::uint32_t hint_edge) {
  if (a.combined != b.combined) return a.combined < b.combined;
  if (hint_edge != kNoHintEdge) {
    const bool a_hint = a.wp->edge_id == hint_edge;
    const bool b_hint = b.wp->edge_id == hint_edge;
    if (a_hint != b_hint) return a_hint;
  }
  if (a.wp->edge_id != b.wp->edge_id) return a.wp->edge_id < b.wp->edge_id;
  if (a.wp->index != b.wp->index) return a.wp->index < b.wp->index;
  return !a.reversed && b.reversed;
}

}  // namespace

geom::Pose road_pose(const mapgraph::MapPose& wp, const geom::Pose& estimate) {
  return geom::Pose(Eigen::Vector3d(wp.x, wp.y, estimate.z()),
                    geom::quat_from_ypr(wp.heading, estimate.pitch(), estimate.roll()));
}

double lateral_offset(const mapgraph::MapPose& road, const geom::Pose& estimate) {
  return std::abs(geom::relative(road_pose(road, estimate), estimate).position.y());
}

std::optional<MatchResult> match(const mapgraph::MapGraph& map,
                                 const geom::Pose& estimate,
                                 const std::optional<MatchResult>& hint,
                                 const MatchConfig& config) {
  const Eigen::Vector2d center =
      hint ? Eigen::Vector2d(hint->map_pose.x, hint->map_pose.y)
           : Eigen::Vector2d(estimate.x(), estimate.y());

  std::vector<mapgraph::MapPose> window = map.query_nearby(center, config.radius_m);
  if (window.empty() && config.widen_radius_m > config.radius_m)
    window = map.query_nearby(center, config.widen_radius_m);
  if (window.empty()) return std::nullopt;

  const std::uint32_t hint_edge = hint ? hint->map_pose.edge_id : kNoHintEdge;
  const double roll = estimate.roll();
  const double pitch = estimate.pitch();

  std::optional<Candidate> best;
  for (const auto& wp : window) {
    const double dx = wp.x - estimate.x();
    const double dy = wp.y - estimate.y();
    const double euclidean = std::hypot(dx, dy);
    for (const bool reversed : {false, true}) {
      const double heading = reversed ? geom::wrap_angle(wp.heading + kPi) : wp.heading;
      const Eigen::Quaterniond candidate_q = geom::quat_from_ypr(heading, pitch, roll);
      Candidate c;
      c.wp = &wp;
      c.reversed = reversed;
      c.euclidean = euclidean;
      c.angular = geom::quat_angular_distance_deg(estimate.orientation, candidate_q);
      c.combined = c.euclidean + c.angular;
      if (!best || preferred(c, *best, hint_edge)) best = c;
    }
  }

  MatchResult result;
  result.map_pose = *best->wp;
  if (best->reversed)
    result.map_pose.heading = geom::wrap_angle(result.map_pose.heading + kPi);
  result.reversed = best->reversed;
  result.euclidean_m = best->euclidean;
  result.angular_deg = best->angular;
  result.combined = best->combined;
  result.lateral_m = lateral_offset(result.map_pose, estimate);
  result.road_width_m = map.edges()[result.map_pose.edge_id].road_width();
  result.exceeds_road_width = result.lateral_m > result.road_width_m;
  return result;
}

}  // namespace mapfusion::matcher
