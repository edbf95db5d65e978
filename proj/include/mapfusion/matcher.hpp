#pragma once

#include <optional>

#include "mapfusion/geom.hpp"
#include "mapfusion/mapgraph.hpp"

namespace mapfusion::matcher {

/// Outcome of matching a vehicle pose estimate against the map under the
/// combined metric D = E + A (1 degree weighted as 1 meter).
struct MatchResult {
  mapgraph::MapPose map_pose;  // heading already direction-resolved
  bool reversed = false;       // matched against the reversed traversal direction
  double euclidean_m = 0.0;
  double angular_deg = 0.0;
  double combined = 0.0;
  double lateral_m = 0.0;
  double road_width_m = 0.0;
  bool exceeds_road_width = false;
};

struct MatchConfig {
  double radius_m = 20.0;
  double widen_radius_m = 50.0;  // one retry when the window is empty
};

/// Road pose for a candidate waypoint: map x/y and heading, the estimate's
/// z, roll and pitch (the 2D map provides none of those).
geom::Pose road_pose(const mapgraph::MapPose& wp, const geom::Pose& estimate);

/// Lateral distance |y| of the estimate expressed in the road pose's frame.
double lateral_offset(const mapgraph::MapPose& road, const geom::Pose& estimate);

/// Closest map pose to the estimate under D = E + A, searching a window
/// around the hint (or around the estimate when there is none). Both traversal
/// directions of every waypoint are candidates. Empty when no waypoint lies
/// within the widened window.
std::optional<MatchResult> match(const mapgraph::MapGraph& map,
                                 const geom::Pose& estimate,
                                 const std::optional<MatchResult>& hint,
                                 const MatchConfig& config = {});

}  // namespace mapfusion::matcher
