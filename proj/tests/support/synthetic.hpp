#pragma once

// Synthetic map and scenario construction shared by the unit and acceptance
// suites.

#include <cstdint>
#include <optional>
#include <vector>

#include "mapfusion/mapgraph.hpp"

namespace mapfusion::test {

inline geom::GeoPoint test_origin() { return {48.1, 11.6, 0.0}; }

/// OSM-style extract from ENU polylines; points that coincide exactly share a
/// node (so crossing ways intersect).
mapgraph::RawOsmExtract extract_from_polylines(
    const std::vector<std::vector<Eigen::Vector2d>>& ways,
    const std::vector<std::optional<std::uint32_t>>& lanes = {});

mapgraph::MapGraph build_from_polylines(
    const std::vector<std::vector<Eigen::Vector2d>>& ways, double step_m = 1.0,
    std::uint32_t window = 5,
    const std::vector<std::optional<std::uint32_t>>& lanes = {});

/// Map with exact binary-format coordinates (bypasses the OSM pipeline):
/// waypoint positions land bit-exact, headings follow the waypoint rule.
struct ExactEdge {
  std::uint32_t vertex_a = 0;
  std::uint32_t vertex_b = 0;
  std::uint32_t lane_count = 1;
  std::vector<Eigen::Vector2d> waypoints;
};

mapgraph::MapGraph exact_map(const std::vector<Eigen::Vector2d>& vertices,
                             const std::vector<ExactEdge>& edges,
                             double grid_cell_m = 20.0);

/// Straight east-heading road on y = 0 from x = 0 to x = length, 1 m spacing.
mapgraph::MapGraph straight_east_map(double length_m, std::uint32_t lanes = 1);

/// Square grid of two-way streets: `lines` north-south plus east-west ways,
/// `spacing_m` apart.
mapgraph::MapGraph grid_map(int lines, double spacing_m);

/// Edge id whose endpoint vertices sit at (or nearest to) a and b.
std::uint32_t find_edge(const mapgraph::MapGraph& map, const Eigen::Vector2d& a,
                        const Eigen::Vector2d& b);

/// Chain-connected route through the listed corner points of a grid map.
std::vector<std::uint32_t> route_through(const mapgraph::MapGraph& map,
                                         const std::vector<Eigen::Vector2d>& corners);

}  // namespace mapfusion::test
