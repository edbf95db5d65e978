#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "mapfusion/geom.hpp"

namespace mapfusion::mapgraph {

/// Road waypoint: position, travel heading, and its place in the graph.
struct MapPose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // radians from East, along digitization order
  std::uint32_t edge_id = 0;
  std::uint32_t index = 0;  // within the edge
};

struct OsmWay {
  std::int64_t id = 0;
  std::vector<std::int64_t> node_refs;
  std::optional<std::uint32_t> lanes;
  bool oneway = false;  // parsed but ignored: all roads are two-way
};

/// Road-filtered OSM content; only what the graph build needs.
struct RawOsmExtract {
  std::unordered_map<std::int64_t, geom::GeoPoint> nodes;
  std::vector<OsmWay> ways;
  std::uint32_t dropped_ways = 0;  // ways referencing missing nodes, degenerate ways
};

enum class OsmFormat { xml, overpass_json };

struct OsmParseError : std::runtime_error {
  OsmParseError(const std::string& msg, std::size_t byte_offset)
      : std::runtime_error(msg + " (byte " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
  std::size_t offset;
};

/// Parse an OSM XML document or Overpass JSON. Keeps only ways carrying a
/// `highway` tag outside the footway/cycleway/path classes, captures `lanes`
/// and `oneway`, drops everything else.
RawOsmExtract parse_osm(std::string_view data, OsmFormat format);

struct RoadEdge {
  std::uint32_t id = 0;
  std::uint32_t vertex_a = 0;
  std::uint32_t vertex_b = 0;
  std::uint32_t lane_count = 1;
  std::vector<MapPose> waypoints;

  double road_width() const { return 3.0 * lane_count; }
};

struct Vertex {
  double x = 0.0;
  double y = 0.0;
};

struct BuildError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BuildOptions {
  double step_m = 1.0;
  std::uint32_t smoothing_window = 5;  // odd, >= 1
  double grid_cell_m = 20.0;
  /// Frame anchor; defaults to the centroid of the extract's nodes.
  std::optional<geom::GeoPoint> origin;
};

/// Intersection/road graph with dense heading-annotated waypoints and a
/// uniform-grid spatial index. Immutable after build.
class MapGraph {
 public:
  MapGraph() = default;

  const geom::LocalFrame& frame() const { return frame_; }
  const std::vector<Vertex>& vertices() const { return vertices_; }
  const std::vector<RoadEdge>& edges() const { return edges_; }
  double grid_cell_m() const { return grid_cell_m_; }
  std::uint32_t dropped_degenerate() const { return dropped_degenerate_; }

  std::size_t waypoint_count() const;

  /// Waypoints with Euclidean distance <= radius from center. Result carries
  /// no particular order beyond being deterministic for a given map.
  std::vector<MapPose> query_nearby(const Eigen::Vector2d& center,
                                    double radius) const;

  /// In-place lane-count override for one edge (the manual map-fix path).
  void set_lane_count(std::uint32_t edge_id, std::uint32_t lanes);

  const MapPose& waypoint(std::uint32_t edge_id, std::uint32_t index) const {
    return edges_.at(edge_id).waypoints.at(index);
  }

 private:
  friend MapGraph build_graph(const RawOsmExtract&, const BuildOptions&);
  friend MapGraph load_map(const std::string&);
  friend std::string serialize_map(const MapGraph&);

  void build_grid();
  std::int64_t cell_key(double x, double y) const;

  geom::LocalFrame frame_;
  std::vector<Vertex> vertices_;
  std::vector<RoadEdge> edges_;
  std::uint32_t dropped_degenerate_ = 0;
  double grid_cell_m_ = 20.0;
  std::unordered_map<std::int64_t, std::vector<std::uint64_t>> grid_;
};

/// Build the graph: shared nodes and way endpoints become vertices, way
/// segments between vertices become edges, waypoints are interpolated at
/// `step_m` and smoothed by a centered rolling average whose reach extends
/// across edge junctions interior to a way (vertex positions stay pinned).
MapGraph build_graph(const RawOsmExtract& raw, const BuildOptions& options = {});

struct MapIoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Versioned binary map format; load(serialize(m)) is structurally equal to m
/// with bit-exact coordinates.
std::string serialize_map(const MapGraph& map);
MapGraph load_map(const std::string& bytes);

void save_map_file(const MapGraph& map, const std::string& path);
MapGraph load_map_file(const std::string& path);

/// Human-readable dump for inspection.
std::string map_debug_json(const MapGraph& map);

}  // namespace mapfusion::mapgraph
