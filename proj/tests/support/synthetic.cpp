#include "synthetic.hpp"

#include <cstring>
#include <map>
#include <stdexcept>

namespace mapfusion::test {

namespace {

// Mirrors the documented map-file layout so tests can craft exact maps.
class BlobWriter {
 public:
  template <typename T>
  void put(T value) {
    const auto old = bytes.size();
    bytes.resize(old + sizeof(T));
    std::memcpy(bytes.data() + old, &value, sizeof(T));
  }
  std::string bytes;
};

}  // namespace

mapgraph::RawOsmExtract extract_from_polylines(
    const std::vector<std::vector<Eigen::Vector2d>>& ways,
    const std::vector<std::optional<std::uint32_t>>& lanes) {
  const geom::LocalFrame frame(test_origin());
  mapgraph::RawOsmExtract extract;
  std::map<std::pair<double, double>, std::int64_t> node_ids;
  std::int64_t next_node = 1;

  for (std::size_t w = 0; w < ways.size(); ++w) {
    mapgraph::OsmWay way;
    way.id = static_cast<std::int64_t>(w + 1);
    if (w < lanes.size()) way.lanes = lanes[w];
    for (const auto& p : ways[w]) {
      const auto key = std::make_pair(p.x(), p.y());
      auto it = node_ids.find(key);
      if (it == node_ids.end()) {
        it = node_ids.emplace(key, next_node++).first;
        extract.nodes[it->second] = frame.to_geo({p.x(), p.y(), 0.0});
      }
      way.node_refs.push_back(it->second);
    }
    extract.ways.push_back(std::move(way));
  }
  return extract;
}

mapgraph::MapGraph build_from_polylines(
    const std::vector<std::vector<Eigen::Vector2d>>& ways, double step_m,
    std::uint32_t window, const std::vector<std::optional<std::uint32_t>>& lanes) {
  mapgraph::BuildOptions options;
  options.step_m = step_m;
  options.smoothing_window = window;
  options.origin = test_origin();
  return mapgraph::build_graph(extract_from_polylines(ways, lanes), options);
}

mapgraph::MapGraph exact_map(const std::vector<Eigen::Vector2d>& vertices,
                             const std::vector<ExactEdge>& edges,
                             double grid_cell_m) {
  BlobWriter w;
  w.bytes.append("MFMAPBIN", 8);
  w.put(std::uint32_t{1});
  const geom::GeoPoint origin = test_origin();
  w.put(origin.latitude);
  w.put(origin.longitude);
  w.put(origin.altitude);
  w.put(grid_cell_m);

  w.put(static_cast<std::uint64_t>(vertices.size()));
  for (const auto& v : vertices) {
    w.put(v.x());
    w.put(v.y());
  }

  w.put(static_cast<std::uint64_t>(edges.size()));
  std::vector<std::pair<std::int64_t, std::uint64_t>> grid_entries;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto& edge = edges[e];
    if (edge.waypoints.size() < 2) throw std::invalid_argument("edge too short");
    w.put(static_cast<std::uint32_t>(e));
    w.put(edge.vertex_a);
    w.put(edge.vertex_b);
    w.put(edge.lane_count);
    w.put(static_cast<std::uint64_t>(edge.waypoints.size()));
    for (std::size_t i = 0; i < edge.waypoints.size(); ++i) {
      const auto& p = edge.waypoints[i];
      double heading;
      if (i + 1 < edge.waypoints.size()) {
        const auto h = geom::heading_between(p, edge.waypoints[i + 1]);
        heading = h ? *h : 0.0;
      } else {
        const auto h = geom::heading_between(edge.waypoints[i - 1], p);
        heading = h ? *h : 0.0;
      }
      w.put(p.x());
      w.put(p.y());
      w.put(heading);
      const auto cx = static_cast<std::int64_t>(std::floor(p.x() / grid_cell_m));
      const auto cy = static_cast<std::int64_t>(std::floor(p.y() / grid_cell_m));
      grid_entries.emplace_back((cx << 32) ^ (cy & 0xffffffffLL),
                                (static_cast<std::uint64_t>(e) << 32) | i);
    }
  }

  std::map<std::int64_t, std::vector<std::uint64_t>> grid;
  for (const auto& [key, packed] : grid_entries) grid[key].push_back(packed);
  w.put(static_cast<std::uint64_t>(grid.size()));
  for (const auto& [key, cell] : grid) {
    w.put(key);
    w.put(static_cast<std::uint64_t>(cell.size()));
    for (const std::uint64_t packed : cell) w.put(packed);
  }
  return mapgraph::load_map(w.bytes);
}

mapgraph::MapGraph straight_east_map(double length_m, std::uint32_t lanes) {
  ExactEdge edge;
  edge.vertex_a = 0;
  edge.vertex_b = 1;
  edge.lane_count = lanes;
  const auto n = static_cast<int>(std::llround(length_m));
  for (int x = 0; x <= n; ++x) edge.waypoints.emplace_back(x, 0.0);
  return exact_map({{0.0, 0.0}, {length_m, 0.0}}, {edge});
}

mapgraph::MapGraph grid_map(int lines, double spacing_m) {
  std::vector<std::vector<Eigen::Vector2d>> ways;
  for (int i = 0; i < lines; ++i) {
    const double c = spacing_m * i;
    std::vector<Eigen::Vector2d> horizontal, vertical;
    for (int j = 0; j < lines; ++j) {
      horizontal.emplace_back(spacing_m * j, c);
      vertical.emplace_back(c, spacing_m * j);
    }
    ways.push_back(horizontal);
    ways.push_back(vertical);
  }
  return build_from_polylines(ways);
}

std::uint32_t find_edge(const mapgraph::MapGraph& map, const Eigen::Vector2d& a,
                        const Eigen::Vector2d& b) {
  auto nearest_vertex = [&](const Eigen::Vector2d& p) {
    std::uint32_t best = 0;
    double best_d = std::numeric_limits<double>::max();
    for (std::uint32_t v = 0; v < map.vertices().size(); ++v) {
      const double d = std::hypot(map.vertices()[v].x - p.x(),
                                  map.vertices()[v].y - p.y());
      if (d < best_d) {
        best_d = d;
        best = v;
      }
    }
    return best;
  };
  const std::uint32_t va = nearest_vertex(a);
  const std::uint32_t vb = nearest_vertex(b);
  for (const auto& edge : map.edges()) {
    if ((edge.vertex_a == va && edge.vertex_b == vb) ||
        (edge.vertex_a == vb && edge.vertex_b == va))
      return edge.id;
  }
  throw std::runtime_error("no edge between the requested corners");
}

std::vector<std::uint32_t> route_through(const mapgraph::MapGraph& map,
                                         const std::vector<Eigen::Vector2d>& corners) {
  std::vector<std::uint32_t> route;
  for (std::size_t i = 0; i + 1 < corners.size(); ++i)
    route.push_back(find_edge(map, corners[i], corners[i + 1]));
  return route;
}

}  // namespace mapfusion::test
