#include <algorithm>
#include <cmath>
#include <map>

#include "mapfusion/mapgraph.hpp"

namespace mapfusion::mapgraph {

namespace {

geom::GeoPoint centroid_origin(const RawOsmExtract& raw) {
  double lat = 0.0, lon = 0.0;
  for (const auto& [id, p] : raw.nodes) {
    lat += p.latitude;
    lon += p.longitude;
  }
  const double n = static_cast<double>(raw.nodes.size());
  return geom::GeoPoint{lat / n, lon / n, 0.0};
}

// Polyline of a whole way, densified so consecutive spacing <= step. Raw node
// positions stay as waypoints; `node_index` maps way-node ordinal -> waypoint
// index (zero-length segments collapse onto one waypoint).
struct DensifiedWay {
  std::vector<Eigen::Vector2d> points;
  std::vector<std::size_t> node_index;
};

DensifiedWay densify(const std::vector<Eigen::Vector2d>& nodes, double step) {
  DensifiedWay out;
  out.points.push_back(nodes.front());
  out.node_index.push_back(0);
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    const Eigen::Vector2d delta = nodes[i] - nodes[i - 1];
    const double len = delta.norm();
    if (len <= 1e-9) {
      out.node_index.push_back(out.points.size() - 1);
      continue;
    }
    // Tolerate lengths a hair over a multiple of the step.
    const auto segments =
        static_cast<std::size_t>(std::ceil(std::max(len - 1e-9, 1e-12) / step));
    for (std::size_t k = 1; k <= segments; ++k) {
      const double frac = static_cast<double>(k) / static_cast<double>(segments);
      out.points.push_back(nodes[i - 1] + frac * delta);
    }
    out.node_index.push_back(out.points.size() - 1);
  }
  return out;
}

// Centered rolling average. The window reach shrinks toward pinned indices
// (way ends and split vertices), which both preserves those points exactly and
// keeps consecutive spacing bounded by the interpolation step.
std::vector<Eigen::Vector2d> smooth(const std::vector<Eigen::Vector2d>& pts,
                                    const std::vector<std::size_t>& pinned,
                                    std::uint32_t window) {
  const std::size_t n = pts.size();
  std::vector<std::size_t> dist(n, n);
  for (const std::size_t p : pinned) dist[p] = 0;
  for (std::size_t i = 1; i < n; ++i) dist[i] = std::min(dist[i], dist[i - 1] + 1);
  for (std::size_t i = n - 1; i-- > 0;) dist[i] = std::min(dist[i], dist[i + 1] + 1);

  const std::size_t max_half = (window - 1) / 2;
  std::vector<Eigen::Vector2d> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t half = std::min(max_half, dist[i]);
    Eigen::Vector2d sum = Eigen::Vector2d::Zero();
    for (std::size_t j = i - half; j <= i + half; ++j) sum += pts[j];
    out[i] = sum / static_cast<double>(2 * half + 1);
  }
  return out;
}

void assign_headings(RoadEdge& edge) {
  auto& wps = edge.waypoints;
  for (std::size_t i = 0; i + 1 < wps.size(); ++i) {
    const auto h = geom::heading_between({wps[i].x, wps[i].y},
                                         {wps[i + 1].x, wps[i + 1].y});
    wps[i].heading = h ? *h : (i > 0 ? wps[i - 1].heading : 0.0);
  }
  // The last waypoint follows the previous waypoint's heading.
  if (wps.size() >= 2) wps.back().heading = wps[wps.size() - 2].heading;
}

}  // namespace

MapGraph build_graph(const RawOsmExtract& raw, const BuildOptions& options) {
  if (raw.ways.empty()) throw BuildError("no road ways in extract");
  if (options.step_m <= 0.0) throw BuildError("interpolation step must be positive");
  if (options.smoothing_window < 1 || options.smoothing_window % 2 == 0)
    throw BuildError("smoothing window must be odd and >= 1");

  MapGraph map;
  map.frame_ =
      geom::LocalFrame(options.origin ? *options.origin : centroid_origin(raw));
  map.grid_cell_m_ = options.grid_cell_m;

  // Split nodes: shared by >= 2 way traversals, or any way endpoint.
  std::unordered_map<std::int64_t, std::uint32_t> usage;
  for (const auto& way : raw.ways) {
    for (const std::int64_t ref : way.node_refs) ++usage[ref];
    if (!way.node_refs.empty()) {
      ++usage[way.node_refs.front()];
      ++usage[way.node_refs.back()];
    }
  }

  std::unordered_map<std::int64_t, std::uint32_t> vertex_ids;
  auto vertex_for = [&](std::int64_t node) {
    auto it = vertex_ids.find(node);
    if (it != vertex_ids.end()) return it->second;
    const Eigen::Vector3d enu = map.frame_.to_enu(raw.nodes.at(node));
    const auto id = static_cast<std::uint32_t>(map.vertices_.size());
    map.vertices_.push_back({enu.x(), enu.y()});
    vertex_ids.emplace(node, id);
    return id;
  };

  std::uint32_t degenerate = 0;
  for (const auto& way : raw.ways) {
    if (way.node_refs.size() < 2) {
      ++degenerate;
      continue;
    }
    std::vector<Eigen::Vector2d> nodes;
    nodes.reserve(way.node_refs.size());
    for (const std::int64_t ref : way.node_refs) {
      const Eigen::Vector3d enu = map.frame_.to_enu(raw.nodes.at(ref));
      nodes.emplace_back(enu.x(), enu.y());
    }

    DensifiedWay dense = densify(nodes, options.step_m);
    if (dense.points.size() < 2) {
      ++degenerate;  // all nodes coincident
      continue;
    }

    // Pin way ends plus interior split vertices.
    std::vector<std::size_t> pinned{0, dense.points.size() - 1};
    std::vector<std::pair<std::size_t, std::int64_t>> splits;  // waypoint idx, node
    splits.emplace_back(0, way.node_refs.front());
    for (std::size_t i = 1; i + 1 < way.node_refs.size(); ++i) {
      if (usage.at(way.node_refs[i]) >= 2) {
        const std::size_t wp = dense.node_index[i];
        if (wp != splits.back().first) {
          splits.emplace_back(wp, way.node_refs[i]);
          pinned.push_back(wp);
        }
      }
    }
    if (dense.points.size() - 1 != splits.back().first)
      splits.emplace_back(dense.points.size() - 1, way.node_refs.back());

    const std::vector<Eigen::Vector2d> smoothed =
        smooth(dense.points, pinned, options.smoothing_window);

    const std::uint32_t lane_count = way.lanes.value_or(1);
    for (std::size_t s = 0; s + 1 < splits.size(); ++s) {
      RoadEdge edge;
      edge.id = static_cast<std::uint32_t>(map.edges_.size());
      edge.vertex_a = vertex_for(splits[s].second);
      edge.vertex_b = vertex_for(splits[s + 1].second);
      edge.lane_count = lane_count;
      const std::size_t from = splits[s].first;
      const std::size_t to = splits[s + 1].first;
      edge.waypoints.reserve(to - from + 1);
      for (std::size_t i = from; i <= to; ++i) {
        MapPose wp;
        wp.x = smoothed[i].x();
        wp.y = smoothed[i].y();
        wp.edge_id = edge.id;
        wp.index = static_cast<std::uint32_t>(i - from);
        edge.waypoints.push_back(wp);
      }
      assign_headings(edge);
      map.edges_.push_back(std::move(edge));
    }
  }

  map.dropped_degenerate_ = degenerate;
  if (map.edges_.empty()) throw BuildError("no usable road ways in extract");
  map.build_grid();
  return map;
}

std::size_t MapGraph::waypoint_count() const {
  std::size_t n = 0;
  for (const auto& edge : edges_) n += edge.waypoints.size();
  return n;
}

std::int64_t MapGraph::cell_key(double x, double y) const {
  const auto cx = static_cast<std::int64_t>(std::floor(x / grid_cell_m_));
  const auto cy = static_cast<std::int64_t>(std::floor(y / grid_cell_m_));
  return (cx << 32) ^ (cy & 0xffffffffLL);
}

void MapGraph::build_grid() {
  grid_.clear();
  for (const auto& edge : edges_) {
    for (const auto& wp : edge.waypoints) {
      const std::uint64_t packed =
          (static_cast<std::uint64_t>(wp.edge_id) << 32) | wp.index;
      grid_[cell_key(wp.x, wp.y)].push_back(packed);
    }
  }
}

std::vector<MapPose> MapGraph::query_nearby(const Eigen::Vector2d& center,
                                            double radius) const {
  std::vector<MapPose> result;
  const auto cx0 = static_cast<std::int64_t>(std::floor((center.x() - radius) / grid_cell_m_));
  const auto cx1 = static_cast<std::int64_t>(std::floor((center.x() + radius) / grid_cell_m_));
  const auto cy0 = static_cast<std::int64_t>(std::floor((center.y() - radius) / grid_cell_m_));
  const auto cy1 = static_cast<std::int64_t>(std::floor((center.y() + radius) / grid_cell_m_));
  const double r2 = radius * radius;
  for (std::int64_t cx = cx0; cx <= cx1; ++cx) {
    for (std::int64_t cy = cy0; cy <= cy1; ++cy) {
      const auto it = grid_.find((cx << 32) ^ (cy & 0xffffffffLL));
      if (it == grid_.end()) continue;
      for (const std::uint64_t packed : it->second) {
        const auto edge_id = static_cast<std::uint32_t>(packed >> 32);
        const auto index = static_cast<std::uint32_t>(packed & 0xffffffffULL);
        const MapPose& wp = edges_[edge_id].waypoints[index];
        const double dx = wp.x - center.x();
        const double dy = wp.y - center.y();
        if (dx * dx + dy * dy <= r2) result.push_back(wp);
      }
    }
  }
  // Deterministic order regardless of hash-map iteration.
  std::sort(result.begin(), result.end(), [](const MapPose& a, const MapPose& b) {
    return a.edge_id != b.edge_id ? a.edge_id < b.edge_id : a.index < b.index;
  });
  return result;
}

void MapGraph::set_lane_count(std::uint32_t edge_id, std::uint32_t lanes) {
  if (edge_id >= edges_.size()) throw std::out_of_range("no such edge id");
  if (lanes == 0) throw std::invalid_argument("lane count must be positive");
  edges_[edge_id].lane_count = lanes;
}

}  // namespace mapfusion::mapgraph
