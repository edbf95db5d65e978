#include <algorithm>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "mapfusion/mapgraph.hpp"

namespace mapfusion::mapgraph {

namespace {

constexpr char kMagic[8] = {'M', 'F', 'M', 'A', 'P', 'B', 'I', 'N'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto old = bytes.size();
    bytes.resize(old + sizeof(T));
    std::memcpy(bytes.data() + old, &value, sizeof(T));
  }
  std::string bytes;
};

class Reader {
 public:
  explicit Reader(const std::string& data) : data_(data) {}

  template <typename T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    if (pos_ + sizeof(T) > data_.size())
      throw MapIoError("truncated map file at byte " + std::to_string(pos_));
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::size_t remaining() const { return data_.size() - pos_; }

  // Guards against absurd counts in corrupted files before any allocation.
  std::uint64_t get_count(std::size_t element_size) {
    const auto n = get<std::uint64_t>();
    if (element_size > 0 && n > remaining() / element_size)
      throw MapIoError("count exceeds file size at byte " + std::to_string(pos_));
    return n;
  }

 private:
  const std::string& data_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_map(const MapGraph& map) {
  Writer w;
  w.bytes.append(kMagic, sizeof(kMagic));
  w.put(kVersion);
  w.put(map.frame().origin().latitude);
  w.put(map.frame().origin().longitude);
  w.put(map.frame().origin().altitude);
  w.put(map.grid_cell_m());

  w.put(static_cast<std::uint64_t>(map.vertices().size()));
  for (const auto& v : map.vertices()) {
    w.put(v.x);
    w.put(v.y);
  }

  w.put(static_cast<std::uint64_t>(map.edges().size()));
  for (const auto& edge : map.edges()) {
    w.put(edge.id);
    w.put(edge.vertex_a);
    w.put(edge.vertex_b);
    w.put(edge.lane_count);
    w.put(static_cast<std::uint64_t>(edge.waypoints.size()));
    for (const auto& wp : edge.waypoints) {
      w.put(wp.x);
      w.put(wp.y);
      w.put(wp.heading);
    }
  }

  // Grid index, cells sorted by key so the file is deterministic.
  std::vector<std::int64_t> keys;
  keys.reserve(map.grid_.size());
  for (const auto& [key, cell] : map.grid_) keys.push_back(key);
  std::sort(keys.begin(), keys.end());
  w.put(static_cast<std::uint64_t>(keys.size()));
  for (const std::int64_t key : keys) {
    const auto& cell = map.grid_.at(key);
    w.put(key);
    w.put(static_cast<std::uint64_t>(cell.size()));
    for (const std::uint64_t packed : cell) w.put(packed);
  }
  return std::move(w.bytes);
}

MapGraph load_map(const std::string& bytes) {
  Reader r(bytes);
  char magic[8];
  for (char& c : magic) c = r.get<char>();
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw MapIoError("not a map file (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion)
    throw MapIoError("unsupported map file version " + std::to_string(version));

  MapGraph map;
  geom::GeoPoint origin;
  origin.latitude = r.get<double>();
  origin.longitude = r.get<double>();
  origin.altitude = r.get<double>();
  map.frame_ = geom::LocalFrame(origin);
  map.grid_cell_m_ = r.get<double>();
  if (!(map.grid_cell_m_ > 0.0)) throw MapIoError("invalid grid cell size");

  const auto vertex_count = r.get_count(2 * sizeof(double));
  map.vertices_.reserve(vertex_count);
  for (std::uint64_t i = 0; i < vertex_count; ++i) {
    Vertex v;
    v.x = r.get<double>();
    v.y = r.get<double>();
    map.vertices_.push_back(v);
  }

  const auto edge_count = r.get_count(4 * sizeof(std::uint32_t));
  map.edges_.reserve(edge_count);
  for (std::uint64_t e = 0; e < edge_count; ++e) {
    RoadEdge edge;
    edge.id = r.get<std::uint32_t>();
    edge.vertex_a = r.get<std::uint32_t>();
    edge.vertex_b = r.get<std::uint32_t>();
    edge.lane_count = r.get<std::uint32_t>();
    if (edge.id != e) throw MapIoError("edge table out of order");
    if (edge.vertex_a >= map.vertices_.size() || edge.vertex_b >= map.vertices_.size())
      throw MapIoError("edge references missing vertex");
    if (edge.lane_count == 0) throw MapIoError("edge with zero lanes");
    const auto wp_count = r.get_count(3 * sizeof(double));
    if (wp_count < 2) throw MapIoError("edge with fewer than two waypoints");
    edge.waypoints.reserve(wp_count);
    for (std::uint64_t i = 0; i < wp_count; ++i) {
      MapPose wp;
      wp.x = r.get<double>();
      wp.y = r.get<double>();
      wp.heading = r.get<double>();
      wp.edge_id = edge.id;
      wp.index = static_cast<std::uint32_t>(i);
      edge.waypoints.push_back(wp);
    }
    map.edges_.push_back(std::move(edge));
  }

  const auto cell_count = r.get_count(sizeof(std::int64_t) + sizeof(std::uint64_t));
  for (std::uint64_t c = 0; c < cell_count; ++c) {
    const auto key = r.get<std::int64_t>();
    const auto entries = r.get_count(sizeof(std::uint64_t));
    auto& cell = map.grid_[key];
    cell.reserve(entries);
    for (std::uint64_t i = 0; i < entries; ++i) {
      const auto packed = r.get<std::uint64_t>();
      const auto edge_id = static_cast<std::uint32_t>(packed >> 32);
      const auto index = static_cast<std::uint32_t>(packed & 0xffffffffULL);
      if (edge_id >= map.edges_.size() || index >= map.edges_[edge_id].waypoints.size())
        throw MapIoError("grid index references missing waypoint");
      cell.push_back(packed);
    }
  }
  if (r.remaining() != 0) throw MapIoError("trailing bytes after map data");
  return map;
}

void save_map_file(const MapGraph& map, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw MapIoError("cannot open '" + path + "' for writing");
  const std::string bytes = serialize_map(map);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw MapIoError("write failure on '" + path + "'");
}

MapGraph load_map_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MapIoError("cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return load_map(bytes);
}

std::string map_debug_json(const MapGraph& map) {
  nlohmann::json doc;
  doc["origin"] = {{"lat", map.frame().origin().latitude},
                   {"lon", map.frame().origin().longitude},
                   {"alt", map.frame().origin().altitude}};
  doc["grid_cell_m"] = map.grid_cell_m();
  auto& vertices = doc["vertices"] = nlohmann::json::array();
  for (const auto& v : map.vertices()) vertices.push_back({{"x", v.x}, {"y", v.y}});
  auto& edges = doc["edges"] = nlohmann::json::array();
  for (const auto& edge : map.edges()) {
    nlohmann::json e;
    e["id"] = edge.id;
    e["vertex_a"] = edge.vertex_a;
    e["vertex_b"] = edge.vertex_b;
    e["lanes"] = edge.lane_count;
    e["road_width_m"] = edge.road_width();
    auto& wps = e["waypoints"] = nlohmann::json::array();
    for (const auto& wp : edge.waypoints)
      wps.push_back({{"x", wp.x}, {"y", wp.y}, {"heading", wp.heading}});
    edges.push_back(std::move(e));
  }
  return doc.dump(2);
}

}  // namespace mapfusion::mapgraph
