#include <array>
#include <charconv>
#include <cstdlib>
#include <string>
#include <unordered_set>

#include <json.hpp>

#include "mapfusion/mapgraph.hpp"

namespace mapfusion::mapgraph {

namespace {

bool is_kept_highway(const std::string& value) {
  static const std::unordered_set<std::string> excluded = {"footway", "cycleway",
                                                           "path"};
  return !excluded.contains(value);
}

std::optional<std::uint32_t> parse_lanes(const std::string& value) {
  // OSM lane tags occasionally carry junk ("2; 3", "narrow"); keep strict.
  std::uint32_t lanes = 0;
  const char* begin = value.data();
  const char* end = begin + value.size();
  auto [ptr, ec] = std::from_chars(begin, end, lanes);
  if (ec != std::errc{} || ptr != end || lanes == 0) return std::nullopt;
  return lanes;
}

bool parse_oneway(const std::string& value) {
  return value == "yes" || value == "true" || value == "1" || value == "-1";
}

// Minimal XML reader for the flat OSM schema: node/way/nd/tag elements and
// their attributes. Tracks byte offsets for error reporting.
class XmlScanner {
 public:
  explicit XmlScanner(std::string_view data) : data_(data) {}

  struct Element {
    std::string_view name;
    std::vector<std::pair<std::string_view, std::string>> attributes;
    bool self_closing = false;
    bool closing = false;  // </name>
  };

  // Advances to the next element tag; false at end of input.
  bool next(Element& out) {
    while (pos_ < data_.size()) {
      const std::size_t lt = data_.find('<', pos_);
      if (lt == std::string_view::npos) {
        pos_ = data_.size();
        return false;
      }
      pos_ = lt;
      if (starts_with("<?")) {
        skip_until("?>", "unterminated XML declaration");
        continue;
      }
      if (starts_with("<!--")) {
        skip_until("-->", "unterminated comment");
        continue;
      }
      if (starts_with("<!")) {
        skip_until(">", "unterminated declaration");
        continue;
      }
      return read_element(out);
    }
    return false;
  }

  std::size_t offset() const { return pos_; }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw OsmParseError(msg, pos_);
  }

  bool starts_with(std::string_view prefix) const {
    return data_.substr(pos_, prefix.size()) == prefix;
  }

  void skip_until(std::string_view terminator, const char* what) {
    const std::size_t end = data_.find(terminator, pos_);
    if (end == std::string_view::npos) fail(what);
    pos_ = end + terminator.size();
  }

  static bool is_name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' ||
           c == ':' || c == '.';
  }

  void skip_space() {
    while (pos_ < data_.size() && std::isspace(static_cast<unsigned char>(data_[pos_])))
      ++pos_;
  }

  std::string_view read_name() {
    const std::size_t start = pos_;
    while (pos_ < data_.size() && is_name_char(data_[pos_])) ++pos_;
    if (pos_ == start) fail("expected name");
    return data_.substr(start, pos_ - start);
  }

  std::string decode_entities(std::string_view raw) {
    if (raw.find('&') == std::string_view::npos) return std::string(raw);
    std::string out;
    out.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size();) {
      if (raw[i] != '&') {
        out.push_back(raw[i++]);
        continue;
      }
      const std::size_t semi = raw.find(';', i);
      if (semi == std::string_view::npos) fail("unterminated entity reference");
      const std::string_view ent = raw.substr(i + 1, semi - i - 1);
      if (ent == "amp") out.push_back('&');
      else if (ent == "lt") out.push_back('<');
      else if (ent == "gt") out.push_back('>');
      else if (ent == "quot") out.push_back('"');
      else if (ent == "apos") out.push_back('\'');
      else if (!ent.empty() && ent[0] == '#') {
        const long code = std::strtol(std::string(ent.substr(1)).c_str(), nullptr,
                                      ent.size() > 1 && ent[1] == 'x' ? 16 : 10);
        if (code <= 0 || code > 0x7f) out.push_back('?');  // non-ASCII: irrelevant to tags we read
        else out.push_back(static_cast<char>(code));
      } else {
        fail("unknown entity reference");
      }
      i = semi + 1;
    }
    return out;
  }

  bool read_element(Element& out) {
    out = Element{};
    ++pos_;  // '<'
    if (pos_ < data_.size() && data_[pos_] == '/') {
      out.closing = true;
      ++pos_;
    }
    out.name = read_name();
    while (true) {
      skip_space();
      if (pos_ >= data_.size()) fail("unterminated element");
      if (data_[pos_] == '>') {
        ++pos_;
        return true;
      }
      if (data_[pos_] == '/') {
        ++pos_;
        if (pos_ >= data_.size() || data_[pos_] != '>') fail("malformed element end");
        ++pos_;
        out.self_closing = true;
        return true;
      }
      const std::string_view key = read_name();
      skip_space();
      if (pos_ >= data_.size() || data_[pos_] != '=') fail("expected '='");
      ++pos_;
      skip_space();
      if (pos_ >= data_.size() || (data_[pos_] != '"' && data_[pos_] != '\''))
        fail("expected quoted attribute value");
      const char quote = data_[pos_++];
      const std::size_t vstart = pos_;
      const std::size_t vend = data_.find(quote, vstart);
      if (vend == std::string_view::npos) fail("unterminated attribute value");
      pos_ = vend + 1;
      out.attributes.emplace_back(key,
                                  decode_entities(data_.substr(vstart, vend - vstart)));
    }
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

double require_double(const XmlScanner::Element& el, std::string_view key,
                      std::size_t offset) {
  for (const auto& [k, v] : el.attributes) {
    if (k == key) {
      char* end = nullptr;
      const double d = std::strtod(v.c_str(), &end);
      if (end != v.c_str() + v.size())
        throw OsmParseError("bad numeric attribute '" + std::string(key) + "'", offset);
      return d;
    }
  }
  throw OsmParseError("missing attribute '" + std::string(key) + "'", offset);
}

std::int64_t require_int(const XmlScanner::Element& el, std::string_view key,
                         std::size_t offset) {
  for (const auto& [k, v] : el.attributes) {
    if (k == key) {
      std::int64_t i = 0;
      auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), i);
      if (ec != std::errc{} || ptr != v.data() + v.size())
        throw OsmParseError("bad integer attribute '" + std::string(key) + "'", offset);
      return i;
    }
  }
  throw OsmParseError("missing attribute '" + std::string(key) + "'", offset);
}

struct PendingWay {
  std::int64_t id = 0;
  std::vector<std::int64_t> node_refs;
  std::vector<std::pair<std::string, std::string>> tags;
};

// Keeps a way when tagged as a road; fills lanes/oneway.
std::optional<OsmWay> finish_way(const PendingWay& pending) {
  std::optional<std::string> highway;
  OsmWay way;
  way.id = pending.id;
  way.node_refs = pending.node_refs;
  for (const auto& [k, v] : pending.tags) {
    if (k == "highway") highway = v;
    else if (k == "lanes") way.lanes = parse_lanes(v);
    else if (k == "oneway") way.oneway = parse_oneway(v);
  }
  if (!highway || !is_kept_highway(*highway)) return std::nullopt;
  return way;
}

void prune_and_validate(RawOsmExtract& extract) {
  // Drop ways referencing missing nodes, then keep only referenced nodes.
  std::vector<OsmWay> kept;
  kept.reserve(extract.ways.size());
  for (auto& way : extract.ways) {
    bool complete = true;
    for (const std::int64_t ref : way.node_refs) {
      if (!extract.nodes.contains(ref)) {
        complete = false;
        break;
      }
    }
    if (complete) kept.push_back(std::move(way));
    else ++extract.dropped_ways;
  }
  extract.ways = std::move(kept);

  std::unordered_set<std::int64_t> referenced;
  for (const auto& way : extract.ways)
    referenced.insert(way.node_refs.begin(), way.node_refs.end());
  std::erase_if(extract.nodes,
                [&](const auto& kv) { return !referenced.contains(kv.first); });
}

RawOsmExtract parse_osm_xml(std::string_view data) {
  RawOsmExtract extract;
  XmlScanner scanner(data);
  XmlScanner::Element el;
  std::optional<PendingWay> current_way;

  while (scanner.next(el)) {
    if (el.closing) {
      if (el.name == "way" && current_way) {
        if (auto way = finish_way(*current_way)) extract.ways.push_back(std::move(*way));
        current_way.reset();
      }
      continue;
    }
    const std::size_t at = scanner.offset();
    if (el.name == "node") {
      geom::GeoPoint p;
      p.latitude = require_double(el, "lat", at);
      p.longitude = require_double(el, "lon", at);
      if (!p.is_valid()) throw OsmParseError("node coordinate out of range", at);
      extract.nodes[require_int(el, "id", at)] = p;
    } else if (el.name == "way") {
      PendingWay pending;
      pending.id = require_int(el, "id", at);
      if (el.self_closing) continue;  // empty way, nothing to keep
      current_way = std::move(pending);
    } else if (el.name == "nd" && current_way) {
      current_way->node_refs.push_back(require_int(el, "ref", at));
    } else if (el.name == "tag" && current_way) {
      std::string k, v;
      for (const auto& [key, value] : el.attributes) {
        if (key == "k") k = value;
        else if (key == "v") v = value;
      }
      current_way->tags.emplace_back(std::move(k), std::move(v));
    }
    // node-level tags and all other elements (bounds, relation, member) skipped
  }
  if (current_way) throw OsmParseError("unterminated <way>", scanner.offset());
  prune_and_validate(extract);
  return extract;
}

RawOsmExtract parse_overpass_json(std::string_view data) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(data);
  } catch (const nlohmann::json::parse_error& e) {
    throw OsmParseError(std::string("JSON parse failure: ") + e.what(), e.byte);
  }
  RawOsmExtract extract;
  if (!doc.contains("elements")) return extract;
  for (const auto& element : doc["elements"]) {
    const std::string type = element.value("type", "");
    if (type == "node") {
      geom::GeoPoint p;
      p.latitude = element.value("lat", 0.0);
      p.longitude = element.value("lon", 0.0);
      if (!p.is_valid()) throw OsmParseError("node coordinate out of range", 0);
      extract.nodes[element.value("id", std::int64_t{0})] = p;
    } else if (type == "way") {
      PendingWay pending;
      pending.id = element.value("id", std::int64_t{0});
      for (const auto& ref : element.value("nodes", nlohmann::json::array()))
        pending.node_refs.push_back(ref.get<std::int64_t>());
      if (element.contains("tags")) {
        for (const auto& [k, v] : element["tags"].items())
          pending.tags.emplace_back(k, v.get<std::string>());
      }
      if (auto way = finish_way(pending)) extract.ways.push_back(std::move(*way));
    }
  }
  prune_and_validate(extract);
  return extract;
}

}  // namespace

RawOsmExtract parse_osm(std::string_view data, OsmFormat format) {
  return format == OsmFormat::xml ? parse_osm_xml(data) : parse_overpass_json(data);
}

}  // namespace mapfusion::mapgraph
