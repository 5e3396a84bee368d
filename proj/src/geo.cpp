#include "flowcast/geo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "flowcast/error.hpp"

namespace flowcast::geo {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
// Boundary tolerance in degrees (~1e-7 m).
constexpr double kEps = 1e-12;

double cross(const GeoPoint& o, const GeoPoint& a, const GeoPoint& b) {
  return (a.lon - o.lon) * (b.lat - o.lat) - (a.lat - o.lat) * (b.lon - o.lon);
}

int orientation(const GeoPoint& o, const GeoPoint& a, const GeoPoint& b) {
  const double c = cross(o, a, b);
  if (c > kEps) return 1;
  if (c < -kEps) return -1;
  return 0;
}

bool on_segment(const GeoPoint& a, const GeoPoint& b, const GeoPoint& p) {
  if (orientation(a, b, p) != 0) return false;
  return p.lon >= std::min(a.lon, b.lon) - kEps && p.lon <= std::max(a.lon, b.lon) + kEps &&
         p.lat >= std::min(a.lat, b.lat) - kEps && p.lat <= std::max(a.lat, b.lat) + kEps;
}

bool segments_intersect(const GeoPoint& p1, const GeoPoint& p2, const GeoPoint& q1,
                        const GeoPoint& q2) {
  const int o1 = orientation(p1, p2, q1);
  const int o2 = orientation(p1, p2, q2);
  const int o3 = orientation(q1, q2, p1);
  const int o4 = orientation(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(p1, p2, q1)) return true;
  if (o2 == 0 && on_segment(p1, p2, q2)) return true;
  if (o3 == 0 && on_segment(q1, q2, p1)) return true;
  if (o4 == 0 && on_segment(q1, q2, p2)) return true;
  return false;
}

// Crossing at a single point interior to both segments.
bool segments_cross_properly(const GeoPoint& p1, const GeoPoint& p2, const GeoPoint& q1,
                             const GeoPoint& q2) {
  const int o1 = orientation(p1, p2, q1);
  const int o2 = orientation(p1, p2, q2);
  const int o3 = orientation(q1, q2, p1);
  const int o4 = orientation(q1, q2, p2);
  return o1 * o2 < 0 && o3 * o4 < 0;
}

bool strictly_inside(const std::vector<GeoPoint>& ring, const GeoPoint& p) {
  return ring_contains(ring, p) && !on_ring_boundary(ring, p);
}

bool bounds_overlap(const BoundingBox& a, const BoundingBox& b) {
  return a.min_lon < b.max_lon && b.min_lon < a.max_lon && a.min_lat < b.max_lat &&
         b.min_lat < a.max_lat;
}

// A point strictly inside a simple polygon: scanline through the middle of
// the vertex latitudes, midpoint of the first inside span.
GeoPoint interior_point(const std::vector<GeoPoint>& ring) {
  std::vector<double> ys;
  ys.reserve(ring.size());
  for (const auto& p : ring) ys.push_back(p.lat);
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
  const std::size_t mid = ys.size() / 2;
  const double y = ys.size() >= 2 ? 0.5 * (ys[mid - 1] + ys[mid]) : ys.front();

  std::vector<double> xs;
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const GeoPoint& a = ring[i];
    const GeoPoint& b = ring[(i + 1) % n];
    if ((a.lat > y) != (b.lat > y)) {
      xs.push_back(a.lon + (y - a.lat) * (b.lon - a.lon) / (b.lat - a.lat));
    }
  }
  std::sort(xs.begin(), xs.end());
  if (xs.size() < 2) return ring.front();
  return {0.5 * (xs[0] + xs[1]), y};
}

std::vector<GeoPoint> open_ring(std::vector<GeoPoint> ring) {
  if (ring.size() >= 2 && ring.front() == ring.back()) ring.pop_back();
  return ring;
}

BoundingBox ring_bounds(const std::vector<GeoPoint>& ring) { return BoundingBox::around(ring); }

}  // namespace

void BoundingBox::expand(const GeoPoint& p) {
  min_lon = std::min(min_lon, p.lon);
  min_lat = std::min(min_lat, p.lat);
  max_lon = std::max(max_lon, p.lon);
  max_lat = std::max(max_lat, p.lat);
}

BoundingBox BoundingBox::around(const std::vector<GeoPoint>& points) {
  if (points.empty()) throw Error("bounding box of an empty point set");
  BoundingBox b{points[0].lon, points[0].lat, points[0].lon, points[0].lat};
  for (const auto& p : points) b.expand(p);
  return b;
}

LocalXY project_local(const GeoPoint& p, const GeoPoint& origin) {
  return {kEarthRadiusM * (p.lon - origin.lon) * std::cos(origin.lat * kDegToRad) * kDegToRad,
          kEarthRadiusM * (p.lat - origin.lat) * kDegToRad};
}

GeoPoint unproject_local(const LocalXY& xy, const GeoPoint& origin) {
  return {origin.lon + xy.x_m / (kEarthRadiusM * std::cos(origin.lat * kDegToRad) * kDegToRad),
          origin.lat + xy.y_m / (kEarthRadiusM * kDegToRad)};
}

bool on_ring_boundary(const std::vector<GeoPoint>& ring, const GeoPoint& p) {
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (on_segment(ring[i], ring[(i + 1) % n], p)) return true;
  }
  return false;
}

bool ring_contains(const std::vector<GeoPoint>& ring, const GeoPoint& p) {
  if (ring.size() < 3) return false;
  if (on_ring_boundary(ring, p)) return true;
  bool inside = false;
  const std::size_t n = ring.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const GeoPoint& a = ring[i];
    const GeoPoint& b = ring[j];
    if ((a.lat > p.lat) != (b.lat > p.lat)) {
      const double x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
      if (p.lon < x) inside = !inside;
    }
  }
  return inside;
}

bool ring_is_simple(const std::vector<GeoPoint>& ring) {
  const std::size_t n = ring.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    if (ring[i] == ring[(i + 1) % n]) return false;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      // Adjacent edges share exactly one endpoint.
      if (j == i + 1 || (i == 0 && j == n - 1)) {
        // Still reject a fold-back where the edges overlap collinearly.
        const GeoPoint& shared = (j == i + 1) ? ring[j] : ring[0];
        const GeoPoint& a = (j == i + 1) ? ring[i] : ring[1];
        const GeoPoint& b = (j == i + 1) ? ring[(j + 1) % n] : ring[n - 1];
        if (orientation(shared, a, b) == 0 &&
            ((a.lon - shared.lon) * (b.lon - shared.lon) + (a.lat - shared.lat) * (b.lat - shared.lat)) > 0) {
          return false;
        }
        continue;
      }
      if (segments_intersect(ring[i], ring[(i + 1) % n], ring[j], ring[(j + 1) % n])) return false;
    }
  }
  return true;
}

bool interiors_overlap(const std::vector<GeoPoint>& a, const std::vector<GeoPoint>& b) {
  if (!bounds_overlap(ring_bounds(a), ring_bounds(b))) return false;
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      if (segments_cross_properly(a[i], a[(i + 1) % na], b[j], b[(j + 1) % nb])) return true;
    }
  }
  auto probes_inside = [](const std::vector<GeoPoint>& from, const std::vector<GeoPoint>& into) {
    const std::size_t n = from.size();
    for (std::size_t i = 0; i < n; ++i) {
      const GeoPoint& p = from[i];
      const GeoPoint& q = from[(i + 1) % n];
      if (strictly_inside(into, p)) return true;
      if (strictly_inside(into, {0.5 * (p.lon + q.lon), 0.5 * (p.lat + q.lat)})) return true;
    }
    return strictly_inside(into, interior_point(from));
  };
  return probes_inside(a, b) || probes_inside(b, a);
}

Tessellation Tessellation::square(const BoundingBox& bbox, double side_m) {
  if (!(side_m > 0.0) || !std::isfinite(side_m)) throw Error("square grid side must be positive");
  if (!bbox.valid()) throw Error("square grid needs a bounding box with positive area");

  Tessellation t;
  t.kind_ = TessellationKind::square;
  t.bbox_ = bbox;
  t.origin_ = bbox.centroid();

  const LocalXY lo = project_local({bbox.min_lon, bbox.min_lat}, t.origin_);
  const LocalXY hi = project_local({bbox.max_lon, bbox.max_lat}, t.origin_);
  const double width = hi.x_m - lo.x_m;
  const double height = hi.y_m - lo.y_m;
  // Relative slack so a bbox built as an exact multiple of side_m does not
  // grow a sliver row from round-off.
  const auto cells = [side_m](double extent) {
    const double q = extent / side_m;
    return static_cast<std::size_t>(std::max(1.0, std::ceil(q - 1e-9 * std::max(1.0, q))));
  };
  t.grid_ = {side_m, cells(height), cells(width)};

  t.tiles_.reserve(t.grid_.rows * t.grid_.cols);
  for (std::size_t r = 0; r < t.grid_.rows; ++r) {
    for (std::size_t c = 0; c < t.grid_.cols; ++c) {
      const double x0 = lo.x_m + static_cast<double>(c) * side_m;
      const double y0 = lo.y_m + static_cast<double>(r) * side_m;
      Tile tile;
      tile.id = t.tiles_.size();
      tile.grid_pos = GridPos{r, c};
      tile.ring = {unproject_local({x0, y0}, t.origin_), unproject_local({x0 + side_m, y0}, t.origin_),
                   unproject_local({x0 + side_m, y0 + side_m}, t.origin_),
                   unproject_local({x0, y0 + side_m}, t.origin_)};
      tile.bounds = ring_bounds(tile.ring);
      t.tiles_.push_back(std::move(tile));
    }
  }
  return t;
}

Tessellation Tessellation::irregular(std::vector<std::vector<GeoPoint>> polygons,
                                     std::vector<std::string> labels) {
  if (polygons.empty()) throw Error("irregular tessellation needs at least one polygon");
  if (!labels.empty() && labels.size() != polygons.size()) {
    throw Error("tile label count does not match polygon count");
  }
  Tessellation t;
  t.kind_ = TessellationKind::irregular;
  t.labels_ = std::move(labels);
  t.tiles_.reserve(polygons.size());
  for (std::size_t i = 0; i < polygons.size(); ++i) {
    Tile tile;
    tile.id = i;
    tile.ring = open_ring(std::move(polygons[i]));
    for (const auto& p : tile.ring) {
      if (!p.valid()) throw Error("polygon " + std::to_string(i) + " has an out-of-range coordinate");
    }
    if (!ring_is_simple(tile.ring)) {
      throw Error("polygon " + std::to_string(i) + " is not a simple ring (self-intersecting or degenerate)");
    }
    tile.bounds = ring_bounds(tile.ring);
    t.tiles_.push_back(std::move(tile));
  }
  for (std::size_t i = 0; i < t.tiles_.size(); ++i) {
    for (std::size_t j = i + 1; j < t.tiles_.size(); ++j) {
      if (interiors_overlap(t.tiles_[i].ring, t.tiles_[j].ring)) {
        throw Error("polygons " + std::to_string(i) + " and " + std::to_string(j) + " overlap");
      }
    }
  }
  t.bbox_ = t.tiles_[0].bounds;
  for (const auto& tile : t.tiles_) {
    t.bbox_.expand({tile.bounds.min_lon, tile.bounds.min_lat});
    t.bbox_.expand({tile.bounds.max_lon, tile.bounds.max_lat});
  }
  t.origin_ = t.bbox_.centroid();
  return t;
}

std::optional<std::size_t> Tessellation::locate(const GeoPoint& p) const {
  if (kind_ == TessellationKind::square) {
    if (!bbox_.contains(p)) return std::nullopt;
    const LocalXY lo = project_local({bbox_.min_lon, bbox_.min_lat}, origin_);
    const LocalXY xy = project_local(p, origin_);
    const double fc = std::floor((xy.x_m - lo.x_m) / grid_.side_m);
    const double fr = std::floor((xy.y_m - lo.y_m) / grid_.side_m);
    const auto rows = static_cast<double>(grid_.rows);
    const auto cols = static_cast<double>(grid_.cols);
    // Candidates: the arithmetic cell plus its lower neighbours, so points
    // on a shared edge resolve to the lowest id. Ids grow with (row, col).
    for (double r = fr - 1; r <= fr; ++r) {
      if (r < 0 || r >= rows) continue;
      for (double c = fc - 1; c <= fc; ++c) {
        if (c < 0 || c >= cols) continue;
        const auto id = static_cast<std::size_t>(r) * grid_.cols + static_cast<std::size_t>(c);
        if (ring_contains(tiles_[id].ring, p)) return id;
      }
    }
    return std::nullopt;
  }
  for (const auto& tile : tiles_) {
    if (p.lon < tile.bounds.min_lon - kEps || p.lon > tile.bounds.max_lon + kEps ||
        p.lat < tile.bounds.min_lat - kEps || p.lat > tile.bounds.max_lat + kEps) {
      continue;
    }
    if (ring_contains(tile.ring, p)) return tile.id;
  }
  return std::nullopt;
}

double Tessellation::tile_area_m2(std::size_t id) const {
  const auto& ring = tile(id).ring;
  double twice = 0.0;
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const LocalXY a = project_local(ring[i], origin_);
    const LocalXY b = project_local(ring[(i + 1) % n], origin_);
    twice += a.x_m * b.y_m - b.x_m * a.y_m;
  }
  return std::abs(twice) * 0.5;
}

GeoPoint Tessellation::tile_centroid(std::size_t id) const {
  const auto& ring = tile(id).ring;
  double a2 = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const GeoPoint& p = ring[i];
    const GeoPoint& q = ring[(i + 1) % n];
    const double w = p.lon * q.lat - q.lon * p.lat;
    a2 += w;
    cx += (p.lon + q.lon) * w;
    cy += (p.lat + q.lat) * w;
  }
  if (std::abs(a2) < 1e-300) return ring.front();
  return {cx / (3.0 * a2), cy / (3.0 * a2)};
}

std::string Tessellation::describe() const {
  std::ostringstream os;
  os.precision(17);
  if (kind_ == TessellationKind::square) {
    os << "square:" << grid_.rows << "x" << grid_.cols << "@" << grid_.side_m << "m";
  } else {
    os << "irregular:" << tiles_.size();
  }
  return os.str();
}

Tessellation parse_geojson(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid GeoJSON: ") + e.what());
  }
  if (doc.value("type", "") != "FeatureCollection" || !doc.contains("features")) {
    throw Error("GeoJSON root must be a FeatureCollection");
  }
  std::vector<std::vector<GeoPoint>> rings;
  std::vector<std::string> labels;
  std::vector<long long> ids;
  bool all_int_ids = true;
  for (const auto& feature : doc["features"]) {
    const auto& geom = feature.at("geometry");
    if (geom.value("type", "") != "Polygon") {
      throw Error("GeoJSON feature " + std::to_string(rings.size()) + " is not a Polygon");
    }
    const auto& coords = geom.at("coordinates");
    if (coords.empty()) throw Error("GeoJSON polygon without rings");
    if (coords.size() > 1) {
      throw Error("GeoJSON feature " + std::to_string(rings.size()) + " has holes, which are not supported");
    }
    std::vector<GeoPoint> ring;
    for (const auto& pos : coords[0]) ring.push_back({pos.at(0).get<double>(), pos.at(1).get<double>()});
    rings.push_back(std::move(ring));

    std::string label;
    const auto props = feature.find("properties");
    if (props != feature.end() && props->is_object() && props->contains("id")) {
      const auto& id = (*props)["id"];
      if (id.is_number_integer()) {
        ids.push_back(id.get<long long>());
        label = std::to_string(id.get<long long>());
      } else {
        all_int_ids = false;
        label = id.is_string() ? id.get<std::string>() : id.dump();
      }
    } else {
      all_int_ids = false;
    }
    labels.push_back(std::move(label));
  }

  // Integer ids forming a permutation of 0..n-1 fix the tile order.
  if (all_int_ids && ids.size() == rings.size()) {
    std::vector<long long> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    bool permutation = true;
    for (std::size_t i = 0; i < sorted.size(); ++i) permutation = permutation && sorted[i] == static_cast<long long>(i);
    if (permutation) {
      std::vector<std::vector<GeoPoint>> ordered(rings.size());
      for (std::size_t i = 0; i < rings.size(); ++i) ordered[static_cast<std::size_t>(ids[i])] = std::move(rings[i]);
      return Tessellation::irregular(std::move(ordered));
    }
  }
  const bool any_label = std::any_of(labels.begin(), labels.end(), [](const auto& s) { return !s.empty(); });
  return Tessellation::irregular(std::move(rings), any_label ? std::move(labels) : std::vector<std::string>{});
}

Tessellation read_geojson(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open GeoJSON file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_geojson(ss.str());
}

std::string to_geojson(const Tessellation& t,
                       const std::vector<std::pair<std::string, std::vector<double>>>& properties) {
  for (const auto& [name, values] : properties) {
    if (values.size() != t.size()) throw Error("property '" + name + "' needs one value per tile");
  }
  nlohmann::json features = nlohmann::json::array();
  for (const auto& tile : t.tiles()) {
    nlohmann::json ring = nlohmann::json::array();
    for (const auto& p : tile.ring) ring.push_back({p.lon, p.lat});
    ring.push_back({tile.ring.front().lon, tile.ring.front().lat});

    nlohmann::json props = {{"id", tile.id}};
    if (tile.grid_pos) {
      props["row"] = tile.grid_pos->row;
      props["col"] = tile.grid_pos->col;
    }
    if (!t.labels().empty() && !t.labels()[tile.id].empty()) props["label"] = t.labels()[tile.id];
    for (const auto& [name, values] : properties) props[name] = values[tile.id];

    features.push_back({{"type", "Feature"},
                        {"properties", std::move(props)},
                        {"geometry", {{"type", "Polygon"}, {"coordinates", nlohmann::json::array({ring})}}}});
  }
  nlohmann::json doc = {{"type", "FeatureCollection"}, {"features", std::move(features)}};
  return doc.dump(1);
}

}  // namespace flowcast::geo
